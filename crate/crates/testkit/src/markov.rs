use cusprune::Document;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First-order Markov chain over a letter alphabet.
#[derive(Clone, Debug)]
pub struct MarkovLanguage {
    pub name: String,
    pub symbols: Vec<char>,
    /// Cumulative transition probabilities per state.
    cumulative: Vec<Vec<f64>>,
}

impl MarkovLanguage {
    /// Each state moves to `branching` random successors with random weights.
    pub fn random(name: &str, symbols: &[char], branching: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = symbols.len();
        let cumulative = (0..n)
            .map(|_| {
                let mut p = vec![0.0; n];
                for j in sample(&mut rng, n, branching.min(n)) {
                    p[j] = rng.random_range(0.2..1.0);
                }
                let z: f64 = p.iter().sum();
                let mut acc = 0.0;
                p.iter()
                    .map(|v| {
                        acc += v / z;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self {
            name: name.into(),
            symbols: symbols.to_vec(),
            cumulative,
        }
    }

    /// Letters `a`..=`l`.
    pub fn a(seed: u64) -> Self {
        let s: Vec<char> = ('a'..='l').collect();
        Self::random("A", &s, 3, seed)
    }

    /// Letters `m`..=`x`.
    pub fn b(seed: u64) -> Self {
        let s: Vec<char> = ('m'..='x').collect();
        Self::random("B", &s, 3, seed)
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> String {
        let mut state = rng.random_range(0..self.symbols.len());
        let mut out = String::with_capacity(len);
        for _ in 0..len {
            out.push(self.symbols[state]);
            let u: f64 = rng.random();
            let row = &self.cumulative[state];
            state = row.iter().position(|&c| u < c).unwrap_or(row.len() - 1);
        }
        out
    }

    /// `n` documents tagged with this language and cycling domains and tasks.
    pub fn documents(&self, n: usize, len: usize, seed: u64) -> Vec<Document> {
        const DOMAINS: [&str; 3] = ["news", "law", "medical"];
        const TASKS: [&str; 3] = ["qa", "sum", "mcq"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Document {
                id: format!("{}-{i}", self.name),
                text: self.sample(len, &mut rng),
                language: self.name.clone(),
                domain: DOMAINS[i % 3].into(),
                task: TASKS[(i / 3) % 3].into(),
            })
            .collect()
    }
}
