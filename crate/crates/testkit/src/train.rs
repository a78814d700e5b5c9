use cusprune::model::{ModelConfig, WeightStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::reference::{backward, next_token_loss, run, zeros_like};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub window: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch: 8,
            window: 32,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// Adam on next-token loss over random windows of `data`.
/// Returns the trained weights and the per-step mean loss.
pub fn train(
    config: &ModelConfig,
    init: &WeightStore<f64>,
    data: &[Vec<u32>],
    tc: &TrainConfig,
) -> (WeightStore<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut w = init.clone();
    let mut m = zeros_like(&w);
    let mut v = zeros_like(&w);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut history = Vec::with_capacity(tc.steps);
    for step in 1..=tc.steps {
        let batch: Vec<Vec<u32>> = (0..tc.batch)
            .map(|_| {
                let doc = &data[rng.random_range(0..data.len())];
                let len = tc.window.min(doc.len());
                let start = rng.random_range(0..=doc.len() - len);
                doc[start..start + len].to_vec()
            })
            .collect();
        let n: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
        let parts: Vec<(f64, WeightStore<f64>)> = batch
            .par_iter()
            .map(|ids| {
                let cache = run(config, &w, ids);
                let (loss, dl) = next_token_loss(&cache, config.vocab_size, 1.0 / n as f64);
                let mut g = zeros_like(&w);
                backward(config, &w, &cache, &dl, &mut g);
                (loss, g)
            })
            .collect();
        let mut grads = zeros_like(&w);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (name, t) in g.iter() {
                let acc = grads.get_mut(name).unwrap();
                acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
            }
        }
        history.push(loss / n as f64);
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        let names: Vec<String> = w.iter().map(|(n, _)| n.clone()).collect();
        for name in names {
            let g = grads.get(&name).unwrap().data().to_vec();
            let mt = m.get_mut(&name).unwrap().data_mut();
            let vt = v.get_mut(&name).unwrap().data_mut();
            let p = w.get_mut(&name).unwrap().data_mut();
            for i in 0..p.len() {
                mt[i] = b1 * mt[i] + (1.0 - b1) * g[i];
                vt[i] = b2 * vt[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= tc.lr * (mt[i] / c1) / ((vt[i] / c2).sqrt() + eps);
            }
        }
    }
    (w, history)
}
