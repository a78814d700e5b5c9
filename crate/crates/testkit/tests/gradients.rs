use cusprune::model::WeightStore;
use cusprune_testkit::reference::{loss, loss_and_grad};
use cusprune_testkit::{letter_vocab, ragged_config, random_weights, train, MarkovLanguage, ToySpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(config: &cusprune::ModelConfig, w: &WeightStore<f64>, batch: &[Vec<u32>], seed: u64) {
    let (_, grads) = loss_and_grad(config, w, batch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (name, t) in w.iter() {
        if t.numel() == 0 {
            continue;
        }
        for _ in 0..4 {
            let i = rng.random_range(0..t.numel());
            let mut plus = w.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += h;
            let mut minus = w.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= h;
            let fd = (loss(config, &plus, batch) - loss(config, &minus, batch)) / (2.0 * h);
            let an = grads.get(name).unwrap().data()[i];
            let err = (fd - an).abs() / (fd.abs().max(an.abs()).max(1e-4));
            assert!(err < 1e-5, "{name}[{i}]: fd {fd} analytic {an}");
            worst = worst.max(err);
        }
    }
    eprintln!("worst relative gradient error {worst:.2e}");
}

#[test]
fn gradients_match_finite_differences() {
    let spec = ToySpec {
        n_layers: 2,
        d_model: 8,
        n_heads: 2,
        d_ff: 6,
        vocab_size: 11,
        max_seq_len: 16,
    };
    let config = spec.config();
    let w = random_weights::<f64>(&config, 3);
    let batch = vec![vec![1, 4, 2, 9, 3, 3, 10], vec![5, 0, 7]];
    check(&config, &w, &batch, 1);
}

#[test]
fn gradients_match_on_ragged_shapes() {
    let base = ToySpec {
        n_layers: 3,
        d_model: 8,
        n_heads: 2,
        d_ff: 6,
        vocab_size: 11,
        max_seq_len: 16,
    }
    .config();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in 0..3 {
        let config = ragged_config(&base, &mut rng);
        let w = random_weights::<f64>(&config, s);
        check(&config, &w, &[vec![2, 8, 1, 1, 6, 4]], s);
    }
}

#[test]
fn training_reduces_loss() {
    let spec = ToySpec::default();
    let config = spec.config();
    let vocab = letter_vocab();
    let docs = MarkovLanguage::a(1).documents(8, 64, 2);
    let data: Vec<Vec<u32>> = docs.iter().map(|d| vocab.tokenize(&d.text)).collect();
    let init = random_weights::<f64>(&config, 4);
    let tc = TrainConfig {
        steps: 60,
        ..TrainConfig::default()
    };
    let (w, hist) = train(&config, &init, &data, &tc);
    let before = loss(&config, &init, &data);
    let after = loss(&config, &w, &data);
    assert!(after < 0.7 * before, "{before} -> {after}");
    assert_eq!(hist.len(), 60);
}

#[test]
fn markov_languages_use_disjoint_letters() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = MarkovLanguage::a(1).sample(200, &mut rng);
    let b = MarkovLanguage::b(1).sample(200, &mut rng);
    assert!(a.chars().all(|c| ('a'..='l').contains(&c)));
    assert!(b.chars().all(|c| ('m'..='x').contains(&c)));
    let docs = MarkovLanguage::a(1).documents(9, 10, 5);
    assert_eq!(docs.len(), 9);
    assert_eq!(docs[4].domain, "law");
    assert_eq!(docs[4].task, "sum");
}
