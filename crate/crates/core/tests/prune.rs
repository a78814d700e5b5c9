use std::collections::BTreeSet;

use cusprune::corpus::build_dimension_corpus;
use cusprune::model::{forward, WeightStore};
use cusprune::prune::{
    aggressive_plan, apply_plan, calibrate, layer_baseline_plan, layer_scores_tokens, plan_for_tau, score_corpora,
    CalibrateOptions, PhaseKind, PrunePlan, RATIO_TOLERANCE,
};
use cusprune::relevance::{irrelevant_set, DocMeta};
use cusprune::tensor::Tensor;
use cusprune::{
    enumerate_neurons, DimensionCorpus, Document, ImpactMatrix, ModelConfig, NeuronId, NeuronUniverse, ScoreConfig,
};
use cusprune_testkit::reference::run;
use cusprune_testkit::{letter_vocab, random_weights, MarkovLanguage, ToySpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(n_layers: usize, d_ff: usize) -> ModelConfig {
    ToySpec {
        n_layers,
        d_model: 8,
        n_heads: 2,
        d_ff,
        vocab_size: 25,
        max_seq_len: 48,
    }
    .config()
}

fn docs(seed: u64) -> Vec<Document> {
    let mut d = MarkovLanguage::a(seed).documents(8, 40, seed + 1);
    d.extend(MarkovLanguage::b(seed).documents(8, 40, seed + 2));
    d
}

fn corpus(docs: &[Document], spec: &str) -> DimensionCorpus {
    build_dimension_corpus(docs, &spec.parse().unwrap()).unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa * bb).sqrt()
}

/// Mean input/output cosine of every block, recomputed from the f64
/// reference residual stream.
fn oracle_importance(config: &ModelConfig, w: &WeightStore<f64>, seqs: &[Vec<u32>]) -> Vec<f64> {
    let d = config.d_model;
    let mut sums = vec![0.0; config.n_layers];
    let mut tokens = 0;
    for ids in seqs {
        let cache = run(config, w, ids);
        for (l, s) in sums.iter_mut().enumerate() {
            let (x, y) = (cache.residual(l), cache.residual(l + 1));
            for t in 0..ids.len() {
                *s += cos(&x[t * d..(t + 1) * d], &y[t * d..(t + 1) * d]);
            }
        }
        tokens += ids.len();
    }
    sums.iter().map(|s| 1.0 - s / tokens as f64).collect()
}

fn seqs(seed: u64, n: usize, len: usize) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..len).map(|_| rng.random_range(0..25)).collect())
        .collect()
}

#[test]
fn layer_scores_match_reference_recomputation() {
    let c = toy(3, 12);
    for seed in 0..4 {
        let w = random_weights::<f64>(&c, seed);
        let s = seqs(seed, 3, 10 + seed as usize);
        let oracle = oracle_importance(&c, &w, &s);
        let got = layer_scores_tokens(&c, &w, &s).unwrap();
        assert!(got.windows(2).all(|p| p[0].importance <= p[1].importance));
        for ls in &got {
            assert!(
                (ls.importance - oracle[ls.layer]).abs() < 1e-6,
                "{} vs {}",
                ls.importance,
                oracle[ls.layer]
            );
        }
        let got32 = layer_scores_tokens(&c, &w.cast::<f32>(), &s).unwrap();
        for ls in &got32 {
            assert!((ls.importance - oracle[ls.layer]).abs() < 1e-4);
        }
    }
}

#[test]
fn zero_layer_scores_zero() {
    let c = toy(3, 12);
    let mut w = random_weights::<f64>(&c, 1);
    for (name, shape) in c.tensor_shapes() {
        if name.starts_with("layer.1.") && shape.len() == 2 {
            w.insert(name, Tensor::zeros(&shape));
        }
    }
    let scores = layer_scores_tokens(&c, &w, &seqs(2, 2, 9)).unwrap();
    assert_eq!(scores[0].layer, 1);
    assert!(scores[0].importance < 1e-12, "{}", scores[0].importance);
}

#[test]
fn negating_layer_scores_two() {
    let c = ModelConfig::dense(1, 4, 2, 4, 8, 16);
    let mut w = WeightStore::<f64>::zeros_for(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in w.get_mut("embed").unwrap().data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut eye = Tensor::zeros(&[4, 4]);
    let mut neg = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.row_mut(i)[i] = 1.0;
        neg.row_mut(i)[i] = -100.0;
    }
    w.insert("layer.0.attn.wv", eye);
    w.insert("layer.0.attn.wo", neg);
    let s: Vec<Vec<u32>> = (0..8).map(|t| vec![t; 5]).collect();
    let scores = layer_scores_tokens(&c, &w, &s).unwrap();
    assert!((scores[0].importance - 2.0).abs() < 1e-9, "{}", scores[0].importance);
}

#[test]
fn layer_scoring_rejects_empty_input() {
    let c = toy(2, 8);
    let w = random_weights::<f32>(&c, 0);
    assert!(layer_scores_tokens(&c, &w, &[]).is_err());
    assert!(layer_scores_tokens(&c, &w, &[vec![]]).is_err());
}

#[test]
fn aggressive_budget_edges() {
    let c = toy(2, 16);
    let w: WeightStore = random_weights(&c, 5);
    let vocab = letter_vocab();
    let d = docs(1);
    let corpora = vec![corpus(&d, "lang=A")];
    let opts = CalibrateOptions {
        force_closest: true,
        ..CalibrateOptions::default()
    };
    assert!(aggressive_plan(&c, &w, &vocab, &corpora, 0.3, 2, &opts).is_err());
    let u = enumerate_neurons(&c).unwrap();
    let plain = calibrate(&c, &w, &vocab, &corpora, &u, 0.3, &opts).unwrap();
    let zero = aggressive_plan(&c, &w, &vocab, &corpora, 0.3, 0, &opts).unwrap();
    assert_eq!(plain, zero);
    assert!(aggressive_plan(&c, &w, &vocab, &corpora, 0.0, 0, &opts).is_err());
}

/// Worst rank of every pool neuron over all documents of all dimensions,
/// ranking by impact with ties broken by canonical order.
fn worst_ranks(impacts: &[ImpactMatrix], u: &NeuronUniverse) -> Vec<usize> {
    let pool = u.pool();
    let mut worst = vec![0usize; pool.len()];
    for m in impacts {
        for d in 0..m.n_docs() {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| m.get(pool[a], d).total_cmp(&m.get(pool[b], d)).then(a.cmp(&b)));
            for (r, &i) in order.iter().enumerate() {
                worst[i] = worst[i].max(r);
            }
        }
    }
    worst
}

/// Scan every per-document count and keep the removal closest to `target`
/// that does not exceed `target + tol`, ties to the smaller plan.
fn count_scan(impacts: &[ImpactMatrix], u: &NeuronUniverse, target: f64, tol: f64) -> (usize, BTreeSet<NeuronId>, u64) {
    let pool = u.pool();
    let worst = worst_ranks(impacts, u);
    let mut best: Option<(usize, BTreeSet<NeuronId>, u64)> = None;
    for k in 0..=pool.len() {
        let set: BTreeSet<NeuronId> = (0..pool.len())
            .filter(|&i| worst[i] < k)
            .map(|i| u.ids()[pool[i]])
            .collect();
        let removed: u64 = set.iter().map(|n| u.weight(n).unwrap()).sum();
        let better = match &best {
            None => true,
            Some((_, _, r)) => (removed as f64 - target).abs() < (*r as f64 - target).abs(),
        };
        if better && removed as f64 <= target + tol {
            best = Some((k, set, removed));
        }
    }
    best.unwrap()
}

#[test]
fn two_dimension_calibration_matches_count_scan() {
    let c = ToySpec {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 64,
        vocab_size: 25,
        max_seq_len: 48,
    }
    .config();
    let w: WeightStore = random_weights(&c, 8);
    let vocab = letter_vocab();
    let u = enumerate_neurons(&c).unwrap();
    let d = docs(4);
    let corpora = vec![corpus(&d, "lang=A"), corpus(&d, "domain=news")];
    let impacts = score_corpora(&c, &w, &vocab, &corpora, &u, 512).unwrap();
    let plan = calibrate(&c, &w, &vocab, &corpora, &u, 0.25, &CalibrateOptions::default()).unwrap();
    let total = u.total_params() as f64;
    let (k, set, removed) = count_scan(&impacts, &u, 0.25 * total, RATIO_TOLERANCE * total);
    assert!(
        (plan.achieved_ratio - 0.25).abs() <= RATIO_TOLERANCE,
        "{}",
        plan.achieved_ratio
    );
    assert_eq!(plan.neurons().copied().collect::<BTreeSet<_>>(), set);
    assert_eq!(plan.provenance.removed_params, removed);
    assert!(plan.tau <= 100.0 * k as f64 / u.pool().len() as f64 + 1e-9);
}

#[test]
fn full_percentile_takes_the_whole_pool() {
    let c = toy(2, 12);
    let w: WeightStore = random_weights(&c, 2);
    let vocab = letter_vocab();
    let u = enumerate_neurons(&c).unwrap();
    let d = docs(2);
    let impacts = score_corpora(&c, &w, &vocab, &[corpus(&d, "task=qa")], &u, 512).unwrap();
    let plan = plan_for_tau(&u, &impacts, 100.0, Some(9)).unwrap();
    let pool: BTreeSet<NeuronId> = u.pool().iter().map(|&p| u.ids()[p]).collect();
    assert_eq!(plan.neurons().copied().collect::<BTreeSet<_>>(), pool);
    let pool_params: u64 = pool.iter().map(|n| u.weight(n).unwrap()).sum();
    assert_eq!(plan.provenance.removed_params, pool_params);
    assert_eq!(plan.provenance.seed, Some(9));
    let (pc, pw) = apply_plan(&c, &w, &plan).unwrap();
    let (logits, _) = forward::forward(&pc, &pw, &[1, 2, 3], false).unwrap();
    assert!(logits.data().iter().all(|v| v.is_finite()));
}

#[test]
fn aggressive_neuron_phase_matches_scan_on_reduced_model() {
    let c = toy(3, 16);
    let w: WeightStore = random_weights(&c, 12);
    let vocab = letter_vocab();
    let d = docs(6);
    let corpora = vec![corpus(&d, "lang=B"), corpus(&d, "task=sum")];
    let opts = CalibrateOptions {
        force_closest: true,
        ..CalibrateOptions::default()
    };
    let plan = aggressive_plan(&c, &w, &vocab, &corpora, 0.45, 1, &opts).unwrap();
    assert_eq!(plan.phases.len(), 2);
    assert_eq!(plan.phases[0].kind, PhaseKind::Layer);

    let seqs: Vec<Vec<u32>> = d
        .iter()
        .filter(|x| corpora.iter().any(|c| c.documents.contains(x)))
        .map(|x| vocab.tokenize(&x.text))
        .collect();
    let imp = oracle_importance(&c, &w.cast::<f64>(), &seqs);
    let lowest = (0..3).min_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
    assert_eq!(plan.phases[0].ids, vec![NeuronId::layer_unit(lowest)]);

    let layer_plan = PrunePlan::manual(&c, &w, plan.phases[0].ids.clone(), vec![]).unwrap();
    let (rc, rw) = apply_plan(&c, &w, &layer_plan).unwrap();
    let ru = enumerate_neurons(&rc).unwrap();
    let impacts = score_corpora(&rc, &rw, &vocab, &corpora, &ru, 512).unwrap();
    let target = 0.45 * c.param_count() as f64 - layer_plan.provenance.removed_params as f64;
    let (_, set, _) = count_scan(&impacts, &ru, target, RATIO_TOLERANCE * c.param_count() as f64);
    let survivors: Vec<usize> = (0..3).filter(|&l| l != lowest).collect();
    let mapped: BTreeSet<NeuronId> = set.iter().map(|n| n.with_layer(survivors[n.layer])).collect();
    assert_eq!(plan.phases[1].ids.iter().copied().collect::<BTreeSet<_>>(), mapped);

    let (pc, _) = apply_plan(&c, &w, &plan).unwrap();
    assert_eq!(pc.n_layers, 2);
    assert_eq!(pc.param_count(), c.param_count() - plan.provenance.removed_params);
}

#[test]
fn apply_plan_shrinks_ffn_and_empties_layers() {
    let c = toy(2, 12);
    let w: WeightStore = random_weights(&c, 4);
    let four: Vec<NeuronId> = [0, 3, 5, 11].iter().map(|&i| NeuronId::ffn(0, i)).collect();
    let plan = PrunePlan::manual(&c, &w, vec![], four).unwrap();
    let (pc, pw) = apply_plan(&c, &w, &plan).unwrap();
    assert_eq!(pw.get("layer.0.ffn.up").unwrap().shape(), &[8, 8]);
    assert_eq!(pw.get("layer.0.ffn.gate").unwrap().shape(), &[8, 8]);
    assert_eq!(pw.get("layer.0.ffn.down").unwrap().shape(), &[8, 8]);
    assert_eq!(pc.layer_shape(0).d_ff, 8);
    assert_eq!(pc.layer_shape(1).d_ff, 12);

    let all: Vec<NeuronId> = (0..12).map(|i| NeuronId::ffn(1, i)).collect();
    let plan = PrunePlan::manual(&c, &w, vec![], all).unwrap();
    let (pc, pw) = apply_plan(&c, &w, &plan).unwrap();
    assert_eq!(pc.layer_shape(1).d_ff, 0);
    let mut zeroed = w.clone();
    zeroed.insert("layer.1.ffn.down", Tensor::zeros(&[8, 12]));
    let ids = [4, 8, 15, 16, 23];
    let (a, _) = forward::forward(&pc, &pw, &ids, false).unwrap();
    let (b, _) = forward::forward(&c, &zeroed, &ids, false).unwrap();
    assert_eq!(a.data(), b.data());
}

fn random_matrix(u: &NeuronUniverse, docs: usize, seed: u64, levels: u32) -> ImpactMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..docs)
        .map(|_| (0..u.len()).map(|_| rng.random_range(0..levels) as f64).collect())
        .collect();
    let meta = (0..docs)
        .map(|d| DocMeta {
            id: format!("d{d}"),
            language: "x".into(),
            domain: "y".into(),
            task: "z".into(),
        })
        .collect();
    ImpactMatrix::from_columns(cols, meta, "language:x", "fp").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_size_is_monotone_in_tau(seed in 0u64..10_000, t1 in 0.0f64..=100.0, t2 in 0.0f64..=100.0, levels in 1u32..20) {
        let u = enumerate_neurons(&toy(2, 10)).unwrap();
        let impacts = vec![random_matrix(&u, 3, seed, levels), random_matrix(&u, 2, seed + 1, levels)];
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = plan_for_tau(&u, &impacts, lo, None).unwrap();
        let b = plan_for_tau(&u, &impacts, hi, None).unwrap();
        let sa: BTreeSet<_> = a.neurons().copied().collect();
        let sb: BTreeSet<_> = b.neurons().copied().collect();
        prop_assert!(sa.is_subset(&sb));
        prop_assert!(a.provenance.removed_params <= b.provenance.removed_params);
    }

    #[test]
    fn document_order_does_not_change_the_set(seed in 0u64..10_000, tau in 0.0f64..=100.0, levels in 1u32..20) {
        let u = enumerate_neurons(&toy(2, 10)).unwrap();
        let m = random_matrix(&u, 5, seed, levels);
        let mut order: Vec<usize> = (0..5).collect();
        order.rotate_left((seed % 5) as usize);
        order.swap(0, 4);
        let cfg = ScoreConfig::with_tau(tau);
        let a = irrelevant_set(&m, &u, &cfg).unwrap();
        let b = irrelevant_set(&m.permute_docs(&order), &u, &cfg).unwrap();
        prop_assert_eq!(a.neurons, b.neurons);
    }
}

#[test]
fn layer_baseline_drops_only_the_lowest_layers() {
    let c = toy(3, 16);
    let w: WeightStore = random_weights(&c, 21);
    let vocab = letter_vocab();
    let d = docs(3);
    let corpora = vec![corpus(&d, "lang=A")];
    let opts = CalibrateOptions::default();
    let plan = layer_baseline_plan(&c, &w, &vocab, &corpora, 2, &opts).unwrap();
    let mut expected: Vec<usize> = plan.provenance.layer_scores.iter().take(2).map(|s| s.layer).collect();
    expected.sort_unstable();
    assert_eq!(plan.phases.len(), 1);
    assert_eq!(
        plan.phases[0].ids,
        expected.into_iter().map(NeuronId::layer_unit).collect::<Vec<_>>()
    );
    let (pc, pw) = apply_plan(&c, &w, &plan).unwrap();
    assert_eq!(pc.n_layers, 1);
    assert_eq!(pw.param_count(), c.param_count() - plan.provenance.removed_params);
    assert!(layer_baseline_plan(&c, &w, &vocab, &corpora, 3, &opts).is_err());
    assert!(layer_baseline_plan(&c, &w, &vocab, &corpora, 0, &opts).is_err());
}
