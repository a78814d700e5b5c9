use cusprune::eval::{
    bench_speed, expert_report, forward_flops, mcq_accuracy, mcq_choice, perplexity, retention, EvalData, EvalDataset,
    McqItem, Metric,
};
use cusprune::model::{forward::log_softmax_row, WeightStore};
use cusprune::prune::{apply_plan, PrunePlan};
use cusprune::tensor::Tensor;
use cusprune::{Bundle, ModelConfig, NeuronId};
use cusprune_testkit::reference::reference_logits;
use cusprune_testkit::{letter_vocab, random_weights, train, MarkovLanguage, ToySpec, TrainConfig};

fn zero_model(config: &ModelConfig) -> WeightStore<f64> {
    let mut w = WeightStore::zeros_for(config);
    for (name, shape) in config.tensor_shapes() {
        if shape.len() == 2 {
            w.insert(name, Tensor::zeros(&shape));
        }
    }
    w
}

#[test]
fn uniform_model_has_vocab_perplexity() {
    let c = ModelConfig::dense(1, 8, 2, 8, 256, 64);
    let w = zero_model(&c);
    let docs = vec![(0..40).map(|i| i * 5 % 256).collect::<Vec<u32>>(), vec![1, 2, 3]];
    let ppl = perplexity(&c, &w, &docs).unwrap();
    assert!((ppl - 256.0).abs() < 1e-6, "{ppl}");
    let w32 = w.cast::<f32>();
    assert!((perplexity(&c, &w32, &docs).unwrap() - 256.0).abs() < 1e-6);
}

#[test]
fn confident_single_token_model_approaches_one() {
    let c = ModelConfig::dense(1, 8, 2, 8, 16, 128);
    let mut w = zero_model(&c);
    let tok = 7usize;
    w.get_mut("embed").unwrap().row_mut(tok).fill(1.0);
    let mut last = f64::INFINITY;
    for scale in [1.0, 2.0, 4.0] {
        w.get_mut("unembed").unwrap().row_mut(tok).fill(scale);
        let ppl = perplexity(&c, &w, &[vec![tok as u32; 100]]).unwrap();
        assert!(ppl >= 1.0 && ppl < last);
        last = ppl;
    }
    assert!(last < 1.0 + 1e-9, "{last}");
}

#[test]
fn perplexity_matches_per_token_recomputation() {
    let c = ToySpec::default().config();
    let w = random_weights::<f64>(&c, 9);
    let docs: Vec<Vec<u32>> = (0..4)
        .map(|d| (0..(5 + d * 3)).map(|i| ((i * 7 + d) % 25) as u32).collect())
        .collect();
    let mut nll = 0.0;
    let mut n = 0;
    for ids in &docs {
        for t in 1..ids.len() {
            let rows = reference_logits(&c, &w, &ids[..t]);
            nll -= log_softmax_row(&rows[t - 1])[ids[t] as usize];
            n += 1;
        }
    }
    let oracle = (nll / n as f64).exp();
    let got = perplexity(&c, &w, &docs).unwrap();
    assert!((got - oracle).abs() / oracle < 1e-9, "{got} vs {oracle}");

    let mut rev = docs.clone();
    rev.reverse();
    assert_eq!(perplexity(&c, &w, &rev).unwrap(), got);
    assert!(perplexity(&c, &w, &[]).is_err());
    assert!(perplexity(&c, &w, &[vec![3]]).is_err());
}

#[test]
fn mcq_ties_and_arithmetic() {
    let c = ModelConfig::dense(1, 8, 2, 8, 25, 32);
    let w = zero_model(&c);
    let vocab = letter_vocab();
    let opts: Vec<Vec<u32>> = vec![vec![1], vec![2], vec![3], vec![4]];
    assert_eq!(mcq_choice(&c, &w, &[5, 6], &opts).unwrap(), 0);
    let items: Vec<McqItem> = (0..5)
        .map(|_| McqItem {
            prompt: "ab".into(),
            options: vec!["c".into(), "d".into()],
            gold: 1,
        })
        .collect();
    assert_eq!(mcq_accuracy(&c, &w, &vocab, &items).unwrap(), 0.0);
    assert!(mcq_choice(&c, &w, &[5], &[]).is_err());
    assert!(mcq_choice(&c, &w, &[5], &[vec![]]).is_err());
}

#[test]
fn mcq_picks_the_memorized_token() {
    let c = ToySpec {
        n_layers: 1,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        vocab_size: 25,
        max_seq_len: 32,
    }
    .config();
    let vocab = letter_vocab();
    let data = vec![vocab.tokenize(&"c".repeat(32))];
    let tc = TrainConfig {
        steps: 40,
        batch: 2,
        window: 16,
        lr: 3e-2,
        seed: 1,
    };
    let (w, _) = train(&c, &random_weights(&c, 2), &data, &tc);
    let items = vec![McqItem {
        prompt: "ccc".into(),
        options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        gold: 2,
    }];
    assert_eq!(mcq_accuracy(&c, &w, &vocab, &items).unwrap(), 1.0);
}

fn toy_bundle(seed: u64) -> Bundle {
    let c = ToySpec::default().config();
    Bundle {
        weights: random_weights(&c, seed),
        config: c,
        vocab: letter_vocab(),
    }
}

#[test]
fn identical_bundles_retain_everything() {
    let b = toy_bundle(3);
    let a_docs = MarkovLanguage::a(1).documents(4, 30, 2);
    let datasets = vec![
        EvalDataset {
            name: "expert".into(),
            data: EvalData::Corpus(a_docs),
        },
        EvalDataset {
            name: "mcq".into(),
            data: EvalData::Mcq(vec![McqItem {
                prompt: "abc".into(),
                options: vec!["d".into(), "e".into()],
                gold: 0,
            }]),
        },
        EvalDataset {
            name: "summ".into(),
            data: EvalData::Summ(vec![cusprune::SummItem {
                prompt: "abcabc".into(),
                reference: "a b c".into(),
            }]),
        },
    ];
    let r = expert_report(&b, &b, &datasets, None, 512).unwrap();
    assert_eq!(r.datasets.len(), 3);
    for d in &r.datasets {
        if d.dense > 0.0 {
            assert_eq!(d.retention, Some(100.0), "{}", d.name);
        } else {
            assert_eq!(d.retention, None);
        }
    }
    assert_eq!(r.dataset("expert").unwrap().metric, Metric::Perplexity);
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["datasets"].as_array().unwrap().len(), 3);
    assert!(expert_report(&b, &b, &[], None, 512).is_err());
}

#[test]
fn retention_is_inverted_for_perplexity() {
    assert_eq!(retention(Metric::Perplexity, 4.0, 5.0), Some(80.0));
    assert_eq!(retention(Metric::RougeL, 0.5, 0.4), Some(80.0));
}

#[test]
fn identical_models_bench_at_parity() {
    let c = ToySpec {
        n_layers: 2,
        d_model: 32,
        n_heads: 4,
        d_ff: 96,
        vocab_size: 25,
        max_seq_len: 256,
    }
    .config();
    let w = random_weights::<f32>(&c, 1);
    let docs: Vec<Vec<u32>> = (0..3)
        .map(|d| (0..256).map(|i| ((i * 3 + d) % 25) as u32).collect())
        .collect();
    let t = bench_speed(&c, &w, &c, &w, &docs, 9).unwrap();
    assert_eq!(t.flop_ratio, 1.0);
    assert!((t.speedup - 1.0).abs() <= 0.05, "speedup {}", t.speedup);
    assert!(bench_speed(&c, &w, &c, &w, &docs, 2).is_err());
}

#[test]
fn flop_ratio_grows_with_pruning() {
    let c = ToySpec::default().config();
    let w = random_weights::<f32>(&c, 1);
    let ratio = |k: usize| {
        let ids: Vec<NeuronId> = (0..2).flat_map(|l| (0..k).map(move |i| NeuronId::ffn(l, i))).collect();
        let plan = PrunePlan::manual(&c, &w, vec![], ids).unwrap();
        let (pc, _) = apply_plan(&c, &w, &plan).unwrap();
        forward_flops(&c, 64) as f64 / forward_flops(&pc, 64) as f64
    };
    assert!(ratio(24) > ratio(12));
    assert!(ratio(12) > 1.0);
}
