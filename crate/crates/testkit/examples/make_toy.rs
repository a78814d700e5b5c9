//! Writes a small trained toy bundle and a tagged document corpus.
//!
//! Usage: `make_toy OUT_DIR [STEPS]`, producing `OUT_DIR/model/` and
//! `OUT_DIR/docs.jsonl`.

use std::io::Write;
use std::path::PathBuf;

use cusprune::Bundle;
use cusprune_testkit::{letter_vocab, random_weights, train, MarkovLanguage, ToySpec, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().expect("usage: make_toy OUT_DIR [STEPS]"));
    let steps: usize = args
        .next()
        .map_or(150, |s| s.parse().expect("STEPS must be an integer"));

    let spec = ToySpec::default();
    let config = spec.config();
    let vocab = letter_vocab();
    let mut docs = MarkovLanguage::a(1).documents(30, 64, 2);
    docs.extend(MarkovLanguage::b(1).documents(30, 64, 3));
    let data: Vec<Vec<u32>> = docs.iter().map(|d| vocab.tokenize(&d.text)).collect();
    let tc = TrainConfig {
        steps,
        ..TrainConfig::default()
    };
    let (weights, history) = train(&config, &random_weights(&config, 1), &data, &tc);
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        eprintln!("trained {steps} steps: loss {first:.3} -> {last:.3}");
    }

    std::fs::create_dir_all(&out).expect("create output directory");
    let bundle = Bundle {
        config,
        weights: weights.cast(),
        vocab,
    };
    bundle.save(out.join("model")).expect("save bundle");
    let mut f = std::fs::File::create(out.join("docs.jsonl")).expect("create docs.jsonl");
    for d in &docs {
        writeln!(f, "{}", serde_json::to_string(d).unwrap()).unwrap();
    }
    println!(
        "wrote {} and {}",
        out.join("model").display(),
        out.join("docs.jsonl").display()
    );
}
