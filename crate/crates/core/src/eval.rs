//! Capability retention and speed of a pruned model against its dense source.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::model::bundle::Bundle;
use crate::model::config::ModelConfig;
use crate::model::forward::{forward, greedy_decode, log_softmax_row};
use crate::model::weights::WeightStore;
use crate::scalar::Scalar;
use crate::vocab::Vocab;

/// Summed negative log-likelihood and number of predicted tokens.
fn doc_nll<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>, ids: &[u32]) -> Result<(f64, usize)> {
    if ids.len() < 2 {
        return Ok((0.0, 0));
    }
    let (logits, _) = forward(config, weights, ids, false)?;
    let nll = (0..ids.len() - 1)
        .map(|t| -log_softmax_row(logits.row(t))[ids[t + 1] as usize])
        .sum();
    Ok((nll, ids.len() - 1))
}

/// `exp(mean NLL per predicted token)` over all documents.
///
/// Per-document sums are added in sorted order so the result does not
/// depend on document order.
pub fn perplexity<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>, docs: &[Vec<u32>]) -> Result<f64> {
    let mut parts = docs
        .par_iter()
        .map(|ids| doc_nll(config, weights, ids))
        .collect::<Result<Vec<_>>>()?;
    let tokens: usize = parts.iter().map(|p| p.1).sum();
    if tokens == 0 {
        return Err(Error::Invalid("perplexity needs at least one predicted token".into()));
    }
    parts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nll: f64 = parts.iter().map(|p| p.0).sum();
    Ok((nll / tokens as f64).exp())
}

/// Tokenize documents, truncating each to `limit` tokens.
pub fn tokenize_docs(vocab: &Vocab, docs: &[Document], limit: usize) -> Vec<Vec<u32>> {
    docs.iter()
        .map(|d| {
            let mut ids = vocab.tokenize(&d.text);
            ids.truncate(limit);
            ids
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub prompt: String,
    pub options: Vec<String>,
    pub gold: usize,
}

/// Mean log-probability of `option` continuing `prompt`.
fn option_score<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    prompt: &[u32],
    option: &[u32],
) -> Result<f64> {
    let ids: Vec<u32> = prompt.iter().chain(option).copied().collect();
    let (logits, _) = forward(config, weights, &ids, false)?;
    let total: f64 = (prompt.len()..ids.len())
        .map(|t| log_softmax_row(logits.row(t - 1))[ids[t] as usize])
        .sum();
    Ok(total / option.len() as f64)
}

/// Index of the best-scoring option; ties go to the lowest index.
pub fn mcq_choice<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    prompt: &[u32],
    options: &[Vec<u32>],
) -> Result<usize> {
    if options.is_empty() {
        return Err(Error::Invalid("mcq item has no options".into()));
    }
    if prompt.is_empty() {
        return Err(Error::Invalid("mcq prompt tokenizes to nothing".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, opt) in options.iter().enumerate() {
        if opt.is_empty() {
            return Err(Error::Invalid(format!("mcq option {i} tokenizes to nothing")));
        }
        let s = option_score(config, weights, prompt, opt)?;
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

pub fn mcq_accuracy<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    vocab: &Vocab,
    items: &[McqItem],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Invalid("mcq set is empty".into()));
    }
    let correct = items
        .par_iter()
        .map(|item| {
            if item.gold >= item.options.len() {
                return Err(Error::Invalid(format!(
                    "gold index {} out of {} options",
                    item.gold,
                    item.options.len()
                )));
            }
            let prompt = vocab.tokenize(&item.prompt);
            let options: Vec<Vec<u32>> = item.options.iter().map(|o| vocab.tokenize(o)).collect();
            Ok((mcq_choice(config, weights, &prompt, &options)? == item.gold) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / items.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS precision, recall, and F1 over lowercased whitespace tokens.
pub fn rouge_l_scores(candidate: &str, reference: &str) -> Result<RougeL> {
    let r = words(reference);
    if r.is_empty() {
        return Err(Error::Invalid("empty reference".into()));
    }
    let c = words(candidate);
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return Ok(RougeL {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let precision = lcs / c.len() as f64;
    let recall = lcs / r.len() as f64;
    Ok(RougeL {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    })
}

pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64> {
    Ok(rouge_l_scores(candidate, reference)?.f1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummItem {
    pub prompt: String,
    pub reference: String,
}

/// Mean Rouge-L F1 of greedy continuations of each prompt.
pub fn summ_rouge<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    vocab: &Vocab,
    items: &[SummItem],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Invalid("summarization set is empty".into()));
    }
    let scores = items
        .par_iter()
        .map(|item| {
            let prompt = vocab.tokenize(&item.prompt);
            let budget = vocab.tokenize(&item.reference).len().max(1);
            let out = greedy_decode(config, weights, &prompt, budget)?;
            let text = String::from_utf8_lossy(&vocab.detokenize(&out)).into_owned();
            rouge_l(&text, &item.reference)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / items.len() as f64)
}

/// Multiply-add FLOPs (2 per MAC) of one forward pass over `seq` tokens.
/// Norms and activations are ignored.
pub fn forward_flops(config: &ModelConfig, seq: usize) -> u64 {
    let (d, hd, seq) = (config.d_model as u64, config.head_dim as u64, seq as u64);
    let pairs = seq * (seq + 1) / 2;
    let mut macs = seq * d * config.vocab_size as u64;
    for l in 0..config.n_layers {
        let shape = config.layer_shape(l);
        let v_total = shape.v_total() as u64;
        let mut layer = seq * d * v_total * 2 + seq * d * shape.d_ff as u64 * 3;
        if shape.v_dims.iter().any(|&v| v > 0) {
            layer += seq * d * hd * shape.n_heads() as u64 * 2;
            for &vd in shape.v_dims.iter().filter(|&&v| v > 0) {
                layer += pairs * (hd + vd as u64);
            }
        }
        macs += layer;
    }
    2 * macs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub tokens: usize,
    pub repetitions: usize,
    pub dense_tokens_per_sec: f64,
    pub pruned_tokens_per_sec: f64,
    /// Median of the per-pass pruned/dense throughput ratios.
    pub speedup: f64,
    pub dense_flops: u64,
    pub pruned_flops: u64,
    pub flop_ratio: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_pass<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>, docs: &[Vec<u32>]) -> Result<f64> {
    let start = Instant::now();
    for ids in docs {
        std::hint::black_box(forward(config, weights, ids, false)?);
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Median single-threaded tokens/sec of both models on the same token
/// streams, alternating dense and pruned passes, plus analytic FLOPs.
pub fn bench_speed<S: Scalar>(
    dense_config: &ModelConfig,
    dense: &WeightStore<S>,
    pruned_config: &ModelConfig,
    pruned: &WeightStore<S>,
    docs: &[Vec<u32>],
    repetitions: usize,
) -> Result<Timing> {
    if repetitions < 3 {
        return Err(Error::Invalid(format!("repetitions {repetitions} below 3")));
    }
    let tokens: usize = docs.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::Invalid("benchmark needs at least one token".into()));
    }
    // Warm-up.
    time_pass(dense_config, dense, docs)?;
    time_pass(pruned_config, pruned, docs)?;
    let mut d_rates = Vec::with_capacity(repetitions);
    let mut p_rates = Vec::with_capacity(repetitions);
    let mut ratios = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let d = tokens as f64 / time_pass(dense_config, dense, docs)?;
        let p = tokens as f64 / time_pass(pruned_config, pruned, docs)?;
        d_rates.push(d);
        p_rates.push(p);
        ratios.push(p / d);
    }
    let dense_tps = median(&mut d_rates);
    let pruned_tps = median(&mut p_rates);
    let flops = |c: &ModelConfig| docs.iter().map(|d| forward_flops(c, d.len())).sum::<u64>();
    let (dense_flops, pruned_flops) = (flops(dense_config), flops(pruned_config));
    Ok(Timing {
        tokens,
        repetitions,
        dense_tokens_per_sec: dense_tps,
        pruned_tokens_per_sec: pruned_tps,
        speedup: median(&mut ratios),
        dense_flops,
        pruned_flops,
        flop_ratio: dense_flops as f64 / pruned_flops.max(1) as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Perplexity,
    Accuracy,
    RougeL,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub metric: Metric,
    pub dense: f64,
    pub pruned: f64,
    /// Percent of dense performance kept; `None` when undefined.
    pub retention: Option<f64>,
}

/// Retention percentage; perplexity is inverted so higher is better.
pub fn retention(metric: Metric, dense: f64, pruned: f64) -> Option<f64> {
    let r = match metric {
        Metric::Perplexity => dense / pruned,
        Metric::Accuracy | Metric::RougeL => pruned / dense,
    };
    (r.is_finite()).then_some(100.0 * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dense_params: u64,
    pub pruned_params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub datasets: Vec<DatasetResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn dataset(&self, name: &str) -> Option<&DatasetResult> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Clone, Debug)]
pub enum EvalData {
    Corpus(Vec<Document>),
    Mcq(Vec<McqItem>),
    Summ(Vec<SummItem>),
}

#[derive(Clone, Debug)]
pub struct EvalDataset {
    pub name: String,
    pub data: EvalData,
}

fn measure(bundle: &Bundle, data: &EvalData, max_tokens: usize) -> Result<f64> {
    let (c, w, v) = (&bundle.config, &bundle.weights, &bundle.vocab);
    match data {
        EvalData::Corpus(docs) => perplexity(c, w, &tokenize_docs(v, docs, max_tokens.min(c.max_seq_len))),
        EvalData::Mcq(items) => mcq_accuracy(c, w, v, items),
        EvalData::Summ(items) => summ_rouge(c, w, v, items),
    }
}

/// Evaluate both bundles on every dataset and report retention.
pub fn expert_report(
    dense: &Bundle,
    pruned: &Bundle,
    datasets: &[EvalDataset],
    plan: Option<String>,
    max_tokens_per_doc: usize,
) -> Result<EvalReport> {
    if datasets.is_empty() {
        return Err(Error::Invalid("no evaluation datasets supplied".into()));
    }
    let mut results = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let empty = match &ds.data {
            EvalData::Corpus(d) => d.is_empty(),
            EvalData::Mcq(i) => i.is_empty(),
            EvalData::Summ(i) => i.is_empty(),
        };
        if empty {
            return Err(Error::Invalid(format!("dataset `{}` is empty", ds.name)));
        }
        let metric = match ds.data {
            EvalData::Corpus(_) => Metric::Perplexity,
            EvalData::Mcq(_) => Metric::Accuracy,
            EvalData::Summ(_) => Metric::RougeL,
        };
        let d = measure(dense, &ds.data, max_tokens_per_doc)?;
        let p = measure(pruned, &ds.data, max_tokens_per_doc)?;
        if !d.is_finite() || !p.is_finite() {
            return Err(Error::Invalid(format!("non-finite metric on `{}`", ds.name)));
        }
        results.push(DatasetResult {
            name: ds.name.clone(),
            metric,
            dense: d,
            pruned: p,
            retention: retention(metric, d, p),
        });
    }
    Ok(EvalReport {
        dense_params: dense.config.param_count(),
        pruned_params: pruned.config.param_count(),
        plan,
        datasets: results,
        timing: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rouge_hand_example() {
        let r = rouge_l_scores("a b c d", "a c e").unwrap();
        assert_eq!(r.precision, 0.5);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l("The Cat", "the cat").unwrap(), 1.0);
        assert_eq!(rouge_l("x y", "a b").unwrap(), 0.0);
        assert_eq!(rouge_l("", "a b").unwrap(), 0.0);
        assert!(rouge_l("a", "  ").is_err());
    }

    #[test]
    fn rouge_swap_exchanges_precision_and_recall() {
        let a = rouge_l_scores("a b c d", "a c e").unwrap();
        let b = rouge_l_scores("a c e", "a b c d").unwrap();
        assert_eq!(a.precision, b.recall);
        assert_eq!(a.recall, b.precision);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn retention_direction() {
        assert_eq!(retention(Metric::Perplexity, 10.0, 20.0), Some(50.0));
        assert_eq!(retention(Metric::Accuracy, 0.5, 0.25), Some(50.0));
        assert_eq!(retention(Metric::Accuracy, 0.0, 0.25), None);
    }

    #[test]
    fn flops_shrink_with_width() {
        let dense = ModelConfig::dense(2, 16, 2, 32, 20, 64);
        let mut narrow = dense.clone();
        narrow.d_ff = 16;
        assert!(forward_flops(&dense, 32) > forward_flops(&narrow, 32));
        assert_eq!(forward_flops(&dense, 0), 0);
    }
}
