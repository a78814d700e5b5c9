//! Expert-model construction: intersect per-dimension irrelevant sets,
//! calibrate the percentile to a target parameter ratio, and remove the
//! resulting neurons from the weights.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DimensionCorpus, Document};
use crate::error::{Error, Result};
use crate::io::{read_string, write_file_atomic};
use crate::model::bundle::fingerprint;
use crate::model::config::{names, LayerShape, ModelConfig};
use crate::model::forward;
use crate::model::weights::WeightStore;
use crate::neuron::{enumerate_neurons, param_weight, NeuronClass, NeuronId, NeuronUniverse};
use crate::relevance::{
    irrelevant_set, lowest_count, max_pool_ranks, score_corpus, tau_for_count, ImpactMatrix, IrrelevantSet, ScoreConfig,
};
use crate::scalar::Scalar;
use crate::vocab::Vocab;

/// Allowed absolute gap between achieved and requested ratio.
pub const RATIO_TOLERANCE: f64 = 0.005;

/// One dimension per axis at most.
pub const MAX_DIMENSIONS: usize = 3;

fn check_dimension_count(n: usize) -> Result<()> {
    match n {
        0 => Err(Error::Invalid("at least one dimension required".into())),
        n if n > MAX_DIMENSIONS => Err(Error::Invalid(format!(
            "at most {MAX_DIMENSIONS} dimensions can be intersected, got {n}"
        ))),
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Layer,
    Neuron,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanPhase {
    pub kind: PhaseKind,
    pub ids: Vec<NeuronId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionProvenance {
    pub dimension: String,
    pub documents: usize,
    pub doc_ids: Vec<String>,
    pub irrelevant: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer: usize,
    /// `1 − mean cos(block input, block output)`, in `[0, 2]`.
    pub importance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanProvenance {
    pub total_params: u64,
    pub removed_params: u64,
    #[serde(default)]
    pub dimensions: Vec<DimensionProvenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_scores: Vec<LayerScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Neurons to remove from one fingerprinted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub fingerprint: String,
    pub sigma: f64,
    pub tau: f64,
    pub achieved_ratio: f64,
    pub phases: Vec<PlanPhase>,
    pub provenance: PlanProvenance,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl PrunePlan {
    /// A plan removing exactly `layers` and `neurons`, with no calibration.
    pub fn manual(
        config: &ModelConfig,
        weights: &WeightStore,
        layers: Vec<NeuronId>,
        neurons: Vec<NeuronId>,
    ) -> Result<Self> {
        let total = config.param_count();
        let mut phases = Vec::new();
        if !layers.is_empty() {
            phases.push(PlanPhase {
                kind: PhaseKind::Layer,
                ids: layers,
            });
        }
        phases.push(PlanPhase {
            kind: PhaseKind::Neuron,
            ids: neurons,
        });
        let mut plan = Self {
            fingerprint: fingerprint(config, weights)?,
            sigma: 0.0,
            tau: 0.0,
            achieved_ratio: 0.0,
            phases,
            provenance: PlanProvenance {
                total_params: total,
                ..Default::default()
            },
        };
        let removed = plan.removed_params(config)?;
        plan.provenance.removed_params = removed;
        plan.achieved_ratio = round6(removed as f64 / total as f64);
        plan.sigma = plan.achieved_ratio;
        Ok(plan)
    }

    pub fn neurons(&self) -> impl Iterator<Item = &NeuronId> {
        self.phases.iter().flat_map(|p| p.ids.iter())
    }

    pub fn len(&self) -> usize {
        self.phases.iter().map(|p| p.ids.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of parameter weights of every planned unit, against `config`.
    pub fn removed_params(&self, config: &ModelConfig) -> Result<u64> {
        let mut total = 0;
        for n in self.neurons() {
            n.validate(config)?;
            total += param_weight(n, config);
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_string(path)?)?)
    }
}

/// Exact intersection of 1–3 irrelevant sets taken on the same model.
pub fn intersect_dimensions(sets: &[IrrelevantSet]) -> Result<BTreeSet<NeuronId>> {
    check_dimension_count(sets.len())?;
    let (first, rest) = sets.split_first().expect("checked above");
    for s in rest {
        if s.provenance.fingerprint != first.provenance.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: first.provenance.fingerprint.clone(),
                found: s.provenance.fingerprint.clone(),
            });
        }
    }
    Ok(first
        .neurons
        .iter()
        .filter(|n| rest.iter().all(|s| s.neurons.contains(n)))
        .copied()
        .collect())
}

#[derive(Clone, Debug)]
pub struct CalibrateOptions {
    pub tolerance: f64,
    pub force_closest: bool,
    pub max_tokens_per_doc: usize,
    pub seed: Option<u64>,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            tolerance: RATIO_TOLERANCE,
            force_closest: false,
            max_tokens_per_doc: ScoreConfig::default().max_tokens_per_doc,
            seed: None,
        }
    }
}

/// Outcome of the percentile search.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// Pool neurons per document counted as irrelevant.
    pub count: usize,
    pub tau: f64,
    pub removed_params: u64,
    pub sets: Vec<IrrelevantSet>,
    pub neurons: BTreeSet<NeuronId>,
}

/// Parameters removed when each document keeps its `count` lowest pool
/// neurons and the dimensions are intersected, given per-neuron worst ranks.
fn removed_at(worst: &[u32], pool_weights: &[u64], count: usize) -> u64 {
    worst
        .iter()
        .zip(pool_weights)
        .filter(|(&r, _)| (r as usize) < count)
        .map(|(_, &w)| w)
        .sum()
}

/// Irrelevant sets of every dimension at `tau`, and their intersection.
pub fn sets_at_tau(
    universe: &NeuronUniverse,
    impacts: &[ImpactMatrix],
    tau: f64,
) -> Result<(Vec<IrrelevantSet>, BTreeSet<NeuronId>)> {
    let cfg = ScoreConfig::with_tau(tau);
    let sets = impacts
        .iter()
        .map(|m| irrelevant_set(m, universe, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let neurons = intersect_dimensions(&sets)?;
    Ok((sets, neurons))
}

/// Search the per-document percentile so the intersected plan removes a
/// parameter count closest to `target` without exceeding `target + tol`.
///
/// Irrelevant sets only change when the per-document count
/// `floor(tau · pool / 100)` changes, and the intersected plan grows
/// monotonically with it, so the search bisects over that count. Ties
/// prefer the smaller plan, and the reported tau is the smallest percentile
/// producing the chosen plan.
pub fn search_percentile(
    universe: &NeuronUniverse,
    impacts: &[ImpactMatrix],
    target: f64,
    tol: f64,
    force_closest: bool,
) -> Result<Calibration> {
    check_dimension_count(impacts.len())?;
    let pool = universe.pool();
    let pool_weights: Vec<u64> = pool.iter().map(|&p| universe.weights()[p]).collect();
    let mut worst = vec![0u32; pool.len()];
    for m in impacts {
        if m.n_docs() == 0 {
            return Err(Error::EmptyCorpus(m.dimension.clone()));
        }
        for (w, r) in worst.iter_mut().zip(max_pool_ranks(m, universe)?) {
            *w = (*w).max(r);
        }
    }
    let total = universe.total_params() as f64;
    let removed = |k: usize| removed_at(&worst, &pool_weights, k);
    let max_removed = removed(pool.len());
    if target > max_removed as f64 + tol {
        return Err(Error::Invalid(format!(
            "sigma {:.4} exceeds the prunable fraction {:.4}",
            target / total,
            max_removed as f64 / total
        )));
    }

    // Largest count whose plan stays at or below the target.
    let (mut lo, mut hi) = (0usize, pool.len());
    let mut iterations = 0;
    while lo < hi {
        iterations += 1;
        let mid = (lo + hi).div_ceil(2);
        if removed(mid) as f64 <= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let under = lo;
    let mut best = under;
    if under < pool.len() {
        let over = under + 1;
        let r_over = removed(over) as f64;
        let r_under = removed(under) as f64;
        if r_over <= target + tol && (r_over - target).abs() < (target - r_under).abs() {
            best = over;
        }
    }
    // Smallest count with the same plan.
    let best_removed = removed(best);
    let (mut lo, mut hi) = (0usize, best);
    while lo < hi {
        iterations += 1;
        let mid = (lo + hi) / 2;
        if removed(mid) >= best_removed {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let count = lo;
    log::debug!("percentile search: {iterations} probes, count {count}/{}", pool.len());

    let tau = tau_for_count(count, pool.len());
    let gap = (best_removed as f64 - target).abs();
    if gap > tol && !force_closest {
        return Err(Error::CalibrationFailed {
            sigma: target / total,
            closest: best_removed as f64 / total,
            tau,
        });
    }
    let (sets, neurons) = if count == 0 {
        (Vec::new(), BTreeSet::new())
    } else {
        let (sets, neurons) = sets_at_tau(universe, impacts, tau)?;
        debug_assert_eq!(lowest_count(tau, pool.len()), count);
        (sets, neurons)
    };
    let check: u64 = neurons.iter().filter_map(|n| universe.weight(n)).sum();
    if check != best_removed {
        return Err(Error::Invalid(format!(
            "percentile search inconsistent: {check} vs {best_removed} parameters"
        )));
    }
    Ok(Calibration {
        count,
        tau,
        removed_params: best_removed,
        sets,
        neurons,
    })
}

fn dimension_provenance(impacts: &[ImpactMatrix], sets: &[IrrelevantSet]) -> Vec<DimensionProvenance> {
    impacts
        .iter()
        .enumerate()
        .map(|(i, m)| DimensionProvenance {
            dimension: m.dimension.clone(),
            documents: m.n_docs(),
            doc_ids: m.docs.iter().map(|d| d.id.clone()).collect(),
            irrelevant: sets.get(i).map_or(0, |s| s.len()),
        })
        .collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Invalid(format!("sigma {sigma} must lie in (0, 1)")));
    }
    Ok(())
}

/// Calibrate a plan from precomputed per-dimension impact matrices.
pub fn calibrate_impacts(
    universe: &NeuronUniverse,
    impacts: &[ImpactMatrix],
    sigma: f64,
    options: &CalibrateOptions,
) -> Result<PrunePlan> {
    check_sigma(sigma)?;
    let fp = impacts
        .first()
        .map(|m| m.fingerprint.clone())
        .ok_or_else(|| Error::Invalid("at least one dimension required".into()))?;
    let total = universe.total_params();
    let cal = search_percentile(
        universe,
        impacts,
        sigma * total as f64,
        options.tolerance * total as f64,
        options.force_closest,
    )?;
    Ok(PrunePlan {
        fingerprint: fp,
        sigma,
        tau: cal.tau,
        achieved_ratio: round6(cal.removed_params as f64 / total as f64),
        phases: vec![PlanPhase {
            kind: PhaseKind::Neuron,
            ids: cal.neurons.iter().copied().collect(),
        }],
        provenance: PlanProvenance {
            total_params: total,
            removed_params: cal.removed_params,
            dimensions: dimension_provenance(impacts, &cal.sets),
            layer_scores: Vec::new(),
            seed: options.seed,
        },
    })
}

/// Plan for a fixed percentile, skipping calibration.
pub fn plan_for_tau(
    universe: &NeuronUniverse,
    impacts: &[ImpactMatrix],
    tau: f64,
    seed: Option<u64>,
) -> Result<PrunePlan> {
    let fp = impacts
        .first()
        .map(|m| m.fingerprint.clone())
        .ok_or_else(|| Error::Invalid("at least one dimension required".into()))?;
    let (sets, neurons) = sets_at_tau(universe, impacts, tau)?;
    let total = universe.total_params();
    let removed: u64 = neurons.iter().filter_map(|n| universe.weight(n)).sum();
    let achieved = round6(removed as f64 / total as f64);
    Ok(PrunePlan {
        fingerprint: fp,
        sigma: achieved,
        tau,
        achieved_ratio: achieved,
        phases: vec![PlanPhase {
            kind: PhaseKind::Neuron,
            ids: neurons.into_iter().collect(),
        }],
        provenance: PlanProvenance {
            total_params: total,
            removed_params: removed,
            dimensions: dimension_provenance(impacts, &sets),
            layer_scores: Vec::new(),
            seed,
        },
    })
}

pub fn score_corpora(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    corpora: &[DimensionCorpus],
    universe: &NeuronUniverse,
    max_tokens_per_doc: usize,
) -> Result<Vec<ImpactMatrix>> {
    let sc = ScoreConfig {
        max_tokens_per_doc,
        ..ScoreConfig::default()
    };
    corpora
        .iter()
        .map(|c| score_corpus(config, weights, vocab, c, universe, &sc))
        .collect()
}

/// Score every corpus and calibrate the shared percentile to `sigma`.
pub fn calibrate(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    corpora: &[DimensionCorpus],
    universe: &NeuronUniverse,
    sigma: f64,
    options: &CalibrateOptions,
) -> Result<PrunePlan> {
    check_sigma(sigma)?;
    check_dimension_count(corpora.len())?;
    let impacts = score_corpora(config, weights, vocab, corpora, universe, options.max_tokens_per_doc)?;
    calibrate_impacts(universe, &impacts, sigma, options)
}

#[derive(Default)]
struct LayerEdits {
    remove_layer: bool,
    ffn: Vec<usize>,
    value: BTreeMap<usize, Vec<usize>>,
    heads: BTreeSet<usize>,
}

/// Remove every planned unit from the weights.
///
/// Returns the pruned config (layer overrides updated, removed layers
/// renumbered away) and weights. The parameter count drops by exactly the
/// plan's declared removal.
pub fn apply_plan(config: &ModelConfig, weights: &WeightStore, plan: &PrunePlan) -> Result<(ModelConfig, WeightStore)> {
    let fp = fingerprint(config, weights)?;
    if fp != plan.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: plan.fingerprint.clone(),
            found: fp,
        });
    }
    let mut edits: Vec<LayerEdits> = (0..config.n_layers).map(|_| LayerEdits::default()).collect();
    let mut seen = HashSet::new();
    for n in plan.neurons() {
        n.validate(config)?;
        if !seen.insert(*n) {
            return Err(Error::Plan(format!("duplicate neuron {n}")));
        }
        let e = &mut edits[n.layer];
        match n.class {
            NeuronClass::FfnChannel => e.ffn.push(n.index),
            NeuronClass::AttnValueChannel => e.value.entry(n.head.unwrap()).or_default().push(n.index),
            NeuronClass::AttnHead => {
                e.heads.insert(n.index);
            }
            NeuronClass::LayerUnit => e.remove_layer = true,
        }
    }
    for (l, e) in edits.iter().enumerate() {
        let partial = !e.ffn.is_empty() || !e.value.is_empty() || !e.heads.is_empty();
        if e.remove_layer && partial {
            return Err(Error::Plan(format!("layer {l} removed together with its neurons")));
        }
        if let Some(h) = e.value.keys().find(|h| e.heads.contains(h)) {
            return Err(Error::Plan(format!(
                "head {h} of layer {l} removed together with its value channels"
            )));
        }
    }
    let survivors: Vec<usize> = (0..config.n_layers).filter(|&l| !edits[l].remove_layer).collect();
    if survivors.is_empty() {
        return Err(Error::Plan("plan removes every layer".into()));
    }

    let mut out = WeightStore::new();
    for name in ["embed", "final_norm", "unembed"] {
        out.insert(name, weights.get(name)?.clone());
    }
    let hd = config.head_dim;
    let mut shapes = Vec::with_capacity(survivors.len());
    for (new_l, &l) in survivors.iter().enumerate() {
        let e = &edits[l];
        let shape = config.layer_shape(l);
        let mut v_cols = Vec::new();
        let mut qk_rows = Vec::new();
        let mut v_dims = Vec::new();
        for (h, &vd) in shape.v_dims.iter().enumerate() {
            let off = shape.v_offset(h);
            if e.heads.contains(&h) {
                v_cols.extend(off..off + vd);
                qk_rows.extend(h * hd..(h + 1) * hd);
                continue;
            }
            let gone = e.value.get(&h).map_or(&[][..], Vec::as_slice);
            v_cols.extend(gone.iter().map(|j| off + j));
            v_dims.push(vd - gone.len());
        }
        let get = |n: String| weights.get(&n);
        let put = [
            (names::norm1(new_l), get(names::norm1(l))?.clone()),
            (names::norm2(new_l), get(names::norm2(l))?.clone()),
            (names::wq(new_l), get(names::wq(l))?.remove_indices(0, &qk_rows)?),
            (names::wk(new_l), get(names::wk(l))?.remove_indices(0, &qk_rows)?),
            (names::wv(new_l), get(names::wv(l))?.remove_indices(0, &v_cols)?),
            (names::wo(new_l), get(names::wo(l))?.remove_indices(1, &v_cols)?),
            (names::up(new_l), get(names::up(l))?.remove_indices(0, &e.ffn)?),
            (names::gate(new_l), get(names::gate(l))?.remove_indices(0, &e.ffn)?),
            (names::down(new_l), get(names::down(l))?.remove_indices(1, &e.ffn)?),
        ];
        for (n, t) in put {
            out.insert(n, t);
        }
        shapes.push(LayerShape {
            d_ff: shape.d_ff - e.ffn.len(),
            v_dims,
        });
    }
    let mut pruned = config.clone();
    pruned.n_layers = survivors.len();
    pruned.set_layer_shapes(&shapes);
    pruned.metadata.insert("pruned_from".into(), plan.fingerprint.clone());
    pruned.validate()?;
    out.validate(&pruned)?;
    let removed = plan.removed_params(config)?;
    if config.param_count() - removed != pruned.param_count() {
        return Err(Error::Plan(format!(
            "parameter accounting: {} - {removed} != {}",
            config.param_count(),
            pruned.param_count()
        )));
    }
    Ok((pruned, out))
}

fn cosine(a: &[impl Scalar], b: &[impl Scalar]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.widen(), y.widen());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    match (aa > 0.0, bb > 0.0) {
        (true, true) => ab / (aa.sqrt() * bb.sqrt()),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Block importance `1 − mean cos(input, output)` over all tokens of all
/// sequences, sorted ascending (removal priority first).
pub fn layer_scores_tokens<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    sequences: &[Vec<u32>],
) -> Result<Vec<LayerScore>> {
    if sequences.is_empty() {
        return Err(Error::Invalid("layer scoring needs a non-empty corpus".into()));
    }
    let per_doc = sequences
        .par_iter()
        .map(|ids| {
            if ids.is_empty() {
                return Err(Error::EmptyDocument);
            }
            let (_, trace) = forward::forward(config, weights, ids, true)?;
            let trace = trace.ok_or_else(|| Error::Invalid("trace missing".into()))?;
            Ok(trace
                .layers
                .iter()
                .map(|lt| {
                    (0..lt.input.rows())
                        .map(|t| cosine(lt.input.row(t), lt.ffn_out.row(t)))
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let tokens: usize = sequences.iter().map(Vec::len).sum();
    let mut scores: Vec<LayerScore> = (0..config.n_layers)
        .map(|l| {
            let sum: f64 = per_doc.iter().map(|d| d[l]).sum();
            LayerScore {
                layer: l,
                importance: (1.0 - sum / tokens as f64).clamp(0.0, 2.0),
            }
        })
        .collect();
    scores.sort_by(|a, b| a.importance.total_cmp(&b.importance).then(a.layer.cmp(&b.layer)));
    Ok(scores)
}

pub fn layer_scores(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    docs: &[Document],
    max_tokens_per_doc: usize,
) -> Result<Vec<LayerScore>> {
    let limit = max_tokens_per_doc.min(config.max_seq_len);
    let seqs: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| {
            let mut ids = vocab.tokenize(&d.text);
            ids.truncate(limit);
            ids
        })
        .collect();
    layer_scores_tokens(config, weights, &seqs)
}

fn union_documents(corpora: &[DimensionCorpus]) -> Vec<Document> {
    let mut seen = HashSet::new();
    corpora
        .iter()
        .flat_map(|c| c.documents.iter())
        .filter(|d| seen.insert(d.id.clone()))
        .cloned()
        .collect()
}

/// Layer-removal baseline: drop the `n` least important layers and nothing
/// else.
pub fn layer_baseline_plan(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    corpora: &[DimensionCorpus],
    n: usize,
    options: &CalibrateOptions,
) -> Result<PrunePlan> {
    check_dimension_count(corpora.len())?;
    if n == 0 || n >= config.n_layers {
        return Err(Error::Invalid(format!(
            "layer budget {n} must be in 1..{}",
            config.n_layers
        )));
    }
    let scores = layer_scores(
        config,
        weights,
        vocab,
        &union_documents(corpora),
        options.max_tokens_per_doc,
    )?;
    let mut dropped: Vec<usize> = scores.iter().take(n).map(|s| s.layer).collect();
    dropped.sort_unstable();
    let ids = dropped.into_iter().map(NeuronId::layer_unit).collect();
    let mut plan = PrunePlan::manual(config, weights, ids, Vec::new())?;
    plan.phases.retain(|p| p.kind == PhaseKind::Layer);
    plan.provenance.layer_scores = scores;
    plan.provenance.seed = options.seed;
    Ok(plan)
}

/// Remove the `layer_budget` least important layers, then calibrate neuron
/// pruning on the reduced model so the combined removal reaches `sigma` of
/// the original parameters. All plan ids refer to the original model.
#[allow(clippy::too_many_arguments)]
pub fn aggressive_plan(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    corpora: &[DimensionCorpus],
    sigma: f64,
    layer_budget: usize,
    options: &CalibrateOptions,
) -> Result<PrunePlan> {
    check_sigma(sigma)?;
    check_dimension_count(corpora.len())?;
    if layer_budget >= config.n_layers {
        return Err(Error::Invalid(format!(
            "layer budget {layer_budget} must be below n_layers {}",
            config.n_layers
        )));
    }
    if layer_budget == 0 {
        let universe = enumerate_neurons(config)?;
        return calibrate(config, weights, vocab, corpora, &universe, sigma, options);
    }
    let scores = layer_scores(
        config,
        weights,
        vocab,
        &union_documents(corpora),
        options.max_tokens_per_doc,
    )?;
    let mut dropped: Vec<usize> = scores.iter().take(layer_budget).map(|s| s.layer).collect();
    dropped.sort_unstable();
    let layer_ids: Vec<NeuronId> = dropped.iter().map(|&l| NeuronId::layer_unit(l)).collect();

    let layer_plan = PrunePlan::manual(config, weights, layer_ids.clone(), Vec::new())?;
    let (reduced_cfg, reduced_w) = apply_plan(config, weights, &layer_plan)?;
    let total = config.param_count() as f64;
    let layer_params = layer_plan.provenance.removed_params;
    let target = sigma * total - layer_params as f64;
    if target < -options.tolerance * total {
        return Err(Error::Invalid(format!(
            "removing {layer_budget} layer(s) already exceeds sigma {sigma}"
        )));
    }
    let universe = enumerate_neurons(&reduced_cfg)?;
    let impacts = score_corpora(
        &reduced_cfg,
        &reduced_w,
        vocab,
        corpora,
        &universe,
        options.max_tokens_per_doc,
    )?;
    let cal = search_percentile(
        &universe,
        &impacts,
        target.max(0.0),
        options.tolerance * total,
        options.force_closest,
    )?;
    let survivors: Vec<usize> = (0..config.n_layers).filter(|l| !dropped.contains(l)).collect();
    let mut neuron_ids: Vec<NeuronId> = cal.neurons.iter().map(|n| n.with_layer(survivors[n.layer])).collect();
    neuron_ids.sort();
    let removed = layer_params + cal.removed_params;
    Ok(PrunePlan {
        fingerprint: fingerprint(config, weights)?,
        sigma,
        tau: cal.tau,
        achieved_ratio: round6(removed as f64 / total),
        phases: vec![
            PlanPhase {
                kind: PhaseKind::Layer,
                ids: layer_ids,
            },
            PlanPhase {
                kind: PhaseKind::Neuron,
                ids: neuron_ids,
            },
        ],
        provenance: PlanProvenance {
            total_params: config.param_count(),
            removed_params: removed,
            dimensions: dimension_provenance(&impacts, &cal.sets),
            layer_scores: scores,
            seed: options.seed,
        },
    })
}
