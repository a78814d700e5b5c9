//! Neuron relevance scoring and per-dimension irrelevant sets.
//!
//! A neuron's impact on a document is the RMS over token positions of the
//! L2 norm of the change its removal causes in the owning sublayer's
//! output. Every prunable unit contributes additively to that output, so
//! one traced forward pass yields every impact in closed form:
//!
//! * FFN channel `i`: `RMS_t |a_i(t)| · ‖down[:, i]‖`
//! * value channel `(h, j)`: `RMS_t |o_hj(t)| · ‖wo[:, off_h + j]‖`
//! * head `h`: `RMS_t ‖wo[:, head h] · o_h(t)‖`
//! * layer: `RMS_t ‖block_out(t) − block_in(t)‖`
//!
//! [`score_document_oracle`] measures the same quantity by literal ablation.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DimensionCorpus, Document};
use crate::error::{Error, Result};
use crate::io::{read_file, read_string, write_file_atomic};
use crate::model::bundle;
use crate::model::config::{names, ModelConfig};
use crate::model::forward::{self, ForwardTrace, Rope};
use crate::model::weights::WeightStore;
use crate::neuron::{coupled_slices, NeuronClass, NeuronId, NeuronUniverse};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreConfig {
    /// Per-document percentile below which a neuron counts as irrelevant.
    pub tau: f64,
    pub max_tokens_per_doc: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            tau: 25.0,
            max_tokens_per_doc: 512,
        }
    }
}

impl ScoreConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        // 100 is admitted as the closed extreme: the whole pool.
        if !(self.tau > 0.0 && self.tau <= 100.0) {
            return Err(Error::Invalid(format!("tau {} outside (0, 100]", self.tau)));
        }
        if self.max_tokens_per_doc == 0 {
            return Err(Error::Invalid("max_tokens_per_doc must be >= 1".into()));
        }
        Ok(())
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn column_norms<S: Scalar>(t: &Tensor<S>) -> Vec<f64> {
    let mut acc = vec![0.0f64; t.cols()];
    for r in 0..t.rows() {
        for (a, v) in acc.iter_mut().zip(t.row(r)) {
            *a += v.widen() * v.widen();
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Closed-form impacts from a trace, in universe order.
pub fn impacts_from_trace<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    trace: &ForwardTrace<S>,
    universe: &NeuronUniverse,
) -> Result<Vec<f64>> {
    struct LayerScores {
        ffn: Vec<f64>,
        value: Vec<Vec<f64>>,
        head: Vec<f64>,
        layer: f64,
    }
    let mut per_layer = Vec::with_capacity(config.n_layers);
    for (l, lt) in trace.layers.iter().enumerate() {
        let shape = config.layer_shape(l);
        let seq = lt.input.rows();
        let down_norms = column_norms(weights.get(&names::down(l))?);
        let wo = weights.get(&names::wo(l))?;
        let wo_norms = column_norms(wo);
        let act = &lt.ffn_act;
        let ffn = (0..shape.d_ff)
            .map(|i| rms((0..seq).map(|t| act.get(t, i).widen())) * down_norms[i])
            .collect();
        let mut value = Vec::with_capacity(shape.n_heads());
        let mut head = Vec::with_capacity(shape.n_heads());
        let d = config.d_model;
        for (h, &vd) in shape.v_dims.iter().enumerate() {
            let off = shape.v_offset(h);
            let hv = &lt.head_values[h];
            value.push(
                (0..vd)
                    .map(|j| rms((0..seq).map(|t| hv.get(t, j).widen())) * wo_norms[off + j])
                    .collect(),
            );
            let per_token = (0..seq).map(|t| {
                (0..d)
                    .map(|r| {
                        let c: f64 = wo.row(r)[off..off + vd]
                            .iter()
                            .zip(hv.row(t))
                            .map(|(w, o)| w.widen() * o.widen())
                            .sum();
                        c * c
                    })
                    .sum::<f64>()
                    .sqrt()
            });
            head.push(rms(per_token));
        }
        let layer = rms((0..seq).map(|t| {
            lt.ffn_out
                .row(t)
                .iter()
                .zip(lt.input.row(t))
                .map(|(o, i)| {
                    let diff = o.widen() - i.widen();
                    diff * diff
                })
                .sum::<f64>()
                .sqrt()
        }));
        per_layer.push(LayerScores {
            ffn,
            value,
            head,
            layer,
        });
    }
    universe
        .ids()
        .iter()
        .map(|n| {
            let ls = per_layer
                .get(n.layer)
                .ok_or_else(|| Error::InvalidNeuron(n.to_string()))?;
            let v = match n.class {
                NeuronClass::FfnChannel => ls.ffn.get(n.index),
                NeuronClass::AttnValueChannel => n.head.and_then(|h| ls.value.get(h)).and_then(|v| v.get(n.index)),
                NeuronClass::AttnHead => ls.head.get(n.index),
                NeuronClass::LayerUnit => Some(&ls.layer),
            };
            v.copied().ok_or_else(|| Error::InvalidNeuron(n.to_string()))
        })
        .collect()
}

/// Impact of every neuron in `universe` on one document, from a single
/// traced forward pass.
pub fn score_document<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    ids: &[u32],
    universe: &NeuronUniverse,
) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let (_, trace) = forward::forward(config, weights, ids, true)?;
    let trace = trace.ok_or_else(|| Error::Invalid("trace missing".into()))?;
    impacts_from_trace(config, weights, &trace, universe)
}

/// Impact of one neuron by ablation: zero its slices, recompute the owning
/// sublayer (the whole block for layer units) on the traced input, and take
/// the RMS over tokens of the L2 change.
pub fn score_document_oracle<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    ids: &[u32],
    neuron: &NeuronId,
) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let slices = coupled_slices(neuron, config)?;
    let (_, trace) = forward::forward(config, weights, ids, true)?;
    let trace = trace.ok_or_else(|| Error::Invalid("trace missing".into()))?;
    let lt = &trace.layers[neuron.layer];

    let mut ablated = weights.clone();
    for s in &slices {
        ablated.get_mut(&s.tensor)?.zero_slice(s.axis, s.index);
    }
    let l = neuron.layer;
    let lw = ablated.layer(l)?;
    let shape = config.layer_shape(l);
    let rope = Rope::new(config.head_dim, config.rope_base, ids.len());
    let (before, after) = match neuron.class {
        NeuronClass::FfnChannel => {
            let (out, _) = forward::ffn_sublayer(config, &lw, &lt.attn_out);
            (&lt.ffn_out, out)
        }
        NeuronClass::AttnValueChannel | NeuronClass::AttnHead => {
            let (out, _) = forward::attention_sublayer(config, &lw, &shape, &lt.input, &rope, false);
            (&lt.attn_out, out)
        }
        NeuronClass::LayerUnit => {
            let (out, _) = forward::block(config, &ablated, l, &lt.input, &rope, false)?;
            (&lt.ffn_out, out)
        }
    };
    Ok(rms((0..before.rows()).map(|t| {
        before
            .row(t)
            .iter()
            .zip(after.row(t))
            .map(|(b, a)| {
                let d = b.widen() - a.widen();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    })))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub id: String,
    pub language: String,
    pub domain: String,
    pub task: String,
}

impl From<&Document> for DocMeta {
    fn from(d: &Document) -> Self {
        Self {
            id: d.id.clone(),
            language: d.language.clone(),
            domain: d.domain.clone(),
            task: d.task.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ImpactFooter {
    dimension: String,
    fingerprint: String,
    docs: Vec<DocMeta>,
}

/// Impact scores, neuron axis in universe order by document axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpactMatrix {
    n_neurons: usize,
    /// Column-major: document `d` occupies `d * n_neurons..(d + 1) * n_neurons`.
    data: Vec<f32>,
    pub dimension: String,
    pub fingerprint: String,
    pub docs: Vec<DocMeta>,
}

impl ImpactMatrix {
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        docs: Vec<DocMeta>,
        dimension: impl Into<String>,
        fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if columns.len() != docs.len() {
            return Err(Error::Invalid("column/document count mismatch".into()));
        }
        let n_neurons = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_neurons * columns.len());
        for c in &columns {
            if c.len() != n_neurons {
                return Err(Error::Invalid("ragged impact columns".into()));
            }
            for &v in c {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Invalid(format!("impact {v} is not finite and >= 0")));
                }
                data.push(v as f32);
            }
        }
        Ok(Self {
            n_neurons,
            data,
            dimension: dimension.into(),
            fingerprint: fingerprint.into(),
            docs,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn column(&self, doc: usize) -> &[f32] {
        &self.data[doc * self.n_neurons..(doc + 1) * self.n_neurons]
    }

    pub fn get(&self, neuron: usize, doc: usize) -> f32 {
        self.data[doc * self.n_neurons + neuron]
    }

    /// Reorder documents; `order[i]` is the source column of new column `i`.
    pub fn permute_docs(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &d in order {
            data.extend_from_slice(self.column(d));
        }
        Self {
            n_neurons: self.n_neurons,
            data,
            dimension: self.dimension.clone(),
            fingerprint: self.fingerprint.clone(),
            docs: order.iter().map(|&d| self.docs[d].clone()).collect(),
        }
    }

    /// `impacts.bin`: `u64` neurons, `u64` docs, f32 column-major payload,
    /// then a UTF-8 JSON footer.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let footer = serde_json::to_vec(&ImpactFooter {
            dimension: self.dimension.clone(),
            fingerprint: self.fingerprint.clone(),
            docs: self.docs.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + self.data.len() * 4 + footer.len());
        out.extend_from_slice(&(self.n_neurons as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_docs() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&footer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("impacts.bin: {m}"));
        if bytes.len() < 16 {
            return Err(bad("truncated header"));
        }
        let n_neurons = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let n_docs = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload = n_neurons
            .checked_mul(n_docs)
            .and_then(|n| n.checked_mul(4))
            .filter(|&n| 16 + n <= bytes.len())
            .ok_or_else(|| bad("truncated payload"))?;
        let data: Vec<f32> = bytes[16..16 + payload]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let footer: ImpactFooter = serde_json::from_slice(&bytes[16 + payload..])?;
        if footer.docs.len() != n_docs {
            return Err(bad("footer document count mismatch"));
        }
        Ok(Self {
            n_neurons,
            data,
            dimension: footer.dimension,
            fingerprint: footer.fingerprint,
            docs: footer.docs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Number of pool neurons in the lowest `tau` percent of a pool of `len`.
pub fn lowest_count(tau: f64, len: usize) -> usize {
    (((tau / 100.0) * len as f64) + 1e-9).floor().min(len as f64) as usize
}

/// The `tau` percentile that selects exactly `count` of `len` pool neurons.
pub fn tau_for_count(count: usize, len: usize) -> f64 {
    if len == 0 {
        0.0
    } else {
        100.0 * count as f64 / len as f64
    }
}

/// Per-document ranks of the pool neurons: ascending impact, ties broken by
/// canonical order. `ranks[d][p]` is the rank of pool member `p` in doc `d`.
pub fn pool_ranks(impacts: &ImpactMatrix, universe: &NeuronUniverse) -> Result<Vec<Vec<u32>>> {
    if impacts.n_neurons() != universe.len() {
        return Err(Error::Invalid(format!(
            "impact matrix has {} neurons, universe {}",
            impacts.n_neurons(),
            universe.len()
        )));
    }
    let pool = universe.pool();
    Ok((0..impacts.n_docs())
        .map(|d| {
            let col = impacts.column(d);
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| col[pool[a]].total_cmp(&col[pool[b]]).then(a.cmp(&b)));
            let mut rank = vec![0u32; pool.len()];
            for (r, &p) in order.iter().enumerate() {
                rank[p] = r as u32;
            }
            rank
        })
        .collect())
}

/// Worst (largest) rank of each pool member across all documents.
pub fn max_pool_ranks(impacts: &ImpactMatrix, universe: &NeuronUniverse) -> Result<Vec<u32>> {
    let ranks = pool_ranks(impacts, universe)?;
    let mut worst = vec![0u32; universe.pool().len()];
    for col in &ranks {
        for (w, &r) in worst.iter_mut().zip(col) {
            *w = (*w).max(r);
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetProvenance {
    pub dimension: String,
    pub fingerprint: String,
    pub tau: f64,
    pub documents: usize,
    pub doc_ids: Vec<String>,
}

/// Neurons in the lowest `tau` percent of every document of one corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct IrrelevantSet {
    pub neurons: BTreeSet<NeuronId>,
    pub provenance: SetProvenance,
}

impl IrrelevantSet {
    pub fn label(&self) -> &str {
        &self.provenance.dimension
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// `# provenance: {json}` then one canonical id per line.
    pub fn to_text(&self) -> Result<String> {
        let mut s = format!("# provenance: {}\n", serde_json::to_string(&self.provenance)?);
        for n in &self.neurons {
            let _ = writeln!(s, "{n}");
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# provenance: "))
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing `# provenance:` header".into(),
            })?;
        let provenance = serde_json::from_str(header)?;
        let mut neurons = BTreeSet::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            neurons.insert(line.trim().parse().map_err(|e: Error| Error::Parse {
                line: n + 2,
                message: e.to_string(),
            })?);
        }
        Ok(Self { neurons, provenance })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_string(path)?)
    }
}

/// Neurons whose impact lies in the lowest `tau` percent of the combined
/// FFN + value-channel pool for every document.
pub fn irrelevant_set(
    impacts: &ImpactMatrix,
    universe: &NeuronUniverse,
    score_config: &ScoreConfig,
) -> Result<IrrelevantSet> {
    score_config.validate()?;
    if impacts.n_docs() == 0 {
        return Err(Error::EmptyCorpus(impacts.dimension.clone()));
    }
    let pool = universe.pool();
    let k = lowest_count(score_config.tau, pool.len());
    let worst = max_pool_ranks(impacts, universe)?;
    let neurons = pool
        .iter()
        .zip(&worst)
        .filter(|(_, &r)| (r as usize) < k)
        .map(|(&p, _)| universe.ids()[p])
        .collect();
    Ok(IrrelevantSet {
        neurons,
        provenance: SetProvenance {
            dimension: impacts.dimension.clone(),
            fingerprint: impacts.fingerprint.clone(),
            tau: score_config.tau,
            documents: impacts.n_docs(),
            doc_ids: impacts.docs.iter().map(|d| d.id.clone()).collect(),
        },
    })
}

/// Tokenize a document for scoring, truncated to the scoring and model limits.
pub fn document_tokens(
    config: &ModelConfig,
    vocab: &Vocab,
    doc: &Document,
    score_config: &ScoreConfig,
) -> Result<Vec<u32>> {
    let mut ids = vocab.tokenize(&doc.text);
    ids.truncate(score_config.max_tokens_per_doc.min(config.max_seq_len));
    if ids.is_empty() {
        return Err(Error::Document {
            id: doc.id.clone(),
            source: Box::new(Error::EmptyDocument),
        });
    }
    Ok(ids)
}

/// Score every document of `corpus`; documents run in parallel and columns
/// are assembled in corpus order.
pub fn score_corpus(
    config: &ModelConfig,
    weights: &WeightStore,
    vocab: &Vocab,
    corpus: &DimensionCorpus,
    universe: &NeuronUniverse,
    score_config: &ScoreConfig,
) -> Result<ImpactMatrix> {
    score_config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(corpus.label()));
    }
    let fingerprint = bundle::fingerprint(config, weights)?;
    let columns = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let ids = document_tokens(config, vocab, doc, score_config)?;
            score_document(config, weights, &ids, universe).map_err(|e| Error::Document {
                id: doc.id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ImpactMatrix::from_columns(
        columns,
        corpus.documents.iter().map(DocMeta::from).collect(),
        corpus.label(),
        fingerprint,
    )
}

/// Canonical-position lookup for a set of neurons.
pub fn positions_of(universe: &NeuronUniverse, neurons: impl IntoIterator<Item = NeuronId>) -> Result<Vec<usize>> {
    let map: HashMap<NeuronId, usize> = universe.ids().iter().enumerate().map(|(i, n)| (*n, i)).collect();
    neurons
        .into_iter()
        .map(|n| map.get(&n).copied().ok_or_else(|| Error::InvalidNeuron(n.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::enumerate_neurons;

    fn tiny_universe() -> NeuronUniverse {
        // 1 layer, d_ff 2, one head of width 2: pool = 2 ffn + 2 vchan.
        let c = ModelConfig::dense(1, 2, 1, 2, 4, 8);
        enumerate_neurons(&c).unwrap()
    }

    fn matrix(u: &NeuronUniverse, cols: Vec<Vec<f64>>) -> ImpactMatrix {
        let docs = (0..cols.len())
            .map(|i| DocMeta {
                id: format!("d{i}"),
                language: "x".into(),
                domain: "y".into(),
                task: "z".into(),
            })
            .collect();
        let full = cols
            .into_iter()
            .map(|pool_scores| {
                let mut v = vec![9.0; u.len()];
                for (p, s) in u.pool().into_iter().zip(pool_scores) {
                    v[p] = s;
                }
                v
            })
            .collect();
        ImpactMatrix::from_columns(full, docs, "language:x", "fp").unwrap()
    }

    #[test]
    fn intersection_across_documents() {
        let u = tiny_universe();
        let pool: Vec<NeuronId> = u.pool().iter().map(|&p| u.ids()[p]).collect();
        // doc A lowest half {n3, n1}; doc B lowest half {n3, n2}
        let m = matrix(&u, vec![vec![0.2, 0.9, 0.1, 0.8], vec![0.9, 0.3, 0.1, 0.8]]);
        let s = irrelevant_set(&m, &u, &ScoreConfig::with_tau(50.0)).unwrap();
        assert_eq!(s.neurons.into_iter().collect::<Vec<_>>(), vec![pool[2]]);

        let none = irrelevant_set(&m, &u, &ScoreConfig::with_tau(10.0)).unwrap();
        assert!(none.is_empty());

        let one = matrix(&u, vec![vec![0.2, 0.9, 0.1, 0.8]]);
        let s1 = irrelevant_set(&one, &u, &ScoreConfig::with_tau(50.0)).unwrap();
        assert_eq!(s1.neurons, BTreeSet::from([pool[0], pool[2]]));
    }

    #[test]
    fn ties_break_by_canonical_order() {
        let u = tiny_universe();
        let pool: Vec<NeuronId> = u.pool().iter().map(|&p| u.ids()[p]).collect();
        let m = matrix(&u, vec![vec![1.0, 1.0, 1.0, 1.0]]);
        let s = irrelevant_set(&m, &u, &ScoreConfig::with_tau(50.0)).unwrap();
        assert_eq!(s.neurons, BTreeSet::from([pool[0], pool[1]]));
    }

    #[test]
    fn rejects_bad_tau_and_empty_corpus() {
        let u = tiny_universe();
        let m = matrix(&u, vec![vec![0.1, 0.2, 0.3, 0.4]]);
        assert!(irrelevant_set(&m, &u, &ScoreConfig::with_tau(0.0)).is_err());
        assert!(irrelevant_set(&m, &u, &ScoreConfig::with_tau(101.0)).is_err());
        let empty = ImpactMatrix::from_columns(vec![], vec![], "language:x", "fp").unwrap();
        assert!(matches!(
            irrelevant_set(&empty, &u, &ScoreConfig::with_tau(50.0)),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn files_round_trip() {
        let u = tiny_universe();
        let m = matrix(&u, vec![vec![0.2, 0.9, 0.1, 0.8], vec![0.9, 0.3, 0.1, 0.8]]);
        assert_eq!(ImpactMatrix::from_bytes(&m.to_bytes().unwrap()).unwrap(), m);
        let s = irrelevant_set(&m, &u, &ScoreConfig::with_tau(50.0)).unwrap();
        let text = s.to_text().unwrap();
        assert!(text.starts_with("# provenance: {"));
        assert_eq!(IrrelevantSet::from_text(&text).unwrap(), s);
    }

    #[test]
    fn lowest_count_is_exact_at_grid_points() {
        for len in [1usize, 7, 200, 640] {
            for k in 0..=len {
                assert_eq!(lowest_count(tau_for_count(k, len), len), k);
            }
        }
        assert_eq!(lowest_count(50.0, 4), 2);
        assert_eq!(lowest_count(100.0, 4), 4);
    }
}
