//! On-disk model bundle: `config.json`, `tensors.bin`, `vocab.txt`.
//!
//! `tensors.bin` is little-endian: `u32` tensor count, then per tensor
//! `u32` name length, UTF-8 name, `u8` dtype (0 = f32), `u8` rank,
//! `rank × u64` dims and the row-major f32 payload. Tensors are written in
//! the config's canonical order so the encoding is deterministic.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_file, read_string, write_dir_atomic};
use crate::model::config::ModelConfig;
use crate::model::weights::WeightStore;
use crate::tensor::Tensor;
use crate::vocab::Vocab;

pub const CONFIG_FILE: &str = "config.json";
pub const TENSORS_FILE: &str = "tensors.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

const DTYPE_F32: u8 = 0;

/// A loaded, validated model.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub config: ModelConfig,
    pub weights: WeightStore,
    pub vocab: Vocab,
}

impl Bundle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_bundle(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_bundle(&self.config, &self.weights, &self.vocab, path.as_ref())
    }

    pub fn fingerprint(&self) -> Result<String> {
        fingerprint(&self.config, &self.weights)
    }
}

pub fn encode_tensors(config: &ModelConfig, weights: &WeightStore) -> Result<Vec<u8>> {
    weights.validate(config)?;
    let shapes = config.tensor_shapes();
    let payload: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let mut out = Vec::with_capacity(payload * 4 + shapes.len() * 64 + 4);
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (name, shape) in &shapes {
        let t = weights.get(name)?;
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse `tensors.bin` without validating against a config.
pub fn decode_tensors(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let count = r.u32()?;
    let mut store = WeightStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("tensor `{name}`: unsupported dtype {dtype}")));
        }
        let rank = r.u8()? as usize;
        if !(1..=2).contains(&rank) {
            return Err(Error::Format(format!("tensor `{name}`: unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("dim overflow".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("tensor `{name}`: size overflow")))?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if store.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

/// Hex SHA-256 of the canonical `tensors.bin` encoding.
pub fn fingerprint(config: &ModelConfig, weights: &WeightStore) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode_tensors(config, weights)?)))
}

fn check_vocab(config: &ModelConfig, vocab: &Vocab) -> Result<()> {
    if vocab.len() != config.vocab_size {
        return Err(Error::Vocab(format!(
            "{} tokens for vocab_size {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    Ok(())
}

pub fn save_bundle(config: &ModelConfig, weights: &WeightStore, vocab: &Vocab, path: &Path) -> Result<()> {
    config.validate()?;
    check_vocab(config, vocab)?;
    let tensors = encode_tensors(config, weights)?;
    let mut json = serde_json::to_string_pretty(config)?;
    json.push('\n');
    let text = vocab.to_text();
    write_dir_atomic(path, |dir| {
        for (name, bytes) in [
            (CONFIG_FILE, json.as_bytes()),
            (TENSORS_FILE, tensors.as_slice()),
            (VOCAB_FILE, text.as_bytes()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    })
}

pub fn load_bundle(path: &Path) -> Result<Bundle> {
    let config: ModelConfig =
        serde_json::from_str(&read_string(&path.join(CONFIG_FILE))?).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    let weights = decode_tensors(&read_file(&path.join(TENSORS_FILE))?)?;
    weights.validate(&config)?;
    let vocab = Vocab::from_text(&read_string(&path.join(VOCAB_FILE))?)?;
    check_vocab(&config, &vocab)?;
    Ok(Bundle { config, weights, vocab })
}
