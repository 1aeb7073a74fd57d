//! On-disk model: a binary tensor container, a JSON manifest and the
//! vocabularies.
//!
//! Container layout (little endian):
//!
//! ```text
//! magic  "TKGXCKPT"        8 bytes
//! version                 u32
//! count                   u32
//! count × { name_len u32, name utf-8, rows u64, cols u64, rows·cols f64 }
//! ```

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Hyperparams;
use crate::error::{Error, Result};
use crate::params::{ModelDims, ParameterSet};
use crate::sampler::SamplingConfig;
use crate::store::{EntityId, Vocab, Vocabulary};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TKGXCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub const TENSORS_FILE: &str = "model.tkgx";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENTITIES_FILE: &str = "entities.tsv";
pub const PREDICATES_FILE: &str = "predicates.tsv";

pub fn encode_tensors(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols as u64).to_le_bytes());
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated container at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_tensors(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint container (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported container version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let bytes = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dims: ModelDims,
    pub hyper: Hyperparams,
    pub sampling: SamplingConfig,
    pub base_predicates: usize,
    /// Day zero for ISO-dated input, `YYYY-MM-DD`.
    pub epoch: Option<String>,
    /// Entities without any training fact.
    pub unseen_entities: Vec<EntityId>,
    pub tensors: Vec<TensorInfo>,
    /// SHA-256 of the tensor container.
    pub fingerprint: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub hyper: Hyperparams,
    pub sampling: SamplingConfig,
    pub vocab: Vocabulary,
    pub base_predicates: usize,
    pub unseen_entities: Vec<EntityId>,
    pub fingerprint: String,
}

pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(
        params: ParameterSet,
        hyper: Hyperparams,
        sampling: SamplingConfig,
        vocab: Vocabulary,
        base_predicates: usize,
        mut unseen_entities: Vec<EntityId>,
    ) -> Self {
        unseen_entities.sort_unstable();
        let fp = fingerprint(&encode_tensors(&named(&params)));
        Self {
            params,
            hyper,
            sampling,
            vocab,
            base_predicates,
            unseen_entities,
            fingerprint: fp,
        }
    }

    pub fn is_unseen(&self, e: EntityId) -> bool {
        self.unseen_entities.binary_search(&e).is_ok()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tensors = named(&self.params);
        let bytes = encode_tensors(&tensors);
        let path = dir.join(TENSORS_FILE);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            dims: self.params.dims,
            hyper: self.hyper.clone(),
            sampling: self.sampling.clone(),
            base_predicates: self.base_predicates,
            epoch: self.vocab.epoch.map(|d| d.format("%Y-%m-%d").to_string()),
            unseen_entities: self.unseen_entities.clone(),
            tensors: tensors
                .iter()
                .map(|(n, t)| TensorInfo {
                    name: n.clone(),
                    rows: t.rows,
                    cols: t.cols,
                })
                .collect(),
            fingerprint: fingerprint(&bytes),
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        self.vocab.entities.write_tsv(&dir.join(ENTITIES_FILE))?;
        self.vocab.predicates.write_tsv(&dir.join(PREDICATES_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        let path = dir.join(TENSORS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let fp = fingerprint(&bytes);
        if fp != manifest.fingerprint {
            return Err(Error::Checkpoint("tensor container does not match the manifest fingerprint".into()));
        }
        let tensors = decode_tensors(&bytes)?;
        for info in &manifest.tensors {
            let found = tensors.iter().find(|(n, _)| *n == info.name);
            if found.map(|(_, t)| t.shape()) != Some((info.rows, info.cols)) {
                return Err(Error::Checkpoint(format!("tensor `{}` disagrees with the manifest", info.name)));
            }
        }
        let params = ParameterSet::from_named(manifest.dims, tensors)?;
        let epoch = manifest
            .epoch
            .as_deref()
            .map(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
            .transpose()
            .map_err(|e| Error::Checkpoint(format!("bad epoch date: {e}")))?;
        let mut vocab = Vocabulary::new();
        vocab.entities = Vocab::read_tsv(&dir.join(ENTITIES_FILE))?;
        vocab.predicates = Vocab::read_tsv(&dir.join(PREDICATES_FILE))?;
        vocab.epoch = epoch;
        vocab.freeze();
        if vocab.entities.len() != manifest.dims.num_entities {
            return Err(Error::Checkpoint(format!(
                "entity vocabulary has {} names but the model has {} rows",
                vocab.entities.len(),
                manifest.dims.num_entities
            )));
        }
        let mut unseen = manifest.unseen_entities;
        unseen.sort_unstable();
        Ok(Self {
            params,
            hyper: manifest.hyper,
            sampling: manifest.sampling,
            vocab,
            base_predicates: manifest.base_predicates,
            unseen_entities: unseen,
            fingerprint: fp,
        })
    }
}

fn named(params: &ParameterSet) -> Vec<(String, Tensor)> {
    params.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip_is_bit_exact() {
        let tensors = vec![
            ("a".to_string(), Tensor::from_vec(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300])),
            ("b".to_string(), Tensor::zeros(0, 3)),
        ];
        let bytes = encode_tensors(&tensors);
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits1: Vec<u64> = t1.data.iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = t2.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits1, bits2);
        }
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        let bytes = encode_tensors(&[("w".to_string(), Tensor::zeros(2, 2))]);
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_tensors(&bad).is_err());
        let mut future = bytes.clone();
        future[8] = 9;
        assert!(decode_tensors(&future).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode_tensors(&trailing).is_err());
    }
}
