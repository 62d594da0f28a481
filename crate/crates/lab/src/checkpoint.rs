//! TGL1 checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TGL1" | u32 version | u64 manifest_len | manifest (canonical JSON)
//! u32 tensor_count | tensor_count x entry | u64 payload_len | payload
//! entry = u32 name_len | name | u8 dtype | u32 ndim | ndim x u64 dim | u64 offset | u64 byte_len
//! ```
//!
//! Offsets are relative to the payload start. dtype 0 is f64, 1 is raw bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajlab_core::dataset::{Layout, Scaler, Vocabulary};
use trajlab_core::latent::TcvaeConfig;
use trajlab_core::model::{Family, GeneratorConfig};
use trajlab_core::net::{AdamState, ParameterStore, Tensor};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"TGL1";
pub const VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_BYTES: u8 = 1;
const PARAM: &str = "param/";
const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";
const VAE_BLOB: &str = "vae";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub family: Family,
    pub seed: u64,
    pub layout: Layout,
    pub sequence_length: usize,
    pub vocabulary: Vocabulary,
    /// Trajectory standardization used for training data and generated samples.
    pub scaler: Scaler,
    pub generator: Option<GeneratorConfig>,
    pub tcvae: Option<TcvaeConfig>,
    pub latent_scaler: Option<Scaler>,
    /// Content hash of the embedded autoencoder checkpoint.
    pub vae_hash: Option<String>,
    /// Content hash of the checkpoint this one was fine-tuned from.
    pub parent: Option<String>,
    pub fraction: Option<f64>,
    pub adam_step: Option<u64>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ParameterStore,
    pub adam: Option<AdamState>,
    /// Autoencoder of a latent generator, stored inline.
    pub vae: Option<Box<Checkpoint>>,
}

enum Blob<'a> {
    F64(&'a Tensor),
    Bytes(Vec<u8>),
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = self.manifest.clone();
        manifest.adam_step = self.adam.as_ref().map(|a| a.step);
        let mut entries: Vec<(String, Blob<'_>)> = Vec::new();
        for (n, t) in self.params.iter() {
            entries.push((format!("{PARAM}{n}"), Blob::F64(t)));
        }
        if let Some(a) = &self.adam {
            for (n, t) in a.m.iter() {
                entries.push((format!("{ADAM_M}{n}"), Blob::F64(t)));
            }
            for (n, t) in a.v.iter() {
                entries.push((format!("{ADAM_V}{n}"), Blob::F64(t)));
            }
        }
        if let Some(v) = &self.vae {
            let bytes = v.to_bytes()?;
            manifest.vae_hash = Some(hash_bytes(&bytes));
            entries.push((VAE_BLOB.into(), Blob::Bytes(bytes)));
        }
        let manifest_json = serde_json::to_vec(&manifest)?;

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest_json);
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        let mut payload = Vec::new();
        for (name, blob) in &entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let offset = payload.len() as u64;
            let shape: Vec<usize> = match blob {
                Blob::F64(t) => {
                    out.push(DTYPE_F64);
                    for v in t.data() {
                        payload.extend_from_slice(&v.to_le_bytes());
                    }
                    t.shape().to_vec()
                }
                Blob::Bytes(b) => {
                    out.push(DTYPE_BYTES);
                    payload.extend_from_slice(b);
                    vec![b.len()]
                }
            };
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(payload.len() as u64 - offset).to_le_bytes());
        }
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| LabError::BadMagic)? != MAGIC {
            return Err(LabError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(LabError::UnsupportedVersion(version));
        }
        let mlen = r.len64()?;
        let mut manifest: Manifest = serde_json::from_slice(r.take(mlen)?)?;
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| LabError::Checkpoint("tensor name is not UTF-8".into()))?;
            let dtype = r.take(1)?[0];
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.len64()?);
            }
            let offset = r.len64()?;
            let len = r.len64()?;
            table.push((name, dtype, shape, offset, len));
        }
        let plen = r.len64()?;
        let payload = r.take(plen)?;
        if r.pos != bytes.len() {
            return Err(LabError::Checkpoint("trailing bytes after payload".into()));
        }

        let mut params = ParameterStore::new();
        let mut m = ParameterStore::new();
        let mut v = ParameterStore::new();
        let mut vae = None;
        for (name, dtype, shape, offset, len) in table {
            let end = offset.checked_add(len).ok_or(LabError::TruncatedPayload)?;
            let raw = payload.get(offset..end).ok_or(LabError::TruncatedPayload)?;
            match dtype {
                DTYPE_F64 => {
                    let numel: usize = shape.iter().product();
                    if numel.checked_mul(8) != Some(raw.len()) {
                        return Err(LabError::Checkpoint(format!("{name}: shape and byte length disagree")));
                    }
                    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    let t = Tensor::new(shape, data)?;
                    if let Some(n) = name.strip_prefix(PARAM) {
                        params.insert(n, t)?;
                    } else if let Some(n) = name.strip_prefix(ADAM_M) {
                        m.insert(n, t)?;
                    } else if let Some(n) = name.strip_prefix(ADAM_V) {
                        v.insert(n, t)?;
                    } else {
                        return Err(LabError::Checkpoint(format!("unexpected tensor {name}")));
                    }
                }
                DTYPE_BYTES if name == VAE_BLOB => {
                    if manifest.vae_hash.as_deref() != Some(hash_bytes(raw).as_str()) {
                        return Err(LabError::Checkpoint("embedded autoencoder does not match its hash".into()));
                    }
                    vae = Some(Box::new(Checkpoint::from_bytes(raw)?));
                }
                other => return Err(LabError::Checkpoint(format!("{name}: unknown dtype {other}"))),
            }
        }
        let adam = match manifest.adam_step {
            Some(step) => Some(AdamState { step, m, v }),
            None if m.is_empty() && v.is_empty() => None,
            None => return Err(LabError::Checkpoint("optimizer moments without a step count".into())),
        };
        if vae.is_none() && manifest.vae_hash.is_some() {
            return Err(LabError::Checkpoint("manifest references a missing autoencoder".into()));
        }
        manifest.adam_step = adam.as_ref().map(|a| a.step);
        Ok(Self { manifest, params, adam, vae })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes).map_err(|e| LabError::io(path, e))?;
        Ok(hash_bytes(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized container, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hash_bytes(&self.to_bytes()?))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(LabError::TruncatedPayload)?;
        let s = self.bytes.get(self.pos..end).ok_or(LabError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| LabError::TruncatedPayload)
    }
}
