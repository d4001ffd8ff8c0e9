//! Versioned binary checkpoint container.
//!
//! Layout: magic `AMODALCK`, `u32` format version, `u64` header length, JSON
//! header (architectures, counters, tensor table), `u64` blob length, raw
//! little-endian `f32` blob, then a SHA-256 digest of everything before it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GeneratorConfig, MaskDiscConfig, NetArch, PatchDiscConfig};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamSet;
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"AMODALCK";
const DIGEST_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRole {
    G1,
    DObj,
    DIns,
    G2,
    D2,
    /// Trainable visible-mask segmenter used when no oracle mask is available.
    Segmenter,
}

impl NetRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetRole::G1 => "g1",
            NetRole::DObj => "d_obj",
            NetRole::DIns => "d_ins",
            NetRole::G2 => "g2",
            NetRole::D2 => "d2",
            NetRole::Segmenter => "segmenter",
        }
    }
}

/// Parameters and optimizer moments of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState {
    pub arch: NetArch,
    pub params: ParamSet<f32>,
    pub adam: Option<Adam<f32>>,
}

impl NetState {
    pub fn fresh(arch: NetArch, seed: u64, adam: AdamConfig) -> Result<Self> {
        let params = arch.init(seed)?;
        let adam = Some(Adam::new(&params, adam));
        Ok(Self { arch, params, adam })
    }

    pub fn generator_config(&self) -> Result<&GeneratorConfig> {
        match &self.arch {
            NetArch::Generator(c) => Ok(c),
            other => Err(Error::InvalidInput(format!("expected a generator, found {other:?}"))),
        }
    }

    pub fn mask_disc_config(&self) -> Result<&MaskDiscConfig> {
        match &self.arch {
            NetArch::MaskDisc(c) => Ok(c),
            other => Err(Error::InvalidInput(format!("expected a mask discriminator, found {other:?}"))),
        }
    }

    pub fn patch_disc_config(&self) -> Result<&PatchDiscConfig> {
        match &self.arch {
            NetArch::PatchDisc(c) => Ok(c),
            other => Err(Error::InvalidInput(format!("expected a patch discriminator, found {other:?}"))),
        }
    }

    fn bit_eq(&self, other: &Self) -> bool {
        let adam_eq = match (&self.adam, &other.adam) {
            (None, None) => true,
            (Some(a), Some(b)) => a.config == b.config && a.step == b.step && a.m.bit_eq(&b.m) && a.v.bit_eq(&b.v),
            _ => false,
        };
        self.arch == other.arch && self.params.bit_eq(&other.params) && adam_eq
    }
}

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub format_version: u32,
    pub nets: BTreeMap<NetRole, NetState>,
    /// Step counters, e.g. `seg_step`, `app_step`, `joint_step`.
    pub counters: BTreeMap<String, u64>,
    /// Scalar training state such as current learning rates.
    pub scalars: BTreeMap<String, f64>,
    pub config_fingerprint: String,
}

impl PartialEq for Checkpoint {
    fn eq(&self, other: &Self) -> bool {
        self.format_version == other.format_version
            && self.counters == other.counters
            && self.scalars.len() == other.scalars.len()
            && self.scalars.iter().zip(&other.scalars).all(|((ka, a), (kb, b))| ka == kb && a.to_bits() == b.to_bits())
            && self.config_fingerprint == other.config_fingerprint
            && self.nets.len() == other.nets.len()
            && self.nets.iter().zip(&other.nets).all(|((ra, a), (rb, b))| ra == rb && a.bit_eq(b))
    }
}

impl Checkpoint {
    pub fn new(config_fingerprint: impl Into<String>) -> Self {
        Self { format_version: CHECKPOINT_VERSION, config_fingerprint: config_fingerprint.into(), ..Default::default() }
    }

    pub fn net(&self, role: NetRole) -> Result<&NetState> {
        self.nets.get(&role).ok_or_else(|| Error::InvalidInput(format!("checkpoint has no `{}` network", role.as_str())))
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob = Vec::new();
        let mut table = Vec::new();
        let mut push = |key: String, t: &Tensor<f32>, blob: &mut Vec<u8>| {
            table.push(TensorEntry { key, shape: t.shape().to_vec(), offset: blob.len() / f32::BYTES });
            for &v in t.data() {
                v.write_le(blob);
            }
        };
        let mut nets = BTreeMap::new();
        for (role, state) in &self.nets {
            let r = role.as_str();
            for (name, t) in state.params.iter() {
                push(format!("{r}/param/{name}"), t, &mut blob);
            }
            if let Some(adam) = &state.adam {
                for (name, t) in adam.m.iter() {
                    push(format!("{r}/adam_m/{name}"), t, &mut blob);
                }
                for (name, t) in adam.v.iter() {
                    push(format!("{r}/adam_v/{name}"), t, &mut blob);
                }
            }
            let header = NetHeader { arch: state.arch.clone(), adam: state.adam.as_ref().map(|a| AdamHeader { config: a.config, step: a.step }) };
            nets.insert(*role, header);
        }
        let header = Header {
            nets,
            counters: self.counters.clone(),
            scalars: self.scalars.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect(),
            config_fingerprint: self.config_fingerprint.clone(),
            tensors: table,
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(blob.len() + header.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |reason: &str| Error::Corrupt { what: "checkpoint".into(), reason: reason.into() };
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, supported: CHECKPOINT_VERSION });
        }
        if bytes.len() < 12 + 8 + DIGEST_LEN {
            return Err(corrupt("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut cursor = 12;
        let read_u64 = |at: usize| -> Result<u64> {
            body.get(at..at + 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes"))).ok_or_else(|| corrupt("truncated"))
        };
        let header_len = read_u64(cursor)? as usize;
        cursor += 8;
        let header_bytes = body.get(cursor..cursor.saturating_add(header_len)).ok_or_else(|| corrupt("truncated header"))?;
        cursor += header_len;
        let blob_len = read_u64(cursor)? as usize;
        cursor += 8;
        let blob = body.get(cursor..cursor.saturating_add(blob_len)).ok_or_else(|| corrupt("truncated tensor data"))?;
        if cursor + blob_len != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| corrupt(&format!("header: {e}")))?;

        let mut tensors: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            let start = entry.offset * f32::BYTES;
            let raw = blob.get(start..start + n * f32::BYTES).ok_or_else(|| corrupt(&format!("tensor {} out of bounds", entry.key)))?;
            let data = raw.chunks_exact(f32::BYTES).map(f32::read_le).collect();
            tensors.insert(entry.key.clone(), Tensor::from_vec(&entry.shape, data)?);
        }
        let mut nets = BTreeMap::new();
        for (role, nh) in header.nets {
            let collect = |kind: &str| {
                let prefix = format!("{}/{kind}/", role.as_str());
                let mut set = ParamSet::new();
                for (k, t) in tensors.range(prefix.clone()..) {
                    let Some(name) = k.strip_prefix(&prefix) else { break };
                    set.insert(name, t.clone());
                }
                set
            };
            let params = collect("param");
            let adam = nh.adam.map(|a| Adam { config: a.config, step: a.step, m: collect("adam_m"), v: collect("adam_v") });
            nets.insert(role, NetState { arch: nh.arch, params, adam });
        }
        Ok(Self {
            format_version: version,
            nets,
            counters: header.counters,
            scalars: header.scalars.into_iter().map(|(k, v)| (k, f64::from_bits(v))).collect(),
            config_fingerprint: header.config_fingerprint,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    key: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    arch: NetArch,
    adam: Option<AdamHeader>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    nets: BTreeMap<NetRole, NetHeader>,
    counters: BTreeMap<String, u64>,
    /// `f64` bit patterns, so values survive JSON exactly.
    scalars: BTreeMap<String, u64>,
    config_fingerprint: String,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes = c.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GeneratorConfig, MaskDiscConfig, PatchDiscConfig};

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("abc123");
        let g = NetArch::Generator(GeneratorConfig { in_channels: 5, out_channels: 1, base_width: 2, res_blocks: 1, dilation: 2 });
        let d = NetArch::MaskDisc(MaskDiscConfig { backbone: PatchDiscConfig { in_channels: 1, base_width: 2, stages: 2, max_width: 4 }, input_size: 8 });
        let mut g1 = NetState::fresh(g, 1, AdamConfig::default()).unwrap();
        g1.adam.as_mut().unwrap().step = 7;
        g1.adam.as_mut().unwrap().m.iter_mut().for_each(|(_, t)| t.data_mut().iter_mut().for_each(|v| *v = 0.25));
        c.nets.insert(NetRole::G1, g1);
        c.nets.insert(NetRole::DObj, NetState { adam: None, ..NetState::fresh(d, 2, AdamConfig::default()).unwrap() });
        c.counters.insert("seg_step".into(), 42);
        c.scalars.insert("seg_lr".into(), 1e-4);
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/c.ckpt");
        save_checkpoint(&c, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }

    #[test]
    fn truncation_is_reported_as_corruption() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 30, 13] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Corrupt { .. })), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn version_bump_is_an_explicit_error() {
        let mut c = sample();
        c.format_version = CHECKPOINT_VERSION + 1;
        let bytes = c.to_bytes().unwrap();
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Version { found, supported }) => {
                assert_eq!(found, CHECKPOINT_VERSION + 1);
                assert_eq!(supported, CHECKPOINT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_the_artifact() {
        let err = load_checkpoint(Path::new("/nonexistent/seg.ckpt")).unwrap_err();
        assert!(err.to_string().contains("seg.ckpt"));
    }
}
