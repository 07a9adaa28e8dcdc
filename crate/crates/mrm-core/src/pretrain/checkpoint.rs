//! Checkpoint container: a UTF-8 JSON metadata block followed by raw
//! per-parameter records (name, shape, 32-bit IEEE-754 little-endian
//! values). Round-trips are bit-exact; a config hash in the metadata
//! detects architecture mismatches on load.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::config::ModelConfig;
use crate::nets::params::{decay_for_name, init_params, ParameterStore, SEC_ENCODER};
use crate::pretrain::adamw::AdamState;
use crate::pretrain::TrainConfig;

const MAGIC: &[u8; 8] = b"MRMCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    version: u32,
    model: ModelConfig,
    #[serde(default)]
    train: Option<TrainConfig>,
    step: u64,
    config_hash: u64,
    /// Master seed; every RNG stream in training is a stateless function of
    /// (seed, purpose, epoch, index), so seed + step fully capture RNG state.
    rng_seed: u64,
    /// Parameter names in storage order.
    manifest: Vec<String>,
    /// Whether optimizer moment records follow the parameters.
    has_optimizer: bool,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub params: ParameterStore<f32>,
    pub opt: AdamState,
}

fn write_record(out: &mut impl Write, name: &str, shape: &[usize], data: &[f32]) -> std::io::Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &s in shape {
        out.write_all(&(s as u64).to_le_bytes())?;
    }
    out.write_all(&(data.len() as u64).to_le_bytes())?;
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("checkpoint truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn record(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let name_len = self.u32()? as usize;
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| Error::Parse("non-UTF8 parameter name".into()))?;
        let ndim = self.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let count = self.u64()? as usize;
        let bytes = self.take(count * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, shape, data))
    }
}

/// Low-level container writer shared with the classifier format: magic,
/// JSON block, then raw records.
pub(crate) fn write_container(
    path: &Path,
    magic: &[u8; 8],
    json: &[u8],
    records: &[(String, Vec<usize>, Vec<f32>)],
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(json);
    for (name, shape, data) in records {
        write_record(&mut out, name, shape, data).map_err(|e| Error::io(path, e))?;
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_container(
    path: &Path,
    magic: &[u8; 8],
) -> Result<(Vec<u8>, Vec<(String, Vec<usize>, Vec<f32>)>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || &buf[..8] != magic {
        return Err(Error::Parse(format!(
            "{}: wrong or missing container magic",
            path.display()
        )));
    }
    let mut r = Reader { buf: &buf, pos: 8 };
    let json_len = r.u64()? as usize;
    let json = r.take(json_len)?.to_vec();
    let mut records = Vec::new();
    while r.pos < buf.len() {
        records.push(r.record()?);
    }
    Ok((json, records))
}

fn save_container(
    path: &Path,
    meta: &Meta,
    params: &ParameterStore<f32>,
    opt: Option<&AdamState>,
) -> Result<()> {
    let json = serde_json::to_vec(meta).map_err(|e| Error::Internal(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let io_err = |e: std::io::Error| Error::io(path, e);
    for p in params.iter() {
        write_record(&mut out, &p.name, &p.tensor.shape, &p.tensor.data).map_err(io_err)?;
    }
    if let Some(state) = opt {
        for (i, p) in params.iter().enumerate() {
            write_record(&mut out, &format!("opt.m.{}", p.name), &p.tensor.shape, &state.m[i])
                .map_err(io_err)?;
            write_record(&mut out, &format!("opt.v.{}", p.name), &p.tensor.shape, &state.v[i])
                .map_err(io_err)?;
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn load_container(path: &Path) -> Result<(Meta, ParameterStore<f32>, Option<AdamState>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || &buf[..8] != MAGIC {
        return Err(Error::Parse(format!("{}: not a checkpoint file", path.display())));
    }
    let mut r = Reader { buf: &buf, pos: 8 };
    let json_len = r.u64()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(json_len)?)
        .map_err(|e| Error::Parse(format!("checkpoint metadata: {e}")))?;

    let mut params = ParameterStore::new();
    for expected in &meta.manifest {
        let (name, shape, data) = r.record()?;
        if &name != expected {
            return Err(Error::Parse(format!(
                "parameter order mismatch: expected {expected}, found {name}"
            )));
        }
        params.insert(&name, shape, data, decay_for_name(&name));
    }

    let opt = if meta.has_optimizer {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for p_name in &meta.manifest {
            let (name, _, data) = r.record()?;
            if name != format!("opt.m.{p_name}") {
                return Err(Error::Parse(format!("unexpected optimizer record {name}")));
            }
            m.push(data);
            let (name, _, data) = r.record()?;
            if name != format!("opt.v.{p_name}") {
                return Err(Error::Parse(format!("unexpected optimizer record {name}")));
            }
            v.push(data);
        }
        Some(AdamState { m, v, step: meta.step })
    } else {
        None
    };
    Ok((meta, params, opt))
}

/// Verify stored parameter names and shapes against what the config dictates.
fn check_shapes(model: &ModelConfig, params: &ParameterStore<f32>) -> Result<()> {
    let expected: ParameterStore<f32> = init_params(model, 0)?;
    if expected.len() != params.len() {
        return Err(Error::Incompatible(format!(
            "checkpoint has {} parameters, config implies {}",
            params.len(),
            expected.len()
        )));
    }
    for (a, b) in expected.iter().zip(params.iter()) {
        if a.name != b.name || a.tensor.shape != b.tensor.shape {
            return Err(Error::Incompatible(format!(
                "parameter {} {:?} does not match config's {} {:?}",
                b.name, b.tensor.shape, a.name, a.tensor.shape
            )));
        }
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let meta = Meta {
        version: 1,
        model: ckpt.model.clone(),
        train: Some(ckpt.train.clone()),
        step: ckpt.step,
        config_hash: ckpt.model.hash(),
        rng_seed: ckpt.train.seed,
        manifest: ckpt.params.iter().map(|p| p.name.clone()).collect(),
        has_optimizer: true,
    };
    save_container(path, &meta, &ckpt.params, Some(&ckpt.opt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (meta, params, opt) = load_container(path)?;
    if meta.config_hash != meta.model.hash() {
        return Err(Error::Incompatible(format!(
            "config hash {:#x} does not match stored config (hash {:#x})",
            meta.config_hash,
            meta.model.hash()
        )));
    }
    check_shapes(&meta.model, &params)?;
    let train = meta
        .train
        .ok_or_else(|| Error::Parse("checkpoint lacks a training config".into()))?;
    let opt = opt.ok_or_else(|| Error::Parse("checkpoint lacks optimizer state".into()))?;
    Ok(Checkpoint { model: meta.model, train, step: meta.step, params, opt })
}

/// Write only the encoder section plus the model config.
pub fn export_encoder(
    params: &ParameterStore<f32>,
    model: &ModelConfig,
    step: u64,
    path: &Path,
) -> Result<()> {
    let mut enc = ParameterStore::new();
    for p in params.section(SEC_ENCODER) {
        enc.insert(&p.name, p.tensor.shape.clone(), p.tensor.data.clone(), p.decay);
    }
    let meta = Meta {
        version: 1,
        model: model.clone(),
        train: None,
        step,
        config_hash: model.hash(),
        rng_seed: 0,
        manifest: enc.iter().map(|p| p.name.clone()).collect(),
        has_optimizer: false,
    };
    save_container(path, &meta, &enc, None)
}

/// Load an exported encoder: the encoder parameter section and the model
/// config it was trained under.
pub fn load_encoder(path: &Path) -> Result<(ParameterStore<f32>, ModelConfig)> {
    let (meta, params, _) = load_container(path)?;
    if meta.config_hash != meta.model.hash() {
        return Err(Error::Incompatible(format!(
            "config hash {:#x} does not match stored config (hash {:#x})",
            meta.config_hash,
            meta.model.hash()
        )));
    }
    if let Some(p) = params.iter().find(|p| !p.name.starts_with(SEC_ENCODER)) {
        return Err(Error::Parse(format!("encoder export contains non-encoder parameter {}", p.name)));
    }
    Ok((params, meta.model))
}

/// Load an exported encoder, requiring it to match `expected`'s architecture.
pub fn load_encoder_expect(
    path: &Path,
    expected: &ModelConfig,
) -> Result<ParameterStore<f32>> {
    let (params, stored) = load_encoder(path)?;
    if stored.hash() != expected.hash() {
        return Err(Error::Incompatible(format!(
            "encoder config mismatch: stored (image {}, patch {}, dim {}, depth {}) vs \
             requested (image {}, patch {}, dim {}, depth {})",
            stored.image_size,
            stored.patch_size,
            stored.encoder_dim,
            stored.encoder_depth,
            expected.image_size,
            expected.patch_size,
            expected.encoder_dim,
            expected.encoder_depth,
        )));
    }
    Ok(params)
}
