//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "MSASTCK1"  u32 version (1)
//! config:     u32 kernel count, u32 kernels.., u32 layers_per_stage,
//!             u32 feature_maps, u32 input_dim, u32 num_classes,
//!             u32 num_decoders, u32 causal (0/1),
//!             u32 dropout (f32 bits), u32 alpha_base (f32 bits)
//! params:     u32 count, then per parameter
//!             u16 name length, name, u8 rank, u32 dims.., f32 values
//! adam m:     same layout as params
//! adam v:     same layout as params
//! u64 step
//! ```

use std::path::Path;

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numerics::param::matrix_dims;
use crate::numerics::{Matrix, Param, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSASTCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_count(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} exceeds u32")))?;
    put_u32(out, v);
    Ok(())
}

fn encode_config(out: &mut Vec<u8>, cfg: &ModelConfig) -> Result<()> {
    put_count(out, cfg.kernels.len(), "kernel count")?;
    for &k in &cfg.kernels {
        put_count(out, k, "kernel")?;
    }
    put_count(out, cfg.layers_per_stage, "layers_per_stage")?;
    put_count(out, cfg.feature_maps, "feature_maps")?;
    put_count(out, cfg.input_dim, "input_dim")?;
    put_count(out, cfg.num_classes, "num_classes")?;
    put_count(out, cfg.num_decoders, "num_decoders")?;
    put_u32(out, cfg.causal as u32);
    put_u32(out, (cfg.dropout as f32).to_bits());
    put_u32(out, (cfg.alpha_base as f32).to_bits());
    Ok(())
}

fn encode_tensors<'a>(
    out: &mut Vec<u8>,
    params: &ParamStore<f32>,
    values: impl Iterator<Item = &'a Matrix<f32>>,
) -> Result<()> {
    put_count(out, params.len(), "parameter count")?;
    for (p, value) in params.iter().zip(values) {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Config(format!("parameter name {} is too long", p.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.shape.len() as u8);
        for &d in &p.shape {
            put_count(out, d, "dimension")?;
        }
        for v in value.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

/// Serializes a model and its optimizer state.
pub fn encode_checkpoint(model: &Model<f32>, state: &AdamState<f32>) -> Result<Vec<u8>> {
    let params = model.params();
    state.check_matches(params)?;
    let mut out = Vec::with_capacity(16 + 12 * params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    encode_config(&mut out, model.config())?;
    encode_tensors(&mut out, params, params.iter().map(|p| &p.value))?;
    encode_tensors(&mut out, params, state.m.iter())?;
    encode_tensors(&mut out, params, state.v.iter())?;
    out.extend_from_slice(&state.step.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!(
                "truncated: {what} needs {n} bytes, {} remain",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.pos as u64, msg)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn decode_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let start = r.pos;
    let n = r.usize("kernel count")?;
    if n > 64 {
        return Err(Error::format(start as u64, format!("implausible kernel count {n}")));
    }
    let kernels = (0..n).map(|_| r.usize("kernel")).collect::<Result<Vec<_>>>()?;
    let cfg = ModelConfig {
        kernels,
        layers_per_stage: r.usize("layers_per_stage")?,
        feature_maps: r.usize("feature_maps")?,
        input_dim: r.usize("input_dim")?,
        num_classes: r.usize("num_classes")?,
        num_decoders: r.usize("num_decoders")?,
        causal: match r.u32("causal")? {
            0 => false,
            1 => true,
            v => return Err(r.err(format!("causal flag must be 0 or 1, got {v}"))),
        },
        dropout: f32::from_bits(r.u32("dropout")?) as f64,
        alpha_base: f32::from_bits(r.u32("alpha_base")?) as f64,
    };
    cfg.validate()
        .map_err(|e| Error::format(start as u64, format!("embedded model config: {e}")))?;
    Ok(cfg)
}

fn decode_tensors(r: &mut Reader<'_>, section: &str) -> Result<Vec<Param<f32>>> {
    let count = r.usize("parameter count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let at = r.pos as u64;
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "parameter name")?)
            .map_err(|_| Error::format(at, format!("{section}: parameter name is not UTF-8")))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let shape = (0..rank).map(|_| r.usize("dimension")).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = matrix_dims(&shape)
            .map_err(|e| Error::format(at, format!("{section} {name}: {e}")))?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::format(at, format!("{section} {name}: size overflows")))?;
        let raw = r.take(n * 4, &format!("{section} {name} values"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let value = Matrix::new(rows, cols, data)?;
        out.push(Param::new(name, shape, value)?);
    }
    Ok(out)
}

fn moments(
    r: &mut Reader<'_>,
    section: &str,
    params: &ParamStore<f32>,
) -> Result<Vec<Matrix<f32>>> {
    let at = r.pos as u64;
    let tensors = decode_tensors(r, section)?;
    if tensors.len() != params.len() {
        return Err(Error::format(
            at,
            format!("{section} has {} entries for {} parameters", tensors.len(), params.len()),
        ));
    }
    tensors
        .into_iter()
        .zip(params.iter())
        .map(|(t, p)| {
            if t.name != p.name || t.shape != p.shape {
                Err(Error::format(
                    at,
                    format!(
                        "{section} entry {} {:?} does not match parameter {} {:?}",
                        t.name, t.shape, p.name, p.shape
                    ),
                ))
            } else {
                Ok(t.value)
            }
        })
        .collect()
}

/// Parses a checkpoint, rejecting malformed or inconsistent content.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model<f32>, AdamState<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}, expected \"MSASTCK1\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            8,
            format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let cfg = decode_config(&mut r)?;
    let param_start = r.pos as u64;
    let mut store = ParamStore::new();
    for p in decode_tensors(&mut r, "parameters")? {
        store
            .push(p)
            .map_err(|e| Error::format(param_start, e.to_string()))?;
    }
    let m = moments(&mut r, "adam m", &store)?;
    let v = moments(&mut r, "adam v", &store)?;
    let step = r.u64("step")?;
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = Model::from_params(&cfg, store).map_err(|e| {
        Error::format(param_start, format!("parameters disagree with embedded config: {e}"))
    })?;
    Ok((model, AdamState { m, v, step }))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model<f32>, state: &AdamState<f32>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, state)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, AdamState<f32>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
