//! Binary checkpoints: `"TATC"`, version, the model config as `u32`s, then
//! each parameter as name length, UTF-8 name, rank, dims and `f32` payload.
//! Everything little-endian.

use std::fs;
use std::path::Path;

use super::params::{parameter_layout, Param, ParameterSet};
use super::ModelConfig;
use crate::error::{Result, TatError};

const MAGIC: &[u8; 4] = b"TATC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
}

impl Checkpoint {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Checkpoint {
            config,
            params: ParameterSet::init(&config),
        })
    }
}

fn config_words(c: &ModelConfig) -> [u32; 8] {
    [
        c.dim as u32,
        c.depth as u32,
        c.heads as u32,
        c.mlp_ratio as u32,
        c.num_base_classes as u32,
        c.input_dim as u32,
        c.max_frames as u32,
        c.seed,
    ]
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for w in config_words(&ckpt.config) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for p in &ckpt.params.params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(TatError::parse(
                "checkpoint",
                format!("truncated while reading {what}: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(TatError::parse("checkpoint", "bad magic, expected \"TATC\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(TatError::parse("checkpoint", format!("unsupported version {version}")));
    }
    let mut w = [0u32; 8];
    for (i, slot) in w.iter_mut().enumerate() {
        *slot = r.u32(&format!("config word {i}"))?;
    }
    let config = ModelConfig {
        dim: w[0] as usize,
        depth: w[1] as usize,
        heads: w[2] as usize,
        mlp_ratio: w[3] as usize,
        num_base_classes: w[4] as usize,
        input_dim: w[5] as usize,
        max_frames: w[6] as usize,
        seed: w[7],
    };
    config.validate()?;

    let layout = parameter_layout(&config);
    let mut params = Vec::with_capacity(layout.len());
    for (name, shape) in layout {
        let len = r.u32("name length")? as usize;
        let got = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| TatError::parse("checkpoint", "parameter name is not UTF-8"))?;
        if got != name {
            return Err(TatError::parse(&name, format!("found parameter '{got}' in its place")));
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        if dims != shape {
            return Err(TatError::parse(&name, format!("shape {dims:?}, expected {shape:?}")));
        }
        let count: usize = shape.iter().product();
        let data = r
            .take(count * 4, &name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        params.push(Param { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(TatError::parse("checkpoint", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        config,
        params: ParameterSet { params },
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| TatError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ckpt = Checkpoint::init(ModelConfig { depth: 2, ..ModelConfig::default() }).unwrap();
        let bytes = encode_checkpoint(&ckpt);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ckpt);
        assert_eq!(encode_checkpoint(&decode_checkpoint(&bytes).unwrap()), bytes);
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode_checkpoint(&Checkpoint::init(ModelConfig::default()).unwrap());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
