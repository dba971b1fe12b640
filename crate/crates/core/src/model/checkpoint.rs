//! Trainer state and its versioned binary file: magic, format version, a
//! length-prefixed JSON header, then little-endian f32 tensors (parameters,
//! then AdamW first and second moments when present) in declared order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, OptimConfig};
use super::scalar::Scalar;
use super::Model;
use crate::error::{Error, Result};
use crate::quant::QuantConfig;

const MAGIC: &[u8; 8] = b"CAPLABCK";
pub const FORMAT_VERSION: u32 = 1;

pub type QuantTag = QuantConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optim: Option<OptimConfig>,
    pub adam: Option<AdamState>,
    /// Optimizer steps taken.
    pub step: usize,
    pub seed: u64,
    /// Windows consumed from the training stream; the stream is a pure
    /// function of its plan, so this is the whole data-order RNG state.
    pub windows_seen: u64,
    pub quant: Option<QuantConfig>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    config: ModelConfig,
    step: usize,
    seed: u64,
    windows_seen: u64,
    optim: Option<OptimConfig>,
    moments: bool,
    quant: Option<QuantConfig>,
    tensors: Vec<String>,
}

impl Checkpoint {
    /// A freshly initialized model with no optimizer state.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Checkpoint {
            model: Model::init(config, seed)?,
            optim: None,
            adam: None,
            step: 0,
            seed,
            windows_seen: 0,
            quant: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            version: FORMAT_VERSION,
            dtype: f32::NAME.into(),
            config: *self.model.config(),
            step: self.step,
            seed: self.seed,
            windows_seen: self.windows_seen,
            optim: self.optim,
            moments: self.adam.is_some(),
            quant: self.quant,
            tensors: self.model.tensors().iter().map(|t| t.name.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.model.param_count() * 4);
        let mut dump = |xs: &[f32], out: &mut W| -> Result<()> {
            buf.clear();
            xs.iter().for_each(|&x| x.write_le(&mut buf));
            out.write_all(&buf)?;
            Ok(())
        };
        dump(self.model.params(), &mut out)?;
        if let Some(a) = &self.adam {
            dump(&a.m, &mut out)?;
            dump(&a.v, &mut out)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |d: String| Error::format("checkpoint", d);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json)?;
        if h.dtype != f32::NAME {
            return Err(bad(format!("unsupported dtype {}", h.dtype)));
        }
        let expected: Vec<String> = h.config.tensors().into_iter().map(|t| t.name).collect();
        if expected != h.tensors {
            return Err(bad("tensor list does not match the configuration".into()));
        }
        let n = super::param_count(&h.config)? as usize;
        let read = |input: &mut R| -> Result<Vec<f32>> {
            let mut raw = vec![0u8; n * 4];
            input.read_exact(&mut raw)?;
            Ok(raw.chunks_exact(4).map(f32::read_le).collect())
        };
        let params = read(&mut input)?;
        let adam = if h.moments { Some(AdamState { m: read(&mut input)?, v: read(&mut input)? }) } else { None };
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Checkpoint {
            model: Model::from_params(h.config, params)?,
            optim: h.optim,
            adam,
            step: h.step,
            seed: h.seed,
            windows_seen: h.windows_seen,
            quant: h.quant,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let c = ModelConfig { head_dim: 8, window_len: 16, ..ModelConfig::new(1, 2, 30) };
        Checkpoint::init(c, 3).unwrap()
    }

    #[test]
    fn round_trips_with_and_without_moments() {
        let mut ck = small();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), ck);
        let n = ck.model.param_count();
        ck.adam = Some(AdamState { m: vec![0.5; n], v: vec![0.25; n] });
        ck.optim = Some(OptimConfig::new(1e-3, 0.1, 2, 10));
        ck.step = 7;
        ck.windows_seen = 14;
        buf.clear();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn rejects_corruption() {
        let ck = small();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(extra.as_slice()).is_err());
        buf[0] = b'X';
        assert!(Checkpoint::read_from(buf.as_slice()).is_err());
    }
}
