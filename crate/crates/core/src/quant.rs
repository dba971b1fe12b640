//! Post-training round-to-nearest weight quantization.
//!
//! Every weight group (a row of a matrix, or a whole tensor) is mapped onto
//! the symmetric grid `q * scale`, `|q| <= 2^(bits-1) - 1`, with
//! `scale = max|w| / (2^(bits-1) - 1)`. The scale is rounded to a 16-bit
//! mantissa so that `q * scale` is exact in f32; re-quantizing then recovers
//! the same scale and grid, which makes the transform idempotent bit for bit.
//! Norm gains and biases stay in full precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmath::CapacityReport;
use crate::corpus::{Renderer, Vocab};
use crate::error::{Error, Result};
use crate::evaluator::measure_capacity;
use crate::model::{Checkpoint, TensorKind};

pub const METHOD_NOTE: &str = "quantization: round-to-nearest (not GPTQ)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerTensor,
    /// One scale per output row.
    PerChannel,
}

impl std::str::FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::ConfigInvalid(format!("unknown granularity {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantConfig {
    pub bits: u8,
    pub granularity: Granularity,
}

impl QuantConfig {
    pub fn new(bits: u8) -> Self {
        QuantConfig { bits, granularity: Granularity::PerChannel }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.bits, 4 | 8) {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("quantization supports 8 or 4 bits, not {}", self.bits)))
        }
    }

    /// Provenance line attached to every report measured after quantization.
    pub fn note(&self) -> String {
        format!("{METHOD_NOTE}, {} bits, {:?}", self.bits, self.granularity)
    }

    pub fn qmax(&self) -> f64 {
        ((1u32 << (self.bits - 1)) - 1) as f64
    }
}

/// Rounds a positive scale to 16 significant bits.
fn short_mantissa(x: f64) -> f64 {
    let e = x.log2().floor();
    let unit = (e - 15.0).exp2();
    (x / unit).round() * unit
}

/// Group scale; an all-zero group gets scale 1 and is left unchanged.
pub fn group_scale(group: &[f32], qmax: f64) -> f64 {
    let max = group.iter().fold(0.0f64, |m, &w| m.max((w as f64).abs()));
    if max == 0.0 {
        1.0
    } else {
        short_mantissa(max / qmax)
    }
}

/// Quantizes one group in place; returns its scale.
pub fn quantize_group(group: &mut [f32], qmax: f64) -> f64 {
    let s = group_scale(group, qmax);
    for w in group.iter_mut() {
        let q = (*w as f64 / s).round().clamp(-qmax, qmax);
        *w = (q * s) as f32;
    }
    s
}

/// Quantized copy of `ck`: matrices and embeddings on the RTN grid,
/// everything else untouched, optimizer moments dropped.
pub fn quantize_rtn(ck: &Checkpoint, qc: QuantConfig) -> Result<Checkpoint> {
    qc.validate()?;
    let mut out = ck.clone();
    out.adam = None;
    out.quant = Some(qc);
    let qmax = qc.qmax();
    let tensors = out.model.tensors().to_vec();
    let params = out.model.params_mut();
    let mut pieces: Vec<(&mut [f32], usize)> = Vec::new();
    let mut rest: &mut [f32] = params;
    let mut at = 0;
    for t in &tensors {
        let (_, tail) = std::mem::take(&mut rest).split_at_mut(t.offset - at);
        let (mine, tail) = tail.split_at_mut(t.len());
        rest = tail;
        at = t.offset + t.len();
        if matches!(t.kind, TensorKind::Matrix | TensorKind::Embedding) {
            pieces.push((mine, t.cols));
        }
    }
    pieces.into_par_iter().for_each(|(w, cols)| match qc.granularity {
        Granularity::PerTensor => {
            quantize_group(w, qmax);
        }
        Granularity::PerChannel => w.chunks_mut(cols).for_each(|row| {
            quantize_group(row, qmax);
        }),
    });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantDelta {
    pub before: CapacityReport,
    pub after: CapacityReport,
}

/// Capacity of `ck` before and after quantization, on the same evaluation
/// sample; `params` is the parameter count charged to both.
#[allow(clippy::too_many_arguments)]
pub fn quant_capacity_delta(
    renderer: &Renderer<'_>,
    vocab: &Vocab,
    ck: &Checkpoint,
    qc: QuantConfig,
    params: u64,
    exposures: u64,
    sample_size: usize,
    seed: u64,
) -> Result<QuantDelta> {
    let before = measure_capacity(&ck.model, params, renderer, vocab, exposures, sample_size, seed)?;
    let q = quantize_rtn(ck, qc)?;
    let mut after = measure_capacity(&q.model, params, renderer, vocab, exposures, sample_size, seed)?;
    after.notes.push(qc.note());
    Ok(QuantDelta { before, after })
}
