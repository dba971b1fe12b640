//! A micro decoder-only transformer with rotary attention, its hand-written
//! backward pass, AdamW training and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
mod net;
pub mod scalar;
pub mod train;

pub use checkpoint::{AdamState, Checkpoint, QuantTag};
pub use config::{
    effective_param_count, param_count, Activation, MlpKind, ModelConfig, OptimConfig, TensorKind, TensorSpec,
};
pub use gradcheck::{grad_check, GradCheck};
pub use scalar::Scalar;
pub use train::{train, TrainLog, TrainOptions};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::evaluator::ModelInterface;
use crate::rng::{self, streams};
use net::{Index, Net};

pub const INIT_STD: f64 = 0.02;

/// Configuration plus a flat parameter buffer.
#[derive(Clone, Debug)]
pub struct Model<T = f32> {
    config: ModelConfig,
    tensors: Vec<TensorSpec>,
    idx: Index,
    params: Vec<T>,
}

impl<T: PartialEq> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Teacher-forced loss of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct NllOutput {
    pub total: f64,
    /// Entry `i` scores token `i`; entry 0, PAD targets and masked positions are 0.
    pub per_token: Vec<f64>,
    pub count: usize,
}

impl<T: Scalar> Model<T> {
    /// Normal(0, 0.02) matrices and embedding, residual output projections
    /// scaled by `1/sqrt(2 layers)`, unit gains and zero biases. Each tensor
    /// draws from its own stream so the layout can grow without reshuffling.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let resid = INIT_STD / (2.0 * config.layers as f64).sqrt();
        for (i, t) in m.tensors.iter().enumerate() {
            let dst = &mut m.params[t.range()];
            match t.kind {
                TensorKind::NormGain => dst.fill(T::one()),
                TensorKind::NormBias => dst.fill(T::zero()),
                TensorKind::Embedding | TensorKind::Matrix => {
                    let std = if t.residual { resid } else { INIT_STD };
                    let normal = Normal::new(0.0, std).expect("positive std");
                    let mut r = rng::stream(seed, &[streams::INIT, i as u64]);
                    dst.iter_mut().for_each(|v| *v = T::c(normal.sample(&mut r)));
                }
            }
        }
        Ok(m)
    }

    fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.tensors();
        let n = param_count(&config)? as usize;
        Ok(Model { idx: Index::new(&config, &tensors), tensors, config, params: vec![T::zero(); n] })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        if params.len() != m.params.len() {
            return Err(Error::ShapeMismatch(format!("{} parameters for a model of {}", params.len(), m.params.len())));
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }

    /// The output projection; the embedding itself when weights are tied.
    pub fn unembedding(&self) -> &[T] {
        self.tensor("unembed").or_else(|| self.tensor("embed")).expect("embedding exists")
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            tensors: self.tensors.clone(),
            idx: self.idx.clone(),
            params: self.params.iter().map(|&v| U::c(v.f())).collect(),
        }
    }

    fn net(&self) -> Net<'_, T> {
        Net { cfg: &self.config, idx: &self.idx, p: &self.params }
    }

    #[cfg(test)]
    pub(crate) fn forward_cache(&self, tokens: &[u32]) -> Result<(net::Cache<T>, Vec<T>)> {
        self.net().forward(tokens)
    }

    /// Raw `t x vocab` logits.
    pub fn logits(&self, tokens: &[u32]) -> Result<Vec<T>> {
        Ok(self.net().forward(tokens)?.1)
    }

    /// Teacher-forced causal NLL. `mask[i]` selects which targets count;
    /// PAD targets never do.
    pub fn forward_nll(&self, tokens: &[u32], mask: Option<&[bool]>) -> Result<NllOutput> {
        check_mask(tokens, mask)?;
        if tokens.is_empty() {
            return Ok(NllOutput { total: 0.0, per_token: vec![], count: 0 });
        }
        let (_, mut logits) = self.net().forward(tokens)?;
        let per_token = net::token_nll(tokens, mask, &mut logits, self.config.vocab_size, None);
        let count = (0..tokens.len()).filter(|&i| net::is_target(tokens, mask, i)).count();
        Ok(NllOutput { total: per_token.iter().sum(), per_token, count })
    }

    /// Adds `scale * d(sum NLL)/d params` to `grad`; returns the summed NLL
    /// and the number of scored targets.
    pub fn loss_and_grad(
        &self,
        tokens: &[u32],
        mask: Option<&[bool]>,
        scale: T,
        grad: &mut [T],
    ) -> Result<(f64, usize)> {
        check_mask(tokens, mask)?;
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient of {} for {} parameters",
                grad.len(),
                self.params.len()
            )));
        }
        if tokens.is_empty() {
            return Ok((0.0, 0));
        }
        let net = self.net();
        let (cache, mut logits) = net.forward(tokens)?;
        let nll = net::token_nll(tokens, mask, &mut logits, self.config.vocab_size, Some(scale));
        net.backward(tokens, &cache, &logits, grad);
        let count = (0..tokens.len()).filter(|&i| net::is_target(tokens, mask, i)).count();
        Ok((nll.iter().sum(), count))
    }
}

fn check_mask(tokens: &[u32], mask: Option<&[bool]>) -> Result<()> {
    match mask {
        Some(m) if m.len() != tokens.len() => {
            Err(Error::ShapeMismatch(format!("mask of {} for {} tokens", m.len(), tokens.len())))
        }
        _ => Ok(()),
    }
}

impl<T: Scalar> ModelInterface for Model<T> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn log_probs(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        if tokens.is_empty() {
            return Ok(vec![]);
        }
        let logits = self.logits(tokens)?;
        Ok(logits
            .chunks(self.config.vocab_size)
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|v| v.f()).collect();
                let lse = crate::evaluator::logsumexp(&row);
                row.into_iter().map(|v| v - lse).collect()
            })
            .collect())
    }
}
