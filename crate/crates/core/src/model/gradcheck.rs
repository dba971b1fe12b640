//! Finite-difference validation of the analytic gradient.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, TensorKind};
use super::Model;
use crate::corpus::vocab::PAD;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const GRAD_CHECK_STEP: f64 = 1e-4;
pub const GRAD_CHECK_PARAMS: usize = 200;
const SEQ_LEN: usize = 12;
/// Relative errors are taken against at least this magnitude, so parameters
/// with vanishing gradients do not turn rounding noise into large ratios.
const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Tensor holding the worst parameter.
    pub worst: String,
}

/// Compares analytic gradients to central differences on 200 parameters
/// spread round-robin over every tensor, at a random well-conditioned point
/// (weights far from the tiny training init so all paths carry signal).
pub fn grad_check(config: &ModelConfig, seed: u64) -> Result<GradCheck> {
    if config.d() > 32 || config.layers > 2 {
        return Err(Error::ConfigInvalid("gradient check needs d <= 32 and at most 2 layers".into()));
    }
    let mut model = Model::<f64>::init(*config, seed)?;
    let mut r = rng::stream(seed, &[streams::GRADCHECK]);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let d = config.d() as f64;
    for t in model.tensors.clone() {
        let dst = &mut model.params[t.range()];
        for v in dst.iter_mut() {
            let z = noise.sample(&mut r);
            *v = match t.kind {
                TensorKind::NormGain => 1.0 + 0.2 * z,
                TensorKind::NormBias => 0.2 * z,
                TensorKind::Embedding => z,
                TensorKind::Matrix => z / d.sqrt(),
            };
        }
    }
    let len = SEQ_LEN.min(config.window_len);
    let mut tokens: Vec<u32> = (0..len).map(|_| r.gen_range(1..config.vocab_size as u32)).collect();
    tokens[len - 1] = PAD;

    let mut grad = vec![0.0; model.params.len()];
    model.loss_and_grad(&tokens, None, 1.0, &mut grad)?;

    let tensors = model.tensors.clone();
    let mut worst = (0.0f64, String::new());
    for i in 0..GRAD_CHECK_PARAMS {
        let t = &tensors[i % tensors.len()];
        let p = t.offset + r.gen_range(0..t.len());
        let orig = model.params[p];
        model.params[p] = orig + GRAD_CHECK_STEP;
        let up = model.forward_nll(&tokens, None)?.total;
        model.params[p] = orig - GRAD_CHECK_STEP;
        let down = model.forward_nll(&tokens, None)?.total;
        model.params[p] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let rel = (numeric - grad[p]).abs() / numeric.abs().max(grad[p].abs()).max(GRAD_FLOOR);
        if rel > worst.0 || worst.1.is_empty() {
            worst = (rel, t.name.clone());
        }
    }
    Ok(GradCheck { max_rel_error: worst.0, checked: GRAD_CHECK_PARAMS, worst: worst.1 })
}
