//! AdamW training over a stream of packed windows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{AdamState, Checkpoint};
use super::config::{ModelConfig, OptimConfig, TensorKind};
use crate::corpus::Window;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Sequential gradient accumulation; otherwise windows of a batch run in
    /// parallel and are reduced in batch order.
    pub deterministic: bool,
    pub log_every: usize,
    /// Pause once this many steps are done (the schedule still spans `optim.steps`).
    pub stop_at: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { deterministic: true, log_every: 100, stop_at: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-token loss of each step taken, starting at `first_step`.
    pub losses: Vec<f64>,
    pub first_step: usize,
}

impl TrainLog {
    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Initializes a model and trains it for `optim.steps` steps.
pub fn train<I>(
    config: ModelConfig,
    optim: OptimConfig,
    seed: u64,
    windows: I,
    opts: TrainOptions,
) -> Result<(Checkpoint, TrainLog)>
where
    I: IntoIterator<Item = Result<Window>>,
{
    let mut ck = Checkpoint::init(config, seed)?;
    ck.optim = Some(optim);
    let log = resume(&mut ck, windows, opts)?;
    Ok((ck, log))
}

/// Continues training to `optim.steps`. `windows` is the full training
/// stream; the `windows_seen` already consumed are skipped.
pub fn resume<I>(ck: &mut Checkpoint, windows: I, opts: TrainOptions) -> Result<TrainLog>
where
    I: IntoIterator<Item = Result<Window>>,
{
    let optim = ck.optim.ok_or_else(|| Error::ConfigInvalid("checkpoint has no optimizer config".into()))?;
    optim.validate()?;
    let n = ck.model.param_count();
    let adam = ck.adam.get_or_insert_with(|| AdamState::zeros(n));
    if adam.m.len() != n || adam.v.len() != n {
        return Err(Error::ShapeMismatch("optimizer moments do not match the model".into()));
    }
    let decay: Vec<bool> = {
        let mut mask = vec![false; n];
        for t in ck.model.tensors() {
            if matches!(t.kind, TensorKind::Matrix | TensorKind::Embedding) {
                mask[t.range()].fill(true);
            }
        }
        mask
    };
    let mut stream = windows.into_iter().skip(ck.windows_seen as usize);
    let mut log = TrainLog { losses: Vec::new(), first_step: ck.step };
    let mut grad = vec![0.0f32; n];
    let end = opts.stop_at.map_or(optim.steps, |s| s.min(optim.steps));
    while ck.step < end {
        let batch: Vec<Window> = stream.by_ref().take(optim.batch).collect::<Result<_>>()?;
        if batch.len() < optim.batch {
            return Err(Error::ConfigInvalid(format!("window stream ended at step {} of {}", ck.step, optim.steps)));
        }
        let targets: usize =
            batch.iter().map(|w| w.tokens.iter().skip(1).filter(|&&t| t != crate::corpus::vocab::PAD).count()).sum();
        let scale = 1.0 / targets.max(1) as f32;
        grad.fill(0.0);
        let model = &ck.model;
        let total = if opts.deterministic || batch.len() == 1 {
            let mut total = 0.0;
            for w in &batch {
                total += model.loss_and_grad(&w.tokens, None, scale, &mut grad)?.0;
            }
            total
        } else {
            let parts: Vec<(f64, Vec<f32>)> = batch
                .par_iter()
                .map(|w| {
                    let mut g = vec![0.0f32; n];
                    model.loss_and_grad(&w.tokens, None, scale, &mut g).map(|(l, _)| (l, g))
                })
                .collect::<Result<_>>()?;
            let mut total = 0.0;
            for (l, g) in parts {
                total += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            total
        };
        let loss = total / targets.max(1) as f64;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::DivergenceDetected { step: ck.step, loss });
        }

        let adam = ck.adam.as_mut().expect("initialized above");
        let t = (ck.step + 1) as i32;
        let lr = optim.lr_at(ck.step) as f32;
        let (b1, b2, eps, wd) = (optim.beta1 as f32, optim.beta2 as f32, optim.eps as f32, optim.weight_decay as f32);
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let params = ck.model.params_mut();
        for i in 0..n {
            let g = grad[i];
            adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
            adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
            let upd = (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + eps);
            let decay_term = if decay[i] { wd * params[i] } else { 0.0 };
            params[i] -= lr * (upd + decay_term);
        }
        ck.step += 1;
        ck.windows_seen += optim.batch as u64;
        log.losses.push(loss);
        if opts.log_every > 0 && (ck.step.is_multiple_of(opts.log_every) || ck.step == optim.steps) {
            log::info!("step {} / {}: loss {:.4} lr {:.2e}", ck.step, optim.steps, loss, lr);
        }
    }
    Ok(log)
}
