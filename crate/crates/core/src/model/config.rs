//! Architecture and optimizer configuration, parameter layout and count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpKind {
    /// `W2 act(W1 x)`, hidden 4d.
    Standard,
    /// `V (act(W1 x) * (W2 x))`, hidden ⌊8d/3⌋ so the block keeps ~8d² weights.
    Gated,
    /// Standard form with hidden d (a quarter of the usual size).
    Quarter,
    /// Attention only; the second layer norm goes too.
    None,
}

impl std::str::FromStr for MlpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::ConfigInvalid(format!("unknown MLP kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Silu,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::ConfigInvalid(format!("unknown activation {s:?}")))
    }
}

fn default_head_dim() -> usize {
    64
}

fn default_window() -> usize {
    crate::corpus::DEFAULT_WINDOW
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    pub mlp: MlpKind,
    pub activation: Activation,
    pub tie_weights: bool,
    pub vocab_size: usize,
    #[serde(default = "default_window")]
    pub window_len: usize,
}

/// What a tensor is, for weight decay and quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Embedding,
    Matrix,
    NormGain,
    NormBias,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: TensorKind,
    /// Output projection into the residual stream (init scaled by 1/sqrt(2 layers)).
    pub residual: bool,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl ModelConfig {
    pub fn new(layers: usize, heads: usize, vocab_size: usize) -> Self {
        ModelConfig {
            layers,
            heads,
            head_dim: 64,
            mlp: MlpKind::Standard,
            activation: Activation::Gelu,
            tie_weights: true,
            vocab_size,
            window_len: crate::corpus::DEFAULT_WINDOW,
        }
    }

    pub fn d(&self) -> usize {
        self.heads * self.head_dim
    }

    /// MLP hidden width.
    pub fn hidden(&self) -> usize {
        let d = self.d();
        match self.mlp {
            MlpKind::Standard => 4 * d,
            MlpKind::Gated => 8 * d / 3,
            MlpKind::Quarter => d,
            MlpKind::None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if self.layers == 0 {
            return bad("at least one layer is required");
        }
        if self.heads == 0 || self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return bad("heads must be positive and head_dim a positive even number");
        }
        if self.vocab_size < 4 {
            return bad("vocabulary must hold the reserved tokens and at least one word");
        }
        if self.window_len < 2 {
            return bad("window_len must be at least 2");
        }
        Ok(())
    }

    /// Every trainable tensor in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let d = self.d();
        let g = self.hidden();
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize, kind: TensorKind, residual: bool| {
            out.push(TensorSpec { name, rows, cols, kind, residual, offset });
            offset += rows * cols;
        };
        push("embed".into(), self.vocab_size, d, TensorKind::Embedding, false);
        for l in 0..self.layers {
            push(format!("l{l}.ln1.g"), 1, d, TensorKind::NormGain, false);
            push(format!("l{l}.ln1.b"), 1, d, TensorKind::NormBias, false);
            push(format!("l{l}.wq"), d, d, TensorKind::Matrix, false);
            push(format!("l{l}.wk"), d, d, TensorKind::Matrix, false);
            push(format!("l{l}.wv"), d, d, TensorKind::Matrix, false);
            push(format!("l{l}.wo"), d, d, TensorKind::Matrix, true);
            if self.mlp != MlpKind::None {
                push(format!("l{l}.ln2.g"), 1, d, TensorKind::NormGain, false);
                push(format!("l{l}.ln2.b"), 1, d, TensorKind::NormBias, false);
                push(format!("l{l}.w1"), g, d, TensorKind::Matrix, false);
                if self.mlp == MlpKind::Gated {
                    push(format!("l{l}.w2"), g, d, TensorKind::Matrix, false);
                }
                push(format!("l{l}.wout"), d, g, TensorKind::Matrix, true);
            }
        }
        push("lnf.g".into(), 1, d, TensorKind::NormGain, false);
        push("lnf.b".into(), 1, d, TensorKind::NormBias, false);
        if !self.tie_weights {
            push("unembed".into(), self.vocab_size, d, TensorKind::Matrix, false);
        }
        out
    }
}

/// Closed-form trainable parameter count.
pub fn param_count(c: &ModelConfig) -> Result<u64> {
    c.validate()?;
    let (v, d, g, l) = (c.vocab_size as u64, c.d() as u64, c.hidden() as u64, c.layers as u64);
    let embed = if c.tie_weights { v * d } else { 2 * v * d };
    let mlp = match c.mlp {
        MlpKind::Standard | MlpKind::Quarter => 2 * d * g + 2 * d,
        MlpKind::Gated => 3 * d * g + 2 * d,
        MlpKind::None => 0,
    };
    Ok(embed + l * (4 * d * d + 2 * d + mlp) + 2 * d)
}

/// Parameters counted for capacity: embedding rows of tokens that never
/// occur in the corpus are excluded.
pub fn effective_param_count(c: &ModelConfig, used_tokens: usize) -> Result<u64> {
    let full = param_count(c)?;
    if used_tokens > c.vocab_size {
        return Err(Error::ShapeMismatch(format!("{used_tokens} used tokens in a vocabulary of {}", c.vocab_size)));
    }
    let unused = (c.vocab_size - used_tokens) as u64 * c.d() as u64;
    Ok(full - if c.tie_weights { unused } else { 2 * unused })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub warmup: usize,
    pub steps: usize,
    #[serde(default = "OptimConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "OptimConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "OptimConfig::default_eps")]
    pub eps: f64,
    /// Final learning rate as a fraction of `lr`.
    #[serde(default = "OptimConfig::default_floor")]
    pub floor: f64,
}

impl OptimConfig {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }
    fn default_floor() -> f64 {
        0.1
    }

    pub fn new(lr: f64, weight_decay: f64, batch: usize, steps: usize) -> Self {
        OptimConfig {
            lr,
            weight_decay,
            batch,
            warmup: 1000.min(steps),
            steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            floor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.weight_decay >= 0.0
            && self.batch > 0
            && self.steps > 0
            && self.warmup <= self.steps
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && (0.0..=1.0).contains(&self.floor);
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("bad optimizer config {self:?}")))
        }
    }

    /// Linear warmup to `lr`, then cosine decay to `floor * lr` at the last step.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = (self.steps - self.warmup).max(1) as f64;
        let t = ((step - self.warmup) as f64 / span).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.lr * (self.floor + (1.0 - self.floor) * cos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_tensors(c: &ModelConfig) -> u64 {
        c.tensors().iter().map(|t| t.len() as u64).sum()
    }

    #[test]
    fn count_matches_tensor_enumeration() {
        for mlp in [MlpKind::Standard, MlpKind::Gated, MlpKind::Quarter, MlpKind::None] {
            for tie in [true, false] {
                let c = ModelConfig { mlp, tie_weights: tie, ..ModelConfig::new(2, 2, 1000) };
                assert_eq!(param_count(&c).unwrap(), sum_of_tensors(&c), "{mlp:?} tie={tie}");
            }
        }
    }

    #[test]
    fn reference_counts() {
        let c = ModelConfig::new(2, 2, 1000);
        let d = 128u64;
        assert_eq!(param_count(&c).unwrap(), 1000 * d + 2 * (4 * d * d + 8 * d * d + 4 * d) + 2 * d);
        let none = ModelConfig { mlp: MlpKind::None, ..c };
        let one_layer = |c: &ModelConfig| {
            param_count(&ModelConfig { layers: 2, ..*c }).unwrap()
                - param_count(&ModelConfig { layers: 1, ..*c }).unwrap()
        };
        assert_eq!(one_layer(&none), 4 * d * d + 2 * d);
        let untied = ModelConfig { tie_weights: false, ..c };
        assert_eq!(param_count(&untied).unwrap() - param_count(&c).unwrap(), 1000 * d);
        let gated = ModelConfig { mlp: MlpKind::Gated, ..c };
        let g = 8 * d / 3;
        assert_eq!(one_layer(&gated), 4 * d * d + 3 * d * g + 4 * d);
        assert!((3 * d * g) as f64 / (8 * d * d) as f64 > 0.99);
        assert_eq!(one_layer(&ModelConfig { mlp: MlpKind::Quarter, ..c }), 4 * d * d + 2 * d * d + 4 * d);
    }

    #[test]
    fn unused_embedding_rows_are_not_counted() {
        let c = ModelConfig::new(2, 2, 1000);
        let full = param_count(&c).unwrap();
        assert_eq!(effective_param_count(&c, 1000).unwrap(), full);
        assert_eq!(effective_param_count(&c, 900).unwrap(), full - 100 * 128);
        let untied = ModelConfig { tie_weights: false, ..c };
        assert_eq!(param_count(&untied).unwrap() - effective_param_count(&untied, 900).unwrap(), 200 * 128);
        assert!(effective_param_count(&c, 1001).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(param_count(&ModelConfig::new(0, 2, 100)).is_err());
        assert!(param_count(&ModelConfig { head_dim: 3, ..ModelConfig::new(1, 2, 100) }).is_err());
        assert!("gated".parse::<MlpKind>().is_ok());
        assert!("relu".parse::<Activation>().is_err());
    }

    #[test]
    fn schedule_warms_up_then_decays_to_floor() {
        let o = OptimConfig { warmup: 10, ..OptimConfig::new(1.0, 0.0, 1, 110) };
        assert!((o.lr_at(0) - 0.1).abs() < 1e-12);
        assert!((o.lr_at(9) - 1.0).abs() < 1e-12);
        assert!((o.lr_at(10) - 1.0).abs() < 1e-12);
        assert!((o.lr_at(110) - 0.1).abs() < 1e-12);
        assert!((0..110).all(|s| o.lr_at(s + 1) <= o.lr_at(s) || s < 9));
        assert!(OptimConfig { warmup: 200, ..o }.validate().is_err());
    }
}
