//! Experiment files: one JSON document describing a grid of runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Ratio, TemplateMode, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::evaluator::DEFAULT_SAMPLE_SIZE;
use crate::knowledge::{BioDSpec, BioSSpec, BIOS_N0};
use crate::model::{Activation, MlpKind, ModelConfig, OptimConfig};
use crate::quant::QuantConfig;

pub const OUT_ENV: &str = "CAPLAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DatasetSpec {
    Bios { n: usize },
    Biod { n: usize, k: usize, c: usize, d: usize, l: u32, t: u64, n0: u64 },
}

impl DatasetSpec {
    pub fn n(&self) -> usize {
        match *self {
            DatasetSpec::Bios { n } | DatasetSpec::Biod { n, .. } => n,
        }
    }

    pub fn bios_spec(&self, seed: u64) -> Option<BioSSpec> {
        match *self {
            DatasetSpec::Bios { n } => Some(BioSSpec { n, seed }),
            DatasetSpec::Biod { .. } => None,
        }
    }

    pub fn biod_spec(&self, seed: u64) -> Option<BioDSpec> {
        match *self {
            DatasetSpec::Biod { n, k, c, d, l, t, n0 } => Some(BioDSpec { n, k, c, d, l, t, n0, seed }),
            DatasetSpec::Bios { .. } => None,
        }
    }

    pub fn default_mode(&self) -> TemplateMode {
        match self {
            DatasetSpec::Bios { .. } => TemplateMode::MultiPermute,
            DatasetSpec::Biod { .. } => TemplateMode::FixedTemplate,
        }
    }
}

fn default_head_dim() -> usize {
    64
}
fn default_mlp() -> MlpKind {
    MlpKind::Standard
}
fn default_activation() -> Activation {
    Activation::Gelu
}
fn yes() -> bool {
    true
}

/// A model grid entry; vocabulary size and window come from the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub layers: usize,
    pub heads: usize,
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    #[serde(default = "default_mlp")]
    pub mlp: MlpKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "yes")]
    pub tie_weights: bool,
}

impl ArchSpec {
    pub fn model(&self, vocab_size: usize, window_len: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            head_dim: self.head_dim,
            mlp: self.mlp,
            activation: self.activation,
            tie_weights: self.tie_weights,
            vocab_size,
            window_len,
        }
    }
}

fn default_warmup() -> usize {
    1000
}
fn default_floor() -> f64 {
    0.1
}

/// An optimizer grid entry; the step count follows from the corpus size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimSpec {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl OptimSpec {
    /// One pass over `windows` windows; warmup capped at a tenth of the run
    /// when the run is too short for the configured warmup.
    pub fn optim(&self, windows: usize) -> OptimConfig {
        let steps = (windows / self.batch).max(1);
        let warmup = if self.warmup * 10 > steps { (steps / 10).min(self.warmup) } else { self.warmup };
        OptimConfig { warmup, floor: self.floor, ..OptimConfig::new(self.lr, self.weight_decay, self.batch, steps) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureSpec {
    None,
    Junk { useful_fraction: Ratio, n_prime: u64, special_token: bool },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    /// Template words plus the tokens of the knowledge base.
    #[default]
    Kb,
    /// Also every bioS table entry (implied by junk mixtures).
    Tables,
}

fn default_exposures() -> Vec<usize> {
    vec![1000]
}
fn default_mixtures() -> Vec<MixtureSpec> {
    vec![MixtureSpec::None]
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_eval() -> usize {
    DEFAULT_SAMPLE_SIZE
}
fn default_workers() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_exposures")]
    pub exposures: Vec<usize>,
    /// Defaults to multi_permute for bioS and fixed_template for bioD.
    #[serde(default)]
    pub template_mode: Option<TemplateMode>,
    pub models: Vec<ArchSpec>,
    pub optims: Vec<OptimSpec>,
    #[serde(default = "default_mixtures")]
    pub mixtures: Vec<MixtureSpec>,
    #[serde(default)]
    pub quant: Vec<QuantConfig>,
    #[serde(default)]
    pub vocab: VocabMode,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_eval")]
    pub eval_sample: usize,
    #[serde(default = "default_out")]
    pub output: PathBuf,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default = "yes")]
    pub save_checkpoints: bool,
}

/// One fully determined run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub dataset: DatasetSpec,
    pub exposures: usize,
    pub arch: ArchSpec,
    pub optim: OptimSpec,
    pub mixture: MixtureSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.datasets.is_empty()
            || self.exposures.is_empty()
            || self.models.is_empty()
            || self.optims.is_empty()
            || self.mixtures.is_empty()
        {
            return bad("every grid axis needs at least one entry".into());
        }
        if self.exposures.contains(&0) {
            return bad("exposure counts must be positive".into());
        }
        if self.workers == 0 || self.eval_sample == 0 {
            return bad("workers and eval_sample must be positive".into());
        }
        for d in &self.datasets {
            match d {
                DatasetSpec::Bios { n } => BioSSpec { n: *n, seed: 0 }.validate()?,
                DatasetSpec::Biod { .. } => d.biod_spec(0).expect("bioD").validate()?,
            }
            if matches!(d, DatasetSpec::Biod { .. }) && self.mixtures.iter().any(|m| *m != MixtureSpec::None) {
                return bad("junk mixtures apply to bioS datasets only".into());
            }
        }
        for a in &self.models {
            a.model(16, self.window).validate()?;
        }
        for o in &self.optims {
            o.optim(o.batch * 10).validate()?;
        }
        for m in &self.mixtures {
            if let MixtureSpec::Junk { useful_fraction, n_prime, .. } = m {
                useful_fraction.validate()?;
                if *n_prime == 0 || *n_prime > BIOS_N0 {
                    return bad(format!("junk population {n_prime} outside 1..={BIOS_N0}"));
                }
            }
        }
        for q in &self.quant {
            q.validate()?;
        }
        Ok(())
    }

    /// Grid points in a fixed order: dataset, exposures, model, optimizer, mixture.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &dataset in &self.datasets {
            for &exposures in &self.exposures {
                for &arch in &self.models {
                    for &optim in &self.optims {
                        for &mixture in &self.mixtures {
                            out.push(GridPoint { index: out.len(), dataset, exposures, arch, optim, mixture });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn mode_for(&self, d: &DatasetSpec) -> TemplateMode {
        self.template_mode.unwrap_or_else(|| d.default_mode())
    }

    /// Stable identity of a grid point under this configuration: everything
    /// that influences its result, hashed.
    pub fn point_hash(&self, p: &GridPoint) -> String {
        let identity = serde_json::json!({
            "dataset": p.dataset,
            "exposures": p.exposures,
            "arch": p.arch,
            "optim": p.optim,
            "mixture": p.mixture,
            "template_mode": self.mode_for(&p.dataset),
            "quant": self.quant,
            "vocab": self.vocab,
            "window": self.window,
            "eval_sample": self.eval_sample,
            "seed": self.seed,
            "deterministic": self.deterministic,
        });
        let digest = Sha256::digest(identity.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn config_hash(&self) -> String {
        let text =
            serde_json::to_string(&ExperimentConfig { output: PathBuf::new(), ..self.clone() }).expect("serializable");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    /// The output directory, unless overridden by `CAPLAB_OUT`.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.clone())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"{
        "name": "tiny",
        "datasets": [{"family": "bios", "n": 10}, {"family": "bios", "n": 20}],
        "exposures": [10, 100],
        "models": [{"layers": 1, "heads": 1, "head_dim": 16}],
        "optims": [{"lr": 0.001, "weight_decay": 0.01, "batch": 4}],
        "seed": 7
    }"#;

    #[test]
    fn parses_with_defaults_and_enumerates_the_grid() {
        let c = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.mixtures, vec![MixtureSpec::None]);
        assert_eq!(c.window, 512);
        let g = c.grid();
        assert_eq!(g.len(), 4);
        assert_eq!((g[1].dataset.n(), g[1].exposures), (10, 100));
        let hashes: std::collections::HashSet<String> = g.iter().map(|p| c.point_hash(p)).collect();
        assert_eq!(hashes.len(), 4);
        assert_eq!(c.point_hash(&g[0]), c.point_hash(&c.grid()[0]));
        let other = ExperimentConfig { seed: 8, ..c.clone() };
        assert_ne!(c.point_hash(&g[0]), other.point_hash(&other.grid()[0]));
        assert_eq!(c.config_hash(), ExperimentConfig { output: "elsewhere".into(), ..c.clone() }.config_hash());
    }

    #[test]
    fn rejects_bad_grids() {
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.exposures.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.models[0].layers = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.mixtures =
            vec![MixtureSpec::Junk { useful_fraction: Ratio { num: 0, den: 8 }, n_prime: 10, special_token: false }];
        assert!(c.validate().is_err());
    }

    #[test]
    fn short_runs_cap_warmup() {
        let o = OptimSpec { lr: 1e-3, weight_decay: 0.0, batch: 4, warmup: 1000, floor: 0.1 };
        assert_eq!(o.optim(400).steps, 100);
        assert_eq!(o.optim(400).warmup, 10);
        assert_eq!(o.optim(400_000).warmup, 1000);
        assert_eq!(o.optim(1).steps, 1);
    }
}
