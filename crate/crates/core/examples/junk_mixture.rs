//! Paired junk-mixing runs: no junk, random junk with and without the
//! useful-data token, and repetitive junk, all at the same useful exposures.
//!
//!     cargo run --release --example junk_mixture -- [N] [useful exposures]

use caplab::corpus::junk::{RANDOM_JUNK_N, REPETITIVE_JUNK_N};
use caplab::corpus::Ratio;
use caplab::experiment::{run_in, ArchSpec, DatasetSpec, ExperimentConfig, MixtureSpec, OptimSpec, VocabMode};
use caplab::model::{Activation, MlpKind};

fn main() -> caplab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (n, exposures) = (args.first().copied().unwrap_or(20), args.get(1).copied().unwrap_or(100));
    let junk = |n_prime, special_token| MixtureSpec::Junk {
        useful_fraction: Ratio { num: 1, den: 8 },
        n_prime,
        special_token,
    };
    let cfg = ExperimentConfig {
        name: "junk".into(),
        datasets: vec![DatasetSpec::Bios { n }],
        exposures: vec![exposures],
        template_mode: None,
        models: vec![ArchSpec {
            layers: 2,
            heads: 2,
            head_dim: 64,
            mlp: MlpKind::Standard,
            activation: Activation::Gelu,
            tie_weights: true,
        }],
        optims: vec![OptimSpec { lr: 1e-2, weight_decay: 0.01, batch: 2, warmup: 1000, floor: 0.1 }],
        mixtures: vec![
            MixtureSpec::None,
            junk(RANDOM_JUNK_N, false),
            junk(RANDOM_JUNK_N, true),
            junk(REPETITIVE_JUNK_N, false),
        ],
        quant: vec![],
        vocab: VocabMode::Tables,
        window: 512,
        eval_sample: 4096,
        output: std::env::temp_dir().join("caplab-junk"),
        seed: 1,
        workers: 1,
        deterministic: true,
        save_checkpoints: false,
    };
    let s = run_in(&cfg, &cfg.output_dir())?;
    for r in &s.records {
        println!(
            "{:<70} windows {:>6}  useful bits {:>8.1}  accuracy {:>5.2}  {:.0}s",
            format!("{:?}", r.point.mixture),
            r.windows,
            r.report.bits_total,
            r.accuracy.unwrap_or(0.0),
            r.seconds
        );
    }
    for f in &s.failures {
        println!("failed {:?}: {}", f.point.mixture, f.error);
    }
    Ok(())
}
