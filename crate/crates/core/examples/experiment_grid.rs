//! Runs a small experiment grid from JSON, then writes the markdown report
//! and the bits-versus-parameters plot. Rerunning skips finished points.
//!
//!     cargo run --release --example experiment_grid -- [output dir]

use caplab::experiment::{report, run_in, ExperimentConfig};

const CONFIG: &str = r#"{
    "name": "grid",
    "datasets": [{"family": "bios", "n": 10}, {"family": "biod", "n": 40, "k": 2, "c": 2, "d": 8, "l": 2, "t": 8, "n0": 100000}],
    "exposures": [50, 200],
    "models": [{"layers": 1, "heads": 1, "head_dim": 32}, {"layers": 2, "heads": 2, "head_dim": 32}],
    "optims": [{"lr": 0.01, "weight_decay": 0.01, "batch": 2}],
    "quant": [{"bits": 8, "granularity": "per_channel"}],
    "seed": 5,
    "save_checkpoints": false
}"#;

fn main() -> caplab::Result<()> {
    let cfg = ExperimentConfig::from_json(CONFIG)?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("caplab-grid"));
    let s = run_in(&cfg, &out)?;
    println!("{} points run, {} skipped, {} failed", s.records.len() - s.skipped, s.skipped, s.failures.len());
    for r in &s.records {
        println!(
            "  {:<6} N={:<3} x{:<4} P={:<7} bits {:>8.1}  R {:.5}",
            r.report.family, r.report.n, r.point.exposures, r.report.params, r.report.bits_total, r.report.r
        );
    }
    let rep = report(&out)?;
    println!("wrote {} and {}", rep.markdown.display(), rep.plot.display());
    Ok(())
}
