//! Trains a two-layer model on a small bioS set until it memorizes it, then
//! measures accuracy and learned bits.
//!
//!     cargo run --release --example train_micro -- [N] [exposures]

use caplab::corpus::{
    build_vocab, pack_windows, schedule_exposures, ExposurePlan, Renderer, TemplateMode, TemplateSet,
};
use caplab::evaluator::{measure_capacity, memorization_accuracy, DEFAULT_SAMPLE_SIZE};
use caplab::knowledge::{gen_bios, BioSSpec};
use caplab::model::{effective_param_count, train, ModelConfig, OptimConfig, TrainOptions};

fn main() -> caplab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (n, exposures) = (args.first().copied().unwrap_or(20), args.get(1).copied().unwrap_or(1000));
    let kb = gen_bios(BioSSpec { n, seed: 1 })?;
    let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
    let r = Renderer::new(&kb, &vocab)?;
    let plan = ExposurePlan { exposures, template_mode: TemplateMode::MultiPermute, seed: 2 };
    let windows = pack_windows(schedule_exposures(&r, plan)?, 512).collect::<caplab::Result<Vec<_>>>()?;

    let config = ModelConfig { window_len: 512, ..ModelConfig::new(2, 2, vocab.len()) };
    let steps = windows.len() / 2;
    let optim = OptimConfig { warmup: steps / 10, ..OptimConfig::new(1e-2, 0.01, 2, steps) };
    println!("{} windows, {steps} steps", windows.len());
    let start = std::time::Instant::now();
    let (ck, log) = train(
        config,
        optim,
        3,
        windows.iter().cloned().map(Ok),
        TrainOptions { log_every: steps / 10, ..TrainOptions::default() },
    )?;
    for (i, l) in log.losses.iter().enumerate().step_by((steps / 10).max(1)) {
        println!("  step {i:>5}  loss {l:.4}");
    }

    let used = vocab.used_size(windows.iter().map(|w| &w.tokens[..w.valid]));
    let params = effective_param_count(&config, used)?;
    let acc = memorization_accuracy(&ck.model, &r, &vocab)?;
    let rep = measure_capacity(&ck.model, params, &r, &vocab, exposures as u64, DEFAULT_SAMPLE_SIZE, 4)?;
    println!(
        "accuracy {acc:.2}/{n}; learned {:.1} bits (name {:.1}, value {:.1}); P {params}; R {:.5} of Rmax {:.5}; {:.0}s",
        rep.bits_total,
        rep.bits_name,
        rep.bits_value,
        rep.r,
        rep.rmax,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
