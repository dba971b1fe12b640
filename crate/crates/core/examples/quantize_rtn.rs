//! Round-to-nearest quantization of a trained checkpoint to 8 and 4 bits,
//! per channel and per tensor, with the learned bits before and after.
//!
//!     cargo run --release --example quantize_rtn -- [checkpoint]
//!
//! Without a checkpoint a small model is trained first.

use caplab::corpus::{
    build_vocab, pack_windows, schedule_exposures, ExposurePlan, Renderer, TemplateMode, TemplateSet,
};
use caplab::evaluator::DEFAULT_SAMPLE_SIZE;
use caplab::knowledge::{gen_bios, BioSSpec};
use caplab::model::{effective_param_count, train, Checkpoint, ModelConfig, OptimConfig, TrainOptions};
use caplab::quant::{quant_capacity_delta, Granularity, QuantConfig};

const N: usize = 10;
const EXPOSURES: usize = 400;

fn main() -> caplab::Result<()> {
    let kb = gen_bios(BioSSpec { n: N, seed: 1 })?;
    let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
    let r = Renderer::new(&kb, &vocab)?;
    let ck = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path.as_ref())?,
        None => {
            let plan = ExposurePlan { exposures: EXPOSURES, template_mode: TemplateMode::MultiPermute, seed: 2 };
            let windows = pack_windows(schedule_exposures(&r, plan)?, 512).collect::<caplab::Result<Vec<_>>>()?;
            let steps = windows.len() / 2;
            let optim = OptimConfig { warmup: steps / 10, ..OptimConfig::new(1e-2, 0.01, 2, steps) };
            let config = ModelConfig { window_len: 512, ..ModelConfig::new(2, 2, vocab.len()) };
            train(config, optim, 3, windows.into_iter().map(Ok), TrainOptions::default())?.0
        }
    };
    let params = effective_param_count(ck.config(), vocab.len())?;
    for bits in [8, 4] {
        for granularity in [Granularity::PerChannel, Granularity::PerTensor] {
            let qc = QuantConfig { bits, granularity };
            let d = quant_capacity_delta(&r, &vocab, &ck, qc, params, EXPOSURES as u64, DEFAULT_SAMPLE_SIZE, 0)?;
            println!("{:<48} bits {:>8.1} -> {:>8.1}", qc.note(), d.before.bits_total, d.after.bits_total);
        }
    }
    Ok(())
}
