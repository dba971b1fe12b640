//! Command-line front end: `gen`, `train`, `eval`, `capacity`, `quantize`,
//! `run` and `report`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::bitmath::CSV_HEADER;
use crate::corpus::{
    add_bios_tables, build_vocab, pack_windows, schedule_exposures, write_corpus, ExposurePlan, Renderer, TemplateMode,
    TemplateSet, Vocab, DEFAULT_WINDOW,
};
use crate::error::{Error, Result};
use crate::evaluator::{eval_losses, measure_capacity, memorization_accuracy, DEFAULT_SAMPLE_SIZE};
use crate::experiment::{self, ExperimentConfig, OptimSpec, OUT_ENV};
use crate::knowledge::{gen_biod, gen_bios, kb_stats, read_jsonl, write_jsonl, BioDSpec, BioSSpec, KnowledgeBase};
use crate::model::train::resume;
use crate::model::{effective_param_count, train, Activation, Checkpoint, MlpKind, ModelConfig, TrainOptions};
use crate::quant::{quant_capacity_delta, quantize_rtn, Granularity, QuantConfig};
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "caplab", version, about = "Knowledge-capacity laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a knowledge base (and optionally its vocabulary and corpus).
    Gen(GenArgs),
    /// Train a model on a knowledge base.
    Train(TrainArgs),
    /// Summed span losses of a checkpoint, as JSON.
    Eval(EvalArgs),
    /// Bits and capacity ratios of a checkpoint, or the exact content of a knowledge base.
    Capacity(CapacityArgs),
    /// Round-to-nearest weight quantization of a checkpoint.
    Quantize(QuantizeArgs),
    /// Run an experiment grid from a JSON config.
    Run { config: PathBuf },
    /// Tables and plot for a results directory (default: $CAPLAB_OUT or ./results).
    Report { dir: Option<PathBuf> },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "bios", value_parser = ["bios", "biod"])]
    pub family: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub c: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub l: u32,
    #[arg(long, default_value_t = 32)]
    pub t: u64,
    #[arg(long, default_value_t = 1 << 24)]
    pub n0: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the vocabulary as JSON.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Also write the rendered training corpus as JSONL.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub exposures: usize,
}

/// Knowledge base plus the corpus options shared by training and evaluation.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Add every bioS table entry to the vocabulary.
    #[arg(long)]
    pub tables: bool,
}

impl DataArgs {
    fn load(&self) -> Result<(KnowledgeBase, Vocab)> {
        let kb = read_jsonl(BufReader::new(File::open(&self.kb)?))?;
        let vocab = vocab_for(&kb, self.tables);
        Ok((kb, vocab))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    pub exposures: usize,
    /// multi_permute, single_fixed or fixed_template; defaults by family.
    #[arg(long)]
    pub mode: Option<TemplateMode>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window_len: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub head_dim: usize,
    #[arg(long, default_value = "standard")]
    pub mlp: MlpKind,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub tie: bool,
    #[arg(long, default_value = "gelu")]
    pub activation: Activation,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub wd: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Defaults to one pass over the scheduled corpus.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sequential gradient accumulation instead of parallel windows.
    #[arg(long)]
    pub deterministic: bool,
    /// Pause after this many steps; continue later with --resume.
    #[arg(long)]
    pub stop_at: Option<usize>,
    /// Continue the checkpoint at --out instead of starting afresh.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub exposures: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON instead of a CSV row.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub bits: u8,
    #[arg(long, default_value = "per_channel")]
    pub granularity: Granularity,
    #[arg(long)]
    pub out: PathBuf,
    /// With a knowledge base, print capacity before and after.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub tables: bool,
    #[arg(long, default_value_t = 1000)]
    pub exposures: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample: usize,
}

/// Template words and knowledge-base tokens, optionally with every table entry.
pub fn vocab_for(kb: &KnowledgeBase, tables: bool) -> Vocab {
    let templates = match kb {
        KnowledgeBase::BioS(_) => TemplateSet::bios(),
        KnowledgeBase::BioD(b) => TemplateSet::biod(b.spec.k),
    };
    let mut v = build_vocab(&templates, Some(kb));
    if tables {
        add_bios_tables(&mut v);
    }
    v
}

fn default_mode(kb: &KnowledgeBase) -> TemplateMode {
    match kb {
        KnowledgeBase::BioS(_) => TemplateMode::MultiPermute,
        KnowledgeBase::BioD(_) => TemplateMode::FixedTemplate,
    }
}

/// Writes a line to stdout; a closed pipe ends output quietly.
fn emit(text: String) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let kb = match a.family.as_str() {
        "bios" => gen_bios(BioSSpec { n: a.n, seed: a.seed })?,
        _ => gen_biod(BioDSpec { n: a.n, k: a.k, c: a.c, d: a.d, l: a.l, t: a.t, n0: a.n0, seed: a.seed })?,
    };
    let mut out = create(&a.out)?;
    write_jsonl(&kb, &mut out)?;
    out.flush()?;
    let vocab = vocab_for(&kb, false);
    if let Some(p) = &a.vocab {
        let mut w = create(p)?;
        vocab.write_json(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.corpus {
        let r = Renderer::new(&kb, &vocab)?;
        let plan = ExposurePlan { exposures: a.exposures, template_mode: default_mode(&kb), seed: a.seed };
        let paragraphs: Vec<_> = schedule_exposures(&r, plan)?.collect();
        let mut w = create(p)?;
        write_corpus(&paragraphs, &mut w)?;
        w.flush()?;
    }
    emit(serde_json::to_string_pretty(&kb_stats(&kb))?)?;
    Ok(())
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (kb, vocab) = a.data.load()?;
    let r = Renderer::new(&kb, &vocab)?;
    let mode = a.mode.unwrap_or_else(|| default_mode(&kb));
    let mut ck = if a.resume { Some(Checkpoint::load(&a.out)?) } else { None };
    let seed = ck.as_ref().map_or(a.seed, |c| c.seed);
    let plan = ExposurePlan {
        exposures: a.exposures,
        template_mode: mode,
        seed: rng::derive(seed, &[rng::streams::SCHEDULE]),
    };
    let windows = || -> Result<_> { Ok(pack_windows(schedule_exposures(&r, plan)?, a.window_len)) };
    let opts = TrainOptions { deterministic: a.deterministic, log_every: 100, stop_at: a.stop_at };
    let log = match ck.as_mut() {
        Some(ck) => resume(ck, windows()?, opts)?,
        None => {
            let count = windows()?.count();
            let spec = OptimSpec { lr: a.lr, weight_decay: a.wd, batch: a.batch, warmup: a.warmup, floor: 0.1 };
            let optim = spec.optim(a.steps.map_or(count, |s| s * a.batch));
            if optim.steps * optim.batch > count {
                return Err(Error::ConfigInvalid(format!(
                    "{} steps of {} need more than the {count} windows",
                    optim.steps, optim.batch
                )));
            }
            let model = ModelConfig {
                layers: a.layers,
                heads: a.heads,
                head_dim: a.head_dim,
                mlp: a.mlp,
                activation: a.activation,
                tie_weights: a.tie,
                vocab_size: vocab.len(),
                window_len: a.window_len,
            };
            let (c, log) = train(model, optim, seed, windows()?, opts)?;
            ck = Some(c);
            log
        }
    };
    let ck = ck.expect("checkpoint trained");
    ck.save(&a.out)?;
    let total = ck.optim.map_or(0, |o| o.steps);
    emit(format!("step {} of {total}, loss {:?}, saved {}", ck.step, log.last(), a.out.display()))?;
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let (kb, vocab) = a.data.load()?;
    let r = Renderer::new(&kb, &vocab)?;
    let ck = Checkpoint::load(&a.ckpt)?;
    let report = eval_losses(&ck.model, &r, &vocab, a.sample, a.seed)?;
    emit(serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

/// Parameters charged to a checkpoint on this knowledge base: embedding rows
/// of tokens the corpus never uses are excluded.
fn charged_params(ck: &Checkpoint, kb: &KnowledgeBase, vocab: &Vocab) -> Result<u64> {
    let r = Renderer::new(kb, vocab)?;
    let mut used = vec![false; vocab.len()];
    used[crate::corpus::vocab::EOS as usize] = true;
    for n in 0..kb.len() {
        r.canonical(n)?.tokens.iter().for_each(|&t| used[t as usize] = true);
    }
    effective_param_count(ck.config(), used.iter().filter(|&&u| u).count())
}

pub fn capacity_cmd(a: &CapacityArgs) -> Result<()> {
    let (kb, vocab) = a.data.load()?;
    let Some(path) = &a.ckpt else {
        emit(serde_json::to_string_pretty(&kb_stats(&kb))?)?;
        return Ok(());
    };
    let ck = Checkpoint::load(path)?;
    let r = Renderer::new(&kb, &vocab)?;
    let params = charged_params(&ck, &kb, &vocab)?;
    let report = measure_capacity(&ck.model, params, &r, &vocab, a.exposures, a.sample, a.seed)?;
    if a.json {
        emit(serde_json::to_string_pretty(&report)?)?;
    } else {
        emit(format!("{CSV_HEADER}\n{}", report.csv_row()))?;
    }
    if matches!(kb, KnowledgeBase::BioS(_)) {
        eprintln!("memorization accuracy {:.2} of {}", memorization_accuracy(&ck.model, &r, &vocab)?, kb.len());
    }
    Ok(())
}

pub fn quantize_cmd(a: &QuantizeArgs) -> Result<()> {
    let qc = QuantConfig { bits: a.bits, granularity: a.granularity };
    qc.validate()?;
    let ck = Checkpoint::load(&a.ckpt)?;
    let q = quantize_rtn(&ck, qc)?;
    q.save(&a.out)?;
    eprintln!("{}; saved {}", qc.note(), a.out.display());
    if let Some(kb_path) = &a.kb {
        let kb = read_jsonl(BufReader::new(File::open(kb_path)?))?;
        let vocab = vocab_for(&kb, a.tables);
        let r = Renderer::new(&kb, &vocab)?;
        let params = charged_params(&ck, &kb, &vocab)?;
        let d = quant_capacity_delta(&r, &vocab, &ck, qc, params, a.exposures, a.sample, 0)?;
        emit(format!("{CSV_HEADER}\n{}\n{}", d.before.csv_row(), d.after.csv_row()))?;
    }
    Ok(())
}

pub fn run_cmd(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let s = experiment::run(&cfg)?;
    emit(format!(
        "{} of {} points complete ({} from earlier runs), {} failed; results in {}",
        s.records.len(),
        cfg.grid().len(),
        s.skipped,
        s.failures.len(),
        s.out.display()
    ))?;
    Ok(())
}

pub fn report_cmd(dir: Option<&Path>) -> Result<()> {
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| "results".into());
    let r = experiment::report(&dir)?;
    emit(format!("{} rows; wrote {} and {}", r.rows, r.markdown.display(), r.plot.display()))?;
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Capacity(a) => capacity_cmd(a),
        Command::Quantize(a) => quantize_cmd(a),
        Command::Run { config } => run_cmd(config),
        Command::Report { dir } => report_cmd(dir.as_deref()),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(&Cli::parse()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
