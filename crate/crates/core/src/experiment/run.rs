//! Grid execution. Each point generates its knowledge base, renders and packs
//! the corpus, trains, and measures capacity. Failures are recorded and the
//! sweep moves on; completed points are recognized by hash and skipped.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, GridPoint, MixtureSpec, VocabMode};
use crate::bitmath::{CapacityReport, CSV_HEADER};
use crate::corpus::render::BioSLexicon;
use crate::corpus::{
    add_bios_tables, build_vocab, mix_with_junk, pack_windows, schedule_exposures, ExposurePlan, JunkSpec, JunkStream,
    MixturePlan, Renderer, TemplateSet, Vocab, Window,
};
use crate::error::{Error, Result};
use crate::evaluator::{measure_capacity, memorization_accuracy, ModelInterface};
use crate::knowledge::{gen_biod, gen_bios, KnowledgeBase};
use crate::model::{effective_param_count, train, TrainOptions};
use crate::quant::{quantize_rtn, QuantConfig};
use crate::rng;

pub const CONFIG_JSON: &str = "config.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const RUNS_JSONL: &str = "runs.jsonl";
pub const FAILURES_JSONL: &str = "failures.jsonl";
pub const QUANT_CSV: &str = "quant.csv";
pub const CKPT_DIR: &str = "ckpt";

/// Columns preceding the capacity columns in `quant.csv`. Full-precision
/// rows carry `quant_bits = 32` and granularity `none`.
pub const QUANT_PREFIX: &str = "hash,quant_bits,granularity,accuracy";

const SEED_KB: u64 = 1;
const SEED_SCHEDULE: u64 = 2;
const SEED_JUNK: u64 = 3;
const SEED_INIT: u64 = 4;
const SEED_EVAL: u64 = 5;

/// Every seed a run uses, derived from the master seed. Knowledge, schedule
/// and evaluation depend on the dataset only, and initialization on nothing
/// else, so paired grid points differ only in the axis being compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub kb: u64,
    pub schedule: u64,
    pub junk: Option<u64>,
    pub init: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn for_point(master: u64, p: &GridPoint) -> Self {
        let text = serde_json::to_string(&p.dataset).expect("serializable");
        let digest = Sha256::digest(text.as_bytes());
        let dataset = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        Seeds {
            kb: rng::derive(master, &[SEED_KB, dataset]),
            schedule: rng::derive(master, &[SEED_SCHEDULE, dataset]),
            junk: match p.mixture {
                MixtureSpec::Junk { n_prime, .. } => Some(rng::derive(master, &[SEED_JUNK, n_prime])),
                MixtureSpec::None => None,
            },
            init: rng::derive(master, &[SEED_INIT]),
            eval: rng::derive(master, &[SEED_EVAL, dataset]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantResult {
    pub quant: QuantConfig,
    pub report: CapacityReport,
    pub accuracy: Option<f64>,
}

/// One completed grid point, as appended to `runs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub hash: String,
    pub index: usize,
    pub point: GridPoint,
    pub seeds: Seeds,
    pub vocab_size: usize,
    pub used_tokens: usize,
    pub windows: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    /// bioS only: memorization accuracy out of N.
    pub accuracy: Option<f64>,
    pub report: CapacityReport,
    pub quant: Vec<QuantResult>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub hash: String,
    pub index: usize,
    pub point: GridPoint,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    /// Completed records of the whole grid, in grid order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailureRecord>,
    /// Points taken from an earlier invocation.
    pub skipped: usize,
}

/// Knowledge base and vocabulary of one grid point.
pub struct PointData {
    pub kb: KnowledgeBase,
    pub vocab: Vocab,
}

pub fn prepare(cfg: &ExperimentConfig, p: &GridPoint, seeds: &Seeds) -> Result<PointData> {
    let kb = match (p.dataset.bios_spec(seeds.kb), p.dataset.biod_spec(seeds.kb)) {
        (Some(s), _) => gen_bios(s)?,
        (_, Some(s)) => gen_biod(s)?,
        _ => unreachable!("a dataset is bioS or bioD"),
    };
    let templates = match &kb {
        KnowledgeBase::BioS(_) => TemplateSet::bios(),
        KnowledgeBase::BioD(b) => TemplateSet::biod(b.spec.k),
    };
    let mut vocab = build_vocab(&templates, Some(&kb));
    if cfg.vocab == VocabMode::Tables || p.mixture != MixtureSpec::None {
        add_bios_tables(&mut vocab);
    }
    Ok(PointData { kb, vocab })
}

/// The training stream of a grid point; `lex` is required for junk mixtures.
pub fn training_windows<'r>(
    cfg: &ExperimentConfig,
    p: &GridPoint,
    seeds: &Seeds,
    renderer: &'r Renderer<'_>,
    lex: Option<&'r BioSLexicon>,
) -> Result<Box<dyn Iterator<Item = Result<Window>> + 'r>> {
    let plan = ExposurePlan { exposures: p.exposures, template_mode: cfg.mode_for(&p.dataset), seed: seeds.schedule };
    let useful = schedule_exposures(renderer, plan)?;
    match p.mixture {
        MixtureSpec::None => Ok(Box::new(pack_windows(useful, cfg.window))),
        MixtureSpec::Junk { useful_fraction, n_prime, special_token } => {
            let lex = lex.ok_or_else(|| Error::ConfigInvalid("junk mixing needs a full bioS lexicon".into()))?;
            let junk = JunkSpec { n_prime, seed: seeds.junk.expect("junk seed for a junk mixture") };
            let plan = MixturePlan { useful_fraction, junk, special_token_on_useful: special_token };
            Ok(Box::new(mix_with_junk(useful, JunkStream::new(lex, junk)?, &plan, cfg.window)?))
        }
    }
}

fn bios_accuracy<M: ModelInterface>(model: &M, r: &Renderer<'_>, vocab: &Vocab) -> Result<Option<f64>> {
    match r.kb() {
        KnowledgeBase::BioS(_) => memorization_accuracy(model, r, vocab).map(Some),
        KnowledgeBase::BioD(_) => Ok(None),
    }
}

/// Trains and measures one grid point. The checkpoint goes to
/// `out/ckpt/<hash>.bin` when the configuration keeps checkpoints.
pub fn run_point(cfg: &ExperimentConfig, p: &GridPoint, out: &Path) -> Result<RunRecord> {
    let start = Instant::now();
    let hash = cfg.point_hash(p);
    let seeds = Seeds::for_point(cfg.seed, p);
    let data = prepare(cfg, p, &seeds)?;
    let renderer = Renderer::new(&data.kb, &data.vocab)?;
    let lex = match p.mixture {
        MixtureSpec::None => None,
        MixtureSpec::Junk { .. } => Some(BioSLexicon::new(&data.vocab)?),
    };

    // Counting pass: the step count and the used vocabulary.
    let mut used = vec![false; data.vocab.len()];
    let mut windows = 0;
    for w in training_windows(cfg, p, &seeds, &renderer, lex.as_ref())? {
        let w = w?;
        windows += 1;
        w.tokens[..w.valid].iter().for_each(|&t| used[t as usize] = true);
    }
    let used_tokens = used.iter().filter(|&&u| u).count();

    let model = p.arch.model(data.vocab.len(), cfg.window);
    let optim = p.optim.optim(windows);
    log::info!("point {} [{hash}]: {windows} windows, {} steps, vocab {}", p.index, optim.steps, data.vocab.len());
    let opts = TrainOptions { deterministic: cfg.deterministic, ..TrainOptions::default() };
    let (ck, log) = train(model, optim, seeds.init, training_windows(cfg, p, &seeds, &renderer, lex.as_ref())?, opts)?;
    if cfg.save_checkpoints {
        let dir = out.join(CKPT_DIR);
        fs::create_dir_all(&dir)?;
        ck.save(&dir.join(format!("{hash}.bin")))?;
    }

    let params = effective_param_count(&model, used_tokens)?;
    let exposures = p.exposures as u64;
    let report = measure_capacity(&ck.model, params, &renderer, &data.vocab, exposures, cfg.eval_sample, seeds.eval)?;
    let accuracy = bios_accuracy(&ck.model, &renderer, &data.vocab)?;
    let quant = cfg
        .quant
        .iter()
        .map(|&qc| {
            let q = quantize_rtn(&ck, qc)?;
            let mut report =
                measure_capacity(&q.model, params, &renderer, &data.vocab, exposures, cfg.eval_sample, seeds.eval)?;
            report.notes.push(qc.note());
            Ok(QuantResult { quant: qc, accuracy: bios_accuracy(&q.model, &renderer, &data.vocab)?, report })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunRecord {
        hash,
        index: p.index,
        point: p.clone(),
        seeds,
        vocab_size: data.vocab.len(),
        used_tokens,
        windows,
        steps: optim.steps,
        final_loss: log.last(),
        accuracy,
        report,
        quant,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Records of `runs.jsonl`; a torn last line from an interrupted run is skipped.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("skipping unreadable line of {}: {e}", path.display()),
        }
    }
    Ok(out)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs the grid into the configured output directory (or `CAPLAB_OUT`).
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_in(cfg, &cfg.output_dir())
}

pub fn run_in(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let header = serde_json::json!({ "config_hash": cfg.config_hash(), "config": cfg });
    fs::write(out.join(CONFIG_JSON), serde_json::to_string_pretty(&header)? + "\n")?;

    let grid = cfg.grid();
    let hashes: Vec<String> = grid.iter().map(|p| cfg.point_hash(p)).collect();
    let slot: HashMap<&str, usize> = hashes.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let mut done: Vec<Option<RunRecord>> = vec![None; grid.len()];
    for mut r in read_runs(&out.join(RUNS_JSONL))? {
        if let Some(&i) = slot.get(r.hash.as_str()) {
            r.index = i;
            r.point.index = i;
            done[i] = Some(r);
        }
    }
    let todo: Vec<usize> = (0..grid.len()).filter(|&i| done[i].is_none()).collect();
    let skipped = grid.len() - todo.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} of {} points already complete", grid.len());
    }

    let runs = Mutex::new(OpenOptions::new().create(true).append(true).open(out.join(RUNS_JSONL))?);
    let next = AtomicUsize::new(0);
    let finished: Mutex<Vec<(usize, std::result::Result<RunRecord, String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(todo.len()) {
            s.spawn(|| {
                while let Some(&i) = todo.get(next.fetch_add(1, Ordering::SeqCst)) {
                    let result = catch_unwind(AssertUnwindSafe(|| run_point(cfg, &grid[i], out)))
                        .map_err(panic_message)
                        .and_then(|r| r.map_err(|e| e.to_string()))
                        .and_then(|rec| {
                            let line = serde_json::to_string(&rec).map_err(|e| e.to_string())? + "\n";
                            let mut f = runs.lock().expect("runs log lock");
                            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| e.to_string())?;
                            Ok(rec)
                        });
                    if let Err(e) = &result {
                        log::warn!("point {i} [{}] failed: {e}", hashes[i]);
                    }
                    finished.lock().expect("results lock").push((i, result));
                }
            });
        }
    });

    let mut failures = Vec::new();
    for (i, r) in finished.into_inner().expect("results lock") {
        match r {
            Ok(rec) => done[i] = Some(rec),
            Err(error) => {
                failures.push(FailureRecord { hash: hashes[i].clone(), index: i, point: grid[i].clone(), error })
            }
        }
    }
    failures.sort_by_key(|f| f.index);
    let records: Vec<RunRecord> = done.into_iter().flatten().collect();
    write_outputs(out, &records, &failures)?;
    Ok(RunSummary { out: out.to_path_buf(), records, failures, skipped })
}

/// Rewrites `results.csv`, `quant.csv` and `failures.jsonl` from the records.
fn write_outputs(out: &Path, records: &[RunRecord], failures: &[FailureRecord]) -> Result<()> {
    let mut csv = BufWriter::new(File::create(out.join(RESULTS_CSV))?);
    writeln!(csv, "{CSV_HEADER}")?;
    for r in records {
        writeln!(csv, "{}", r.report.csv_row())?;
    }
    csv.flush()?;

    let quantized: Vec<&RunRecord> = records.iter().filter(|r| !r.quant.is_empty()).collect();
    if !quantized.is_empty() {
        let mut q = BufWriter::new(File::create(out.join(QUANT_CSV))?);
        writeln!(q, "{QUANT_PREFIX},{CSV_HEADER}")?;
        let acc = |a: Option<f64>| a.map(|a| a.to_string()).unwrap_or_default();
        for r in quantized {
            writeln!(q, "{},32,none,{},{}", r.hash, acc(r.accuracy), r.report.csv_row())?;
            for x in &r.quant {
                let g = serde_json::to_value(x.quant.granularity)?;
                let g = g.as_str().unwrap_or_default();
                writeln!(q, "{},{},{g},{},{}", r.hash, x.quant.bits, acc(x.accuracy), x.report.csv_row())?;
            }
        }
        q.flush()?;
    }

    let mut f = BufWriter::new(File::create(out.join(FAILURES_JSONL))?);
    for x in failures {
        writeln!(f, "{}", serde_json::to_string(x)?)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::tests::SAMPLE;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(SAMPLE).unwrap();
        c.datasets.truncate(1);
        c.exposures = vec![2];
        c.window = 64;
        c.eval_sample = 8;
        c.save_checkpoints = false;
        c
    }

    #[test]
    fn seeds_follow_the_dataset_only() {
        let c = ExperimentConfig::from_json(SAMPLE).unwrap();
        let g = c.grid();
        assert_eq!(Seeds::for_point(7, &g[0]), Seeds::for_point(7, &g[1]));
        assert_ne!(Seeds::for_point(7, &g[0]).kb, Seeds::for_point(7, &g[2]).kb);
        assert_ne!(Seeds::for_point(7, &g[0]), Seeds::for_point(8, &g[0]));
    }

    #[test]
    fn failures_are_recorded_and_completed_points_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.optims.push(crate::experiment::OptimSpec { lr: 1e30, ..c.optims[0] });
        let s = run_in(&c, dir.path()).unwrap();
        assert_eq!((s.records.len(), s.failures.len(), s.skipped), (1, 1, 0));
        assert!(s.failures[0].error.contains("diverged"), "{}", s.failures[0].error);
        let csv = fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(fs::read_to_string(dir.path().join(FAILURES_JSONL)).unwrap().lines().count(), 1);

        let again = run_in(&c, dir.path()).unwrap();
        assert_eq!((again.skipped, again.failures.len()), (1, 1));
        assert_eq!(again.records, s.records);
        assert_eq!(fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap(), csv);
    }
}
