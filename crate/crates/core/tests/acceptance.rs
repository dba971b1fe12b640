//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 1-4 and 9 always run. The capacity runs behind criteria 5-8
//! take many CPU hours; they execute only with `CAPLAB_ACCEPT_FULL=1` and
//! otherwise fail with the measured reason, never with a weakened check.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use caplab::bitmath::{bios_person_bits, capacity_ratio_bios_max, lower_bound_bits, upper_bound_bits};
use caplab::corpus::junk::{RANDOM_JUNK_N, REPETITIVE_JUNK_N};
use caplab::corpus::{build_vocab, Ratio, Renderer, TemplateMode, TemplateSet};
use caplab::evaluator::{canonical_prompt, eval_losses};
use caplab::experiment::run::{prepare, CKPT_DIR, QUANT_CSV, RESULTS_CSV};
use caplab::experiment::{
    run_in, ArchSpec, DatasetSpec, ExperimentConfig, MixtureSpec, OptimSpec, RunRecord, VocabMode,
};
use caplab::knowledge::{gen_biod, gen_bios, tables, BioDSpec, BioSSpec};
use caplab::model::{
    effective_param_count, grad_check, param_count, Activation, Checkpoint, MlpKind, Model, ModelConfig,
};
use caplab::oracles::{make_oracle, OracleKind, OracleSpec};
use caplab::quant::{quant_capacity_delta, QuantConfig, METHOD_NOTE};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FULL_ENV: &str = "CAPLAB_ACCEPT_FULL";

// 1: upper bound vs exact big-integer binomials.
const C1_SPECS: usize = 100;
const C1_REL_TOL: f64 = 1e-9;
const C1_MAX_N: usize = 1_000;
const C1_MAX_SPACE: u64 = 1_000_000;
const C1_BUDGET: Duration = Duration::from_secs(10);

// 2: oracle losses vs closed forms on bioD(512, 4, 2, 16, 4, 32, 2^24).
const C2_SPEC: BioDSpec = BioDSpec { n: 512, k: 4, c: 2, d: 16, l: 4, t: 32, n0: 1 << 24, seed: 2 };
const C2_QS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const C2_TOL_NATS: f64 = 1e-6;
const C2_BOUND_FRAC: f64 = 0.05;
const C2_BUDGET: Duration = Duration::from_secs(120);

// 3: bits per bioS person.
const C3_RANGE: (f64, f64) = (47.5, 47.7);

// 4: gradient check.
const C4_MAX_REL: f64 = 1e-4;
const C4_PARAMS: usize = 200;
const C4_BUDGET: Duration = Duration::from_secs(300);

// 5-8: the desk-scale capacity run and its ordinals.
const C5_N: usize = 2_000;
const C5_EXPOSURES: usize = 1_000;
const C5_R_MIN: f64 = 0.5;
const C5_R_STRETCH: f64 = 1.5;
const C5_ACC_FRAC: f64 = 0.9;
const C5_BUDGET: Duration = Duration::from_secs(4 * 3600);
const C6_EXPOSURES: usize = 100;
const C6_BUDGET_FACTOR: f64 = 1.1;
const C7_USEFUL: Ratio = Ratio { num: 1, den: 8 };
const C7_REPETITIVE_TOL: f64 = 0.15;
const C7_BUDGET_FACTOR: f64 = 8.0;
const C8_INT8_FRAC: f64 = 0.7;
const C8_BUDGET: Duration = Duration::from_secs(600);

// 9: reduced-scale rerun of the criterion-5 pipeline.
const C9_N: usize = 20;
const C9_EXPOSURES: usize = 10;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn full_mode() -> bool {
    std::env::var(FULL_ENV).is_ok_and(|v| v == "1")
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---- criterion 1 ----

/// `C(n, k)` by the multiplicative recurrence, exact at every step.
fn exact_binomial(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `log2` of a big integer from its decimal expansion.
fn log2_decimal(x: &BigUint) -> f64 {
    let s = x.to_string();
    let lead = &s[..s.len().min(17)];
    let mantissa: f64 = lead.parse::<f64>().unwrap() / 10f64.powi(lead.len() as i32 - 1);
    ((s.len() - 1) as f64 + mantissa.log10()) * std::f64::consts::LOG2_10
}

fn random_spec(r: &mut ChaCha8Rng) -> BioDSpec {
    let l = r.gen_range(1..=4u32);
    let t_max = (C1_MAX_SPACE as f64).powf(1.0 / l as f64).floor() as u64;
    let t = r.gen_range(2..=t_max);
    let space = t.pow(l);
    let n = r.gen_range(1..=C1_MAX_N);
    BioDSpec {
        n,
        k: r.gen_range(1..=8),
        c: r.gen_range(1..=4),
        d: r.gen_range(1..space.min(C1_MAX_N as u64 + 1)) as usize,
        l,
        t,
        n0: r.gen_range(n as u64..=10_000_000),
        seed: 0,
    }
}

fn upper_bound_exactness() -> (Outcome, Vec<String>) {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for _ in 0..C1_SPECS {
        let s = random_spec(&mut r);
        let got = upper_bound_bits(&s).unwrap();
        let space = s.t.pow(s.l);
        let want = log2_decimal(&exact_binomial(s.n0, s.n as u64))
            + s.k as f64 * log2_decimal(&exact_binomial(space, s.d as u64))
            + (s.n * s.k * s.c) as f64 * (s.d as f64).log2();
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        rows.push(format!("{},{},{},{},{},{},{},{got:e}", s.n, s.k, s.c, s.d, s.l, s.t, s.n0));
    }
    let took = start.elapsed();
    let pass = worst <= C1_REL_TOL && took < C1_BUDGET;
    (
        Outcome::new(
            pass,
            format!(
                "upper bound vs exact binomials: max rel err {worst:.2e} <= {C1_REL_TOL:e} over {C1_SPECS} specs ({})",
                secs(took)
            ),
        ),
        rows,
    )
}

// ---- criterion 2 ----

fn oracle_equivalence() -> (Outcome, Vec<String>) {
    let start = Instant::now();
    let kb = gen_biod(C2_SPEC).unwrap();
    let vocab = build_vocab(&TemplateSet::biod(C2_SPEC.k), Some(&kb));
    let renderer = Renderer::new(&kb, &vocab).unwrap();
    let (n, ln_v) = (C2_SPEC.n as f64, (vocab.len() as f64).ln());

    // Token counts of the spans under full enumeration.
    let (mut name_len, mut value_len, mut first_len) = (0.0, 0.0, 0.0);
    for p in 0..C2_SPEC.n {
        let prompt = canonical_prompt(&renderer, p).unwrap();
        name_len += prompt.name.len() as f64;
        for (_, chunks) in &prompt.values {
            value_len += chunks.iter().map(|c| c.len()).sum::<usize>() as f64;
            first_len += chunks[0].len() as f64;
        }
    }
    let per_value = (C2_SPEC.n * C2_SPEC.k) as f64;
    let (d, c) = (C2_SPEC.d as f64, C2_SPEC.c as i32);

    let mut cases = vec![
        ("perfect", OracleKind::Perfect, [n.ln(), 0.0, 0.0]),
        (
            "uniform",
            OracleKind::Uniform,
            [name_len / n * ln_v, value_len / per_value * ln_v, first_len / per_value * ln_v],
        ),
    ];
    for q in C2_QS {
        let closed = [n.ln(), -(q + (1.0 - q) / d.powi(c)).ln(), -(q + (1.0 - q) / d).ln()];
        cases.push(("q_noisy", OracleKind::QNoisy { q }, closed));
    }

    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    let mut perfect_bits = 0.0;
    for (label, kind, closed) in cases {
        let oracle = make_oracle(OracleSpec { kind, seed: SEED }, &renderer, &vocab).unwrap();
        let got = eval_losses(&oracle, &renderer, &vocab, usize::MAX, SEED).unwrap().stats();
        for (g, w) in [got.p1, got.p2m, got.p3m].into_iter().zip(closed) {
            worst = worst.max((g - w).abs());
        }
        if matches!(kind, OracleKind::Perfect) {
            perfect_bits = lower_bound_bits(&C2_SPEC, &got).unwrap().total();
        }
        rows.push(format!("{label},{kind:?},{:e},{:e},{:e}", got.p1, got.p2m, got.p3m));
    }
    let upper = upper_bound_bits(&C2_SPEC).unwrap();
    let gap = (upper - perfect_bits).abs() / upper;
    let took = start.elapsed();
    let pass = worst <= C2_TOL_NATS && gap <= C2_BOUND_FRAC && took < C2_BUDGET;
    let detail = format!(
        "oracles vs closed forms: max |measured - closed| {worst:.2e} nats <= {C2_TOL_NATS:e}; perfect {perfect_bits:.0} bits vs upper bound {upper:.0} ({:.2}% <= {}%) ({})",
        gap * 100.0,
        C2_BOUND_FRAC * 100.0,
        secs(took)
    );
    (Outcome::new(pass, detail), rows)
}

// ---- criterion 3 ----

fn person_bits() -> (Outcome, Vec<String>) {
    let got = bios_person_bits();
    // Independent recount from the table sizes.
    let birthdays = (tables::MONTHS * tables::DAYS * tables::YEARS) as f64;
    let domains = [
        tables::PRONOUNS as f64,
        birthdays,
        tables::CITIES as f64,
        tables::UNIVERSITIES as f64,
        tables::MAJORS as f64,
        tables::EMPLOYERS as f64,
    ];
    let recount: f64 = domains.iter().map(|x| x.log2()).sum();
    let pass = (C3_RANGE.0..=C3_RANGE.1).contains(&got) && (got - recount).abs() < 1e-9;
    (
        Outcome::new(pass, format!("log2 S0 = {got:.4} in [{}, {}] (recount {recount:.4})", C3_RANGE.0, C3_RANGE.1)),
        vec![format!("{got:e}")],
    )
}

// ---- criterion 4 ----

fn gradient_fidelity() -> (Outcome, Vec<String>) {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut worst = (0.0f64, String::new());
    let mut all_counted = true;
    for mlp in [MlpKind::Standard, MlpKind::Gated, MlpKind::Quarter, MlpKind::None] {
        for activation in [Activation::Gelu, Activation::Silu] {
            let config = ModelConfig {
                layers: 2,
                heads: 2,
                head_dim: 8,
                mlp,
                activation,
                tie_weights: true,
                vocab_size: 29,
                window_len: 16,
            };
            let g = grad_check(&config, SEED).unwrap();
            all_counted &= g.checked == C4_PARAMS;
            if g.max_rel_error >= worst.0 {
                worst = (g.max_rel_error, format!("{mlp:?}/{activation:?} {}", g.worst));
            }
            rows.push(format!("{mlp:?},{activation:?},{:e},{}", g.max_rel_error, g.worst));
        }
    }
    let took = start.elapsed();
    let pass = worst.0 < C4_MAX_REL && all_counted && took < C4_BUDGET;
    let detail = format!("grad check over 4 MLP kinds x 2 activations, {C4_PARAMS} params each: max rel err {:.2e} < {C4_MAX_REL:e} (worst {}) ({})", worst.0, worst.1, secs(took));
    (Outcome::new(pass, detail), rows)
}

// ---- criteria 5-8 ----

fn micro_arch() -> ArchSpec {
    ArchSpec {
        layers: 2,
        heads: 4,
        head_dim: 64,
        mlp: MlpKind::Standard,
        activation: Activation::Gelu,
        tie_weights: true,
    }
}

fn capacity_config(n: usize, exposures: Vec<usize>, out: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        name: "desk-capacity".into(),
        datasets: vec![DatasetSpec::Bios { n }],
        exposures,
        template_mode: None,
        models: vec![micro_arch()],
        optims: vec![OptimSpec { lr: 1e-3, weight_decay: 0.1, batch: 16, warmup: 1000, floor: 0.1 }],
        mixtures: vec![MixtureSpec::None],
        quant: vec![QuantConfig::new(8), QuantConfig::new(4)],
        vocab: VocabMode::Kb,
        window: 512,
        eval_sample: 4096,
        output: out,
        seed: SEED,
        workers: 1,
        deterministic: true,
        save_checkpoints: true,
    }
}

fn junk_config(out: PathBuf) -> ExperimentConfig {
    let junk = |n_prime, special_token| MixtureSpec::Junk { useful_fraction: C7_USEFUL, n_prime, special_token };
    ExperimentConfig {
        name: "desk-junk".into(),
        exposures: vec![C6_EXPOSURES],
        mixtures: vec![
            MixtureSpec::None,
            junk(RANDOM_JUNK_N, false),
            junk(RANDOM_JUNK_N, true),
            junk(REPETITIVE_JUNK_N, false),
        ],
        quant: vec![],
        vocab: VocabMode::Tables,
        ..capacity_config(C5_N, vec![C6_EXPOSURES], out)
    }
}

fn full_out(name: &str) -> PathBuf {
    std::env::var_os("CAPLAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("caplab-accept"))
        .join(name)
}

/// Why R >= 0.5 cannot be reached at this size, and how long the run would take.
fn capacity_analysis() -> String {
    let kb = gen_bios(BioSSpec { n: C5_N, seed: SEED }).unwrap();
    let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
    let renderer = Renderer::new(&kb, &vocab).unwrap();
    let config = micro_arch().model(vocab.len(), 512);
    // Every token the model could be charged for counts at most this much;
    // dropping all embedding rows gives the smallest defensible P.
    let p_floor = effective_param_count(&config, 0).unwrap();
    let p_full = param_count(&config).unwrap();
    let rmax_ceiling = capacity_ratio_bios_max(C5_N, p_floor);
    let rmax_full = capacity_ratio_bios_max(C5_N, p_full);

    let mut tokens = 0usize;
    let mut stream = Vec::new();
    for p in 0..C5_N {
        let para = renderer.render(p, TemplateMode::MultiPermute, SEED + p as u64).unwrap();
        tokens += para.tokens.len() + 1;
        if stream.len() < 1024 {
            stream.extend_from_slice(&para.tokens);
        }
    }
    let total_tokens = tokens as f64 * C5_EXPOSURES as f64;
    let model = Model::<f32>::init(config, SEED).unwrap();
    let mut grad = vec![0.0f32; model.param_count()];
    let window = &stream[..512];
    let start = Instant::now();
    let reps = 3;
    for _ in 0..reps {
        model.loss_and_grad(window, None, 1.0, &mut grad).unwrap();
    }
    let tok_per_s = (reps * window.len()) as f64 / start.elapsed().as_secs_f64();
    let hours = total_tokens / tok_per_s / 3600.0;
    format!(
        "R >= {C5_R_MIN} unattainable: R <= Rmax <= {rmax_ceiling:.4} (perfect-model bits over P >= {p_floor} non-embedding params; Rmax {rmax_full:.4} at full P {p_full}); \
         stretch {C5_R_STRETCH} likewise; run not executed: {:.1}M tokens at a measured {tok_per_s:.0} tok/s is ~{hours:.1} h vs the {:.0} h budget; set {FULL_ENV}=1 to run",
        total_tokens / 1e6,
        C5_BUDGET.as_secs_f64() / 3600.0
    )
}

struct CapacityRuns {
    high: RunRecord,
    low: RunRecord,
    report_md: String,
}

fn capacity_runs() -> Result<CapacityRuns, String> {
    let out = full_out("capacity");
    let cfg = capacity_config(C5_N, vec![C5_EXPOSURES, C6_EXPOSURES], out.clone());
    let s = run_in(&cfg, &out).map_err(|e| e.to_string())?;
    if let Some(f) = s.failures.first() {
        return Err(format!("point {} failed: {}", f.index, f.error));
    }
    let find =
        |e: usize| s.records.iter().find(|r| r.point.exposures == e).cloned().ok_or(format!("no {e}-exposure record"));
    let report = caplab::experiment::report(&out).map_err(|e| e.to_string())?;
    let report_md = std::fs::read_to_string(&report.markdown).map_err(|e| e.to_string())?;
    Ok(CapacityRuns { high: find(C5_EXPOSURES)?, low: find(C6_EXPOSURES)?, report_md })
}

fn desk_capacity(runs: &Result<CapacityRuns, String>) -> Outcome {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("capacity run failed: {e}")),
    };
    let r = &runs.high;
    let acc = r.accuracy.unwrap_or(0.0);
    let pass = r.report.r >= C5_R_MIN && acc >= C5_ACC_FRAC * C5_N as f64 && r.seconds <= C5_BUDGET.as_secs_f64();
    let stretch = if r.report.r >= C5_R_STRETCH { "met" } else { "not met" };
    Outcome::new(
        pass,
        format!(
            "bioS({C5_N}) x {C5_EXPOSURES}: R {:.4} (>= {C5_R_MIN}; Rmax {:.4}), accuracy {acc:.1} (>= {:.0}), {:.1} h; stretch R >= {C5_R_STRETCH} {stretch}",
            r.report.r,
            r.report.rmax,
            C5_ACC_FRAC * C5_N as f64,
            r.seconds / 3600.0
        ),
    )
}

fn exposure_ordinal(runs: &Result<CapacityRuns, String>) -> Outcome {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("capacity run failed: {e}")),
    };
    let (lo, hi) = (runs.low.report.r, runs.high.report.r);
    let within = runs.low.seconds <= C5_BUDGET.as_secs_f64() * C6_BUDGET_FACTOR;
    Outcome::new(
        lo < hi && within,
        format!(
            "R at {C6_EXPOSURES} exposures {lo:.4} < R at {C5_EXPOSURES} {hi:.4}; {:.1} h",
            runs.low.seconds / 3600.0
        ),
    )
}

/// Re-quantizes the saved 1000-exposure checkpoint and re-measures it, so the
/// quantization step is timed on its own.
fn quantization_ordinal(runs: &Result<CapacityRuns, String>) -> Outcome {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("capacity run failed: {e}")),
    };
    let start = Instant::now();
    let r = &runs.high;
    let measured = (|| -> caplab::Result<(f64, f64, f64)> {
        let out = full_out("capacity");
        let cfg = capacity_config(C5_N, vec![C5_EXPOSURES, C6_EXPOSURES], out.clone());
        let ck = Checkpoint::load(&out.join(CKPT_DIR).join(format!("{}.bin", r.hash)))?;
        let data = prepare(&cfg, &r.point, &r.seeds)?;
        let renderer = Renderer::new(&data.kb, &data.vocab)?;
        let params = effective_param_count(ck.config(), r.used_tokens)?;
        let bits = |qc: QuantConfig| -> caplab::Result<f64> {
            let d = quant_capacity_delta(
                &renderer,
                &data.vocab,
                &ck,
                qc,
                params,
                C5_EXPOSURES as u64,
                cfg.eval_sample,
                r.seeds.eval,
            )?;
            Ok(d.after.bits_total)
        };
        Ok((r.report.bits_total, bits(QuantConfig::new(8))?, bits(QuantConfig::new(4))?))
    })();
    let (full, b8, b4) = match measured {
        Ok(m) => m,
        Err(e) => return Outcome::new(false, format!("quantization failed: {e}")),
    };
    let took = start.elapsed();
    let flagged = runs.report_md.contains(METHOD_NOTE);
    let pass = b8 >= C8_INT8_FRAC * full && b4 <= b8 && flagged && took < C8_BUDGET;
    Outcome::new(
        pass,
        format!("bits full {full:.0}, int8 {b8:.0} (>= {C8_INT8_FRAC} x full), int4 {b4:.0} (<= int8); report flags RTN: {flagged} ({})", secs(took)),
    )
}

fn junk_ordinal(c5_seconds: Option<f64>) -> Outcome {
    let out = full_out("junk");
    let cfg = junk_config(out.clone());
    let s = match run_in(&cfg, &out) {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("junk run failed: {e}")),
    };
    if let Some(f) = s.failures.first() {
        return Outcome::new(false, format!("junk point {} failed: {}", f.index, f.error));
    }
    let bits: Vec<f64> = s.records.iter().map(|r| r.report.bits_total).collect();
    let [base, junk, special, repetitive] = bits[..] else {
        return Outcome::new(false, format!("expected 4 junk records, got {}", bits.len()));
    };
    let seconds: f64 = s.records.iter().map(|r| r.seconds).sum();
    let budget = c5_seconds.unwrap_or(C5_BUDGET.as_secs_f64()) * C7_BUDGET_FACTOR;
    let close = (repetitive - base).abs() <= C7_REPETITIVE_TOL * base;
    let pass = junk < base && special > junk && close && seconds <= budget;
    Outcome::new(
        pass,
        format!("useful bits: baseline {base:.0}, junk {junk:.0} (< baseline), junk+token {special:.0} (> junk), repetitive {repetitive:.0} (within {}%); {:.1} h", C7_REPETITIVE_TOL * 100.0, seconds / 3600.0),
    )
}

// ---- criterion 9 ----

fn rerun_pipeline(dir: &Path) -> (String, String) {
    let cfg = capacity_config(C9_N, vec![C9_EXPOSURES], dir.to_path_buf());
    let s = run_in(&cfg, dir).unwrap();
    assert!(s.failures.is_empty(), "{:?}", s.failures);
    (std::fs::read_to_string(dir.join(RESULTS_CSV)).unwrap(), std::fs::read_to_string(dir.join(QUANT_CSV)).unwrap())
}

fn determinism(first: &[Vec<String>]) -> Outcome {
    let again = [upper_bound_exactness().1, oracle_equivalence().1, person_bits().1, gradient_fidelity().1];
    let same_1_4 = first.iter().zip(&again).all(|(a, b)| a == b);
    let tmp = tempfile::tempdir().unwrap();
    let a = rerun_pipeline(&tmp.path().join("a"));
    let b = rerun_pipeline(&tmp.path().join("b"));
    let same_5 = a == b && a.0.lines().count() == 2;
    Outcome::new(
        same_1_4 && same_5,
        format!(
            "criteria 1-4 rows identical on rerun: {same_1_4}; criterion-5 pipeline (same architecture, reduced to bioS({C9_N}) x {C9_EXPOSURES}) results.csv and quant.csv byte-identical: {same_5}"
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let full = full_mode();
    let mut lines: Vec<(usize, Outcome)> = Vec::new();
    let mut rows = Vec::new();
    for (i, f) in [upper_bound_exactness, oracle_equivalence, person_bits, gradient_fidelity].into_iter().enumerate() {
        let (o, r) = f();
        print_line(i + 1, &o);
        lines.push((i + 1, o));
        rows.push(r);
    }

    if full {
        let runs = capacity_runs();
        let c5_seconds = runs.as_ref().ok().map(|r| r.high.seconds);
        for (i, o) in [
            (5, desk_capacity(&runs)),
            (6, exposure_ordinal(&runs)),
            (7, junk_ordinal(c5_seconds)),
            (8, quantization_ordinal(&runs)),
        ] {
            print_line(i, &o);
            lines.push((i, o));
        }
    } else {
        let why = capacity_analysis();
        let dependent = format!("depends on the criterion-5 run, which was not executed (set {FULL_ENV}=1)");
        for (i, o) in [
            (5, Outcome::new(false, why)),
            (6, Outcome::new(false, format!("exposure ordinal at bioS({C5_N}): {dependent}"))),
            (
                7,
                Outcome::new(
                    false,
                    format!("junk ordinal at bioS({C5_N}), {}x the criterion-5 tokens: {dependent}", C7_BUDGET_FACTOR),
                ),
            ),
            (8, Outcome::new(false, format!("quantization ordinal on the criterion-5 checkpoint: {dependent}"))),
        ] {
            print_line(i, &o);
            lines.push((i, o));
        }
    }

    let o = determinism(&rows);
    print_line(9, &o);
    lines.push((9, o));

    let failed: Vec<usize> = lines.iter().filter(|(_, o)| !o.pass).map(|(i, _)| *i).collect();
    println!("acceptance: {} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failing: {failed:?}");
        std::process::exit(1);
    }
}

fn print_line(i: usize, o: &Outcome) {
    println!("{} criterion {i}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}
