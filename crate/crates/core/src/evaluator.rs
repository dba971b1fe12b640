//! Summed-NLL loss protocol over knowledge spans, and memorization accuracy.
//!
//! Every statistic is a sum of token NLLs over a span (never a per-token
//! average), measured on canonical prompts: an EOS, then the person's
//! paragraph rendered with the first template of every attribute in
//! canonical order.

use std::io::BufRead;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmath::{CapacityReport, LossStats};
use crate::corpus::render::{Renderer, SpanKind, PRONOUN_ATTR};
use crate::corpus::vocab::{Vocab, EOS, PAD};
use crate::error::{Error, Result};
use crate::knowledge::{sample_distinct, BioSAttr, KnowledgeBase};
use crate::rng::{self, streams};

/// Tolerance on `logsumexp` of every returned log-distribution.
pub const NORMALIZATION_TOL: f64 = 1e-4;
pub const DEFAULT_SAMPLE_SIZE: usize = 4096;

/// A model exposing next-token log-probabilities.
pub trait ModelInterface: Sync {
    fn vocab_size(&self) -> usize;

    /// Row `t` is the log-distribution of token `t + 1` given `tokens[..=t]`.
    fn log_probs(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>>;

    /// For each span, whether greedy decoding from `tokens[..span.start]`
    /// reproduces `tokens[span]`. Greedy output matches exactly when every
    /// teacher-forced argmax does, so one pass suffices.
    fn greedy_matches(&self, tokens: &[u32], spans: &[Range<usize>]) -> Result<Vec<bool>> {
        let lp = self.log_probs(tokens)?;
        Ok(spans.iter().map(|r| r.clone().all(|pos| argmax(&lp[pos - 1]) == tokens[pos] as usize)).collect())
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn check_normalized(rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        let z = logsumexp(row);
        if z.is_nan() || z.abs() > NORMALIZATION_TOL {
            return Err(Error::NonNormalizedModel(z));
        }
    }
    Ok(())
}

/// The canonical prompt of one person.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPrompt {
    pub person: usize,
    /// EOS followed by the canonical paragraph.
    pub tokens: Vec<u32>,
    pub name: Range<usize>,
    /// Per evaluated attribute: its id and the ranges of its chunks.
    pub values: Vec<(u16, Vec<Range<usize>>)>,
}

impl EvalPrompt {
    pub fn value(&self, attr: u16) -> Option<&[Range<usize>]> {
        self.values.iter().find(|(a, _)| *a == attr).map(|(_, r)| r.as_slice())
    }

    /// Range covering the whole value of `attr`.
    pub fn value_range(&self, attr: u16) -> Option<Range<usize>> {
        let chunks = self.value(attr)?;
        Some(chunks.first()?.start..chunks.last()?.end)
    }
}

/// Attributes the loss protocol sums over: all K for bioD; for bioS the five
/// independent attributes plus the pronoun (working city follows the employer).
pub fn eval_attrs(kb: &KnowledgeBase) -> Vec<u16> {
    match kb {
        KnowledgeBase::BioD(b) => (0..b.spec.k as u16).collect(),
        KnowledgeBase::BioS(_) => {
            let mut a: Vec<u16> = BioSAttr::ALL[..5].iter().map(|&a| a as u16).collect();
            a.push(PRONOUN_ATTR);
            a
        }
    }
}

/// bioS attributes scored by memorization accuracy.
pub fn accuracy_attrs() -> [u16; 5] {
    [0, 1, 2, 3, 4]
}

pub fn canonical_prompt(renderer: &Renderer<'_>, person: usize) -> Result<EvalPrompt> {
    let p = renderer.canonical(person)?;
    let mut tokens = Vec::with_capacity(p.tokens.len() + 1);
    tokens.push(EOS);
    tokens.extend_from_slice(&p.tokens);
    let shift = |s: &crate::corpus::Span| s.start as usize + 1..(s.start + s.len) as usize + 1;
    let name = shift(p.name_span().expect("paragraph has a name"));
    let values = eval_attrs(renderer.kb())
        .into_iter()
        .map(|a| {
            let mut chunks: Vec<(u16, Range<usize>)> = p
                .spans
                .iter()
                .filter(|s| s.attr == Some(a))
                .filter_map(|s| match s.kind {
                    SpanKind::ValueChunk { chunk } => Some((chunk, shift(s))),
                    _ => None,
                })
                .collect();
            chunks.sort_by_key(|c| c.0);
            (a, chunks.into_iter().map(|c| c.1).collect())
        })
        .collect();
    Ok(EvalPrompt { person, tokens, name, values })
}

/// Summed NLL of each span under teacher forcing. Position 0 has no
/// prediction and PAD targets are skipped.
pub fn nll_spans<M: ModelInterface + ?Sized>(model: &M, tokens: &[u32], spans: &[Range<usize>]) -> Result<Vec<f64>> {
    if spans.iter().any(|r| r.end > tokens.len() || r.start > r.end) {
        return Err(Error::ShapeMismatch("span outside the window".into()));
    }
    let lp = model.log_probs(tokens)?;
    Ok(spans.iter().map(|r| span_nll(&lp, tokens, r.clone())).collect())
}

fn span_nll(lp: &[Vec<f64>], tokens: &[u32], r: Range<usize>) -> f64 {
    r.filter(|&pos| pos > 0 && tokens[pos] != PAD).map(|pos| -lp[pos - 1][tokens[pos] as usize]).sum()
}

/// Loss statistics in nats, with per-attribute breakdowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub p1: f64,
    pub p2m: f64,
    pub p3m: f64,
    /// bioS: per-person value NLL summed over the evaluated attributes.
    pub p2s: Option<f64>,
    pub attrs: Vec<u16>,
    pub per_attr_p2: Vec<f64>,
    pub per_attr_p3: Vec<f64>,
    pub sample_size: usize,
    pub seed: u64,
}

impl LossReport {
    pub fn stats(&self) -> LossStats {
        LossStats { p1: self.p1, p2m: self.p2m, p3m: self.p3m, p2s: self.p2s }
    }

    fn from_sums(persons: &[PersonLoss], attrs: Vec<u16>, bios: bool, seed: u64) -> Self {
        let n = persons.len().max(1) as f64;
        let k = attrs.len();
        let mut per_attr_p2 = vec![0.0; k];
        let mut per_attr_p3 = vec![0.0; k];
        let mut p1 = 0.0;
        for p in persons {
            p1 += p.name;
            for i in 0..k {
                per_attr_p2[i] += p.value[i];
                per_attr_p3[i] += p.first[i];
            }
        }
        per_attr_p2.iter_mut().chain(per_attr_p3.iter_mut()).for_each(|x| *x /= n);
        let p2_sum: f64 = per_attr_p2.iter().sum();
        LossReport {
            p1: p1 / n,
            p2m: p2_sum / k as f64,
            p3m: per_attr_p3.iter().sum::<f64>() / k as f64,
            p2s: bios.then_some(p2_sum),
            attrs,
            per_attr_p2,
            per_attr_p3,
            sample_size: persons.len(),
            seed,
        }
    }
}

struct PersonLoss {
    name: f64,
    value: Vec<f64>,
    first: Vec<f64>,
}

/// Persons evaluated: all of them up to `sample_size`, else a seeded uniform sample.
pub fn eval_persons(n: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    if n <= sample_size {
        return (0..n).collect();
    }
    let mut s: Vec<usize> = sample_distinct(&mut rng::stream(seed, &[streams::EVAL_SAMPLE]), n as u64, sample_size)
        .into_iter()
        .map(|x| x as usize)
        .collect();
    s.sort_unstable();
    s
}

fn check_vocab<M: ModelInterface + ?Sized>(model: &M, vocab: &Vocab) -> Result<()> {
    if model.vocab_size() != vocab.len() {
        return Err(Error::VocabMismatch { model: model.vocab_size(), corpus: vocab.len() });
    }
    Ok(())
}

/// Measures (p1, p2m, p3m, p2s) on canonical prompts.
pub fn eval_losses<M: ModelInterface + ?Sized>(
    model: &M,
    renderer: &Renderer<'_>,
    vocab: &Vocab,
    sample_size: usize,
    seed: u64,
) -> Result<LossReport> {
    check_vocab(model, vocab)?;
    let kb = renderer.kb();
    let persons = eval_persons(kb.len(), sample_size, seed);
    let attrs = eval_attrs(kb);
    let losses = persons
        .par_iter()
        .map(|&n| {
            let prompt = canonical_prompt(renderer, n)?;
            let lp = model.log_probs(&prompt.tokens)?;
            check_normalized(&lp)?;
            let name = span_nll(&lp, &prompt.tokens, prompt.name.clone());
            let (value, first) = prompt
                .values
                .iter()
                .map(|(_, chunks)| {
                    let all: f64 = chunks.iter().map(|r| span_nll(&lp, &prompt.tokens, r.clone())).sum();
                    (all, span_nll(&lp, &prompt.tokens, chunks[0].clone()))
                })
                .unzip();
            Ok(PersonLoss { name, value, first })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossReport::from_sums(&losses, attrs, matches!(kb, KnowledgeBase::BioS(_)), seed))
}

/// Sum over persons of the fraction of the five bioS attributes whose
/// greedy decode from the canonical prefix is exactly right (perfect: N).
pub fn memorization_accuracy<M: ModelInterface + ?Sized>(
    model: &M,
    renderer: &Renderer<'_>,
    vocab: &Vocab,
) -> Result<f64> {
    check_vocab(model, vocab)?;
    let kb = renderer.kb();
    if !matches!(kb, KnowledgeBase::BioS(_)) {
        return Err(Error::ModeMismatch { mode: "memorization_accuracy".into(), family: kb.family().into() });
    }
    let per_person = (0..kb.len())
        .into_par_iter()
        .map(|n| {
            let prompt = canonical_prompt(renderer, n)?;
            let spans: Vec<Range<usize>> =
                accuracy_attrs().iter().map(|&a| prompt.value_range(a).expect("bioS value span")).collect();
            let hits = model.greedy_matches(&prompt.tokens, &spans)?;
            Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_person.iter().sum())
}

/// Capacity of a knowledge base's losses for a model of `params` parameters.
pub fn capacity_from_losses(
    kb: &KnowledgeBase,
    losses: &LossStats,
    params: u64,
    exposures: u64,
) -> Result<CapacityReport> {
    match kb {
        KnowledgeBase::BioD(b) => CapacityReport::biod(&b.spec, losses, params, exposures),
        KnowledgeBase::BioS(b) => CapacityReport::bios(b.persons.len(), losses, params, exposures),
    }
}

/// `eval_losses` followed by the bit lower bound and capacity ratios.
pub fn measure_capacity<M: ModelInterface + ?Sized>(
    model: &M,
    params: u64,
    renderer: &Renderer<'_>,
    vocab: &Vocab,
    exposures: u64,
    sample_size: usize,
    seed: u64,
) -> Result<CapacityReport> {
    let losses = eval_losses(model, renderer, vocab, sample_size, seed)?;
    capacity_from_losses(renderer.kb(), &losses.stats(), params, exposures)
}

/// Which statistic a trace record contributes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSpan {
    Name,
    Value,
    FirstChunk,
}

/// One externally measured span NLL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub person: u64,
    pub prefix_len: usize,
    pub span: TraceSpan,
    #[serde(default)]
    pub attr: Option<u16>,
    pub nll: f64,
}

/// Aggregates span NLLs produced by an external model into a loss report.
/// Value records must carry `attr`; set `bios` to also report p2s.
pub fn ingest_trace<R: BufRead>(input: R, bios: bool) -> Result<LossReport> {
    use std::collections::BTreeMap;
    let mut names: BTreeMap<u64, f64> = BTreeMap::new();
    let mut values: BTreeMap<(u64, u16), (f64, f64)> = BTreeMap::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)?;
        if !rec.nll.is_finite() || rec.nll < 0.0 {
            return Err(Error::format("trace record", format!("bad nll {}", rec.nll)));
        }
        let attr = || rec.attr.ok_or_else(|| Error::format("trace record", "value span without attr"));
        match rec.span {
            TraceSpan::Name => *names.entry(rec.person).or_default() += rec.nll,
            TraceSpan::Value => values.entry((rec.person, attr()?)).or_default().0 += rec.nll,
            TraceSpan::FirstChunk => values.entry((rec.person, attr()?)).or_default().1 += rec.nll,
        }
    }
    let attrs: Vec<u16> = {
        let mut a: Vec<u16> = values.keys().map(|k| k.1).collect();
        a.sort_unstable();
        a.dedup();
        a
    };
    let mut people: Vec<u64> = names.keys().chain(values.keys().map(|k| &k.0)).copied().collect();
    people.sort_unstable();
    people.dedup();
    if people.is_empty() {
        return Err(Error::format("trace", "no records"));
    }
    let persons: Vec<PersonLoss> = people
        .iter()
        .map(|p| PersonLoss {
            name: names.get(p).copied().unwrap_or(0.0),
            value: attrs.iter().map(|&a| values.get(&(*p, a)).map_or(0.0, |v| v.0)).collect(),
            first: attrs.iter().map(|&a| values.get(&(*p, a)).map_or(0.0, |v| v.1)).collect(),
        })
        .collect();
    Ok(LossReport::from_sums(&persons, attrs, bios, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Assigns a fixed log-probability to token 3 everywhere, the rest spread evenly.
    struct Fixed {
        v: usize,
        lp3: f64,
    }

    impl ModelInterface for Fixed {
        fn vocab_size(&self) -> usize {
            self.v
        }
        fn log_probs(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
            let rest = ((1.0 - self.lp3.exp()) / (self.v - 1) as f64).ln();
            let mut row = vec![rest; self.v];
            row[3] = self.lp3;
            Ok(vec![row; tokens.len()])
        }
    }

    #[test]
    fn span_sums_are_additive() {
        let m = Fixed { v: 10, lp3: -0.7 };
        let toks = [EOS, 3];
        assert!((nll_spans(&m, &toks, std::slice::from_ref(&(0..2))).unwrap()[0] - 0.7).abs() < 1e-12);
        let toks = [EOS, 3, 3, 4, PAD, PAD];
        let s = nll_spans(&m, &toks, &[1..2, 2..4, 1..4, 0..6]).unwrap();
        assert!((s[0] + s[1] - s[2]).abs() < 1e-12);
        assert_eq!(s[2], s[3]);
        assert!(nll_spans(&m, &toks, std::slice::from_ref(&(3..9))).is_err());
    }

    #[test]
    fn normalization_is_enforced() {
        assert!(check_normalized(&[vec![(0.5f64).ln(), (0.5f64).ln()]]).is_ok());
        assert!(matches!(check_normalized(&[vec![0.0, 0.0]]), Err(Error::NonNormalizedModel(_))));
        assert!(check_normalized(&[vec![0.0, f64::NEG_INFINITY]]).is_ok());
    }

    #[test]
    fn trace_ingestion_averages_per_person() {
        let lines = [
            r#"{"person":0,"prefix_len":1,"span":"name","nll":2.0}"#,
            r#"{"person":1,"prefix_len":1,"span":"name","nll":4.0}"#,
            r#"{"person":0,"prefix_len":5,"span":"value","attr":0,"nll":1.0}"#,
            r#"{"person":0,"prefix_len":5,"span":"first_chunk","attr":0,"nll":0.5}"#,
            r#"{"person":1,"prefix_len":5,"span":"value","attr":0,"nll":3.0}"#,
            r#"{"person":1,"prefix_len":9,"span":"value","attr":1,"nll":2.0}"#,
        ]
        .join("\n");
        let r = ingest_trace(lines.as_bytes(), true).unwrap();
        assert_eq!(r.p1, 3.0);
        assert_eq!(r.per_attr_p2, [2.0, 1.0]);
        assert_eq!(r.p2s, Some(3.0));
        assert_eq!(r.p3m, 0.125);
        assert!(ingest_trace(r#"{"person":0,"prefix_len":1,"span":"value","nll":1}"#.as_bytes(), false).is_err());
    }

    #[test]
    fn argmax_prefers_first_of_ties() {
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
    }
}
