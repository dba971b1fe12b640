//! Analytic reference models with known information content.
//!
//! An oracle reads a canonical prompt, recognizes the person from the name
//! tokens and answers with an exact distribution. Probability mass it would
//! place on strings absent from the vocabulary (other pool names, unused
//! table entries) goes to PAD, which acts as a sink so rows stay normalized.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitmath::{self, Components, LossStats};
use crate::corpus::render::{Renderer, SpanKind, PRONOUN_ATTR};
use crate::corpus::vocab::{tokenize, Vocab, EOS, PAD};
use crate::error::{Error, Result};
use crate::evaluator::{eval_attrs, ModelInterface};
use crate::knowledge::{tables, BioSAttr, KnowledgeBase, BIOS_N0};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// Names uniform over the N true names; everything else deterministic.
    Perfect,
    /// Uniform over the vocabulary at every position.
    Uniform,
    /// Like `Perfect`, except each value is the truth with probability `q`
    /// and otherwise uniform over the attribute's legal domain.
    QNoisy { q: f64 },
    /// Like `Perfect`, except names are uniform over the whole candidate pool.
    NameUniformOverPool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Keys the oracle's own generations (used by greedy decoding).
    #[serde(default)]
    pub seed: u64,
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        if let OracleKind::QNoisy { q } = self.kind {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::SpecInvalid(format!("q = {q} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Prefix-count tree over token sequences; `None` marks a token missing from the vocabulary.
struct Trie {
    children: HashMap<Vec<u32>, Vec<(Option<u32>, u64)>>,
    size: u64,
}

impl Trie {
    fn new<I: IntoIterator<Item = Vec<Option<u32>>>>(seqs: I) -> Self {
        let mut children: HashMap<Vec<u32>, Vec<(Option<u32>, u64)>> = HashMap::new();
        let mut size = 0;
        for seq in seqs {
            size += 1;
            let mut prefix = Vec::with_capacity(seq.len());
            for tok in seq {
                let kids = children.entry(prefix.clone()).or_default();
                match kids.iter_mut().find(|(t, _)| *t == tok) {
                    Some(k) => k.1 += 1,
                    None => kids.push((tok, 1)),
                }
                match tok {
                    Some(t) => prefix.push(t),
                    None => break,
                }
            }
        }
        Trie { children, size }
    }

    fn frac(&self, prefix: &[u32]) -> f64 {
        if prefix.is_empty() {
            return 1.0;
        }
        let (last, head) = prefix.split_last().expect("non-empty");
        self.children
            .get(head)
            .and_then(|k| k.iter().find(|(t, _)| *t == Some(*last)))
            .map_or(0.0, |(_, c)| *c as f64 / self.size as f64)
    }

    fn next(&self, prefix: &[u32]) -> Vec<(Option<u32>, f64)> {
        self.children
            .get(prefix)
            .map(|k| k.iter().map(|&(t, c)| (t, c as f64 / self.size as f64)).collect())
            .unwrap_or_default()
    }
}

/// A value domain: all C-tuples over a chunk set, or an explicit list.
enum Domain {
    Product { ids: Vec<u32>, c: usize },
    List(Trie),
}

impl Domain {
    fn size(&self) -> f64 {
        match self {
            Domain::Product { ids, c } => (ids.len() as f64).powi(*c as i32),
            Domain::List(t) => t.size as f64,
        }
    }

    fn frac(&self, prefix: &[u32]) -> f64 {
        match self {
            Domain::Product { ids, c } => {
                if prefix.len() <= *c && prefix.iter().all(|t| ids.contains(t)) {
                    (ids.len() as f64).powi(-(prefix.len() as i32))
                } else {
                    0.0
                }
            }
            Domain::List(t) => t.frac(prefix),
        }
    }

    fn next(&self, prefix: &[u32]) -> Vec<(Option<u32>, f64)> {
        match self {
            Domain::Product { ids, c } => {
                if prefix.len() >= *c || self.frac(prefix) == 0.0 {
                    return Vec::new();
                }
                let f = (ids.len() as f64).powi(-(prefix.len() as i32 + 1));
                ids.iter().map(|&t| (Some(t), f)).collect()
            }
            Domain::List(t) => t.next(prefix),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Label {
    Filler,
    Name,
    /// Token `offset` of the value of `attr`.
    Value {
        attr: u16,
        offset: u16,
    },
}

struct PersonView {
    tokens: Vec<u32>,
    labels: Vec<Label>,
    /// Value start (paragraph-relative) per attribute id.
    value_at: HashMap<u16, Range<usize>>,
}

/// Per-position candidate ids for pool-uniform names, with the pool size.
struct PoolLevel {
    ids: Vec<u32>,
    size: f64,
}

pub struct Oracle {
    spec: OracleSpec,
    v: usize,
    name_len: usize,
    persons: Vec<PersonView>,
    by_name: HashMap<Vec<u32>, usize>,
    names: Trie,
    pool: Vec<PoolLevel>,
    domains: HashMap<u16, Domain>,
}

fn seq_ids(vocab: &Vocab, text: &str) -> Vec<Option<u32>> {
    tokenize(text).into_iter().map(|t| vocab.id(t)).collect()
}

/// Builds an oracle for the knowledge base behind `renderer`.
pub fn make_oracle(spec: OracleSpec, renderer: &Renderer<'_>, vocab: &Vocab) -> Result<Oracle> {
    spec.validate()?;
    let kb = renderer.kb();
    let mut persons = Vec::with_capacity(kb.len());
    let mut by_name = HashMap::with_capacity(kb.len());
    let mut name_list = Vec::with_capacity(kb.len());
    for n in 0..kb.len() {
        let p = renderer.canonical(n)?;
        let mut labels = vec![Label::Filler; p.tokens.len()];
        let mut value_at = HashMap::new();
        for s in &p.spans {
            match (s.kind, s.attr) {
                (SpanKind::Name, _) => labels[s.range()].fill(Label::Name),
                (SpanKind::ValueChunk { .. }, Some(a)) => {
                    let r = value_at.entry(a).or_insert(s.range());
                    r.start = r.start.min(s.start as usize);
                    r.end = r.end.max(s.range().end);
                }
                _ => {}
            }
        }
        for (&a, r) in &value_at {
            for (i, pos) in r.clone().enumerate() {
                labels[pos] = Label::Value { attr: a, offset: i as u16 };
            }
        }
        let name = p.span_tokens(p.name_span().expect("name span")).to_vec();
        name_list.push(name.iter().map(|&t| Some(t)).collect());
        by_name.insert(name, n);
        persons.push(PersonView { tokens: p.tokens, labels, value_at });
    }
    let name_len = persons.first().map_or(0, |p| p.labels.iter().filter(|l| **l == Label::Name).count());
    let names = Trie::new(name_list);

    let (pool, domains) = match kb {
        KnowledgeBase::BioD(b) => {
            let pool = vec![PoolLevel {
                ids: (0..b.names.len()).filter_map(|n| vocab.id(&b.name_text(n))).collect(),
                size: b.spec.n0 as f64,
            }];
            let domains = (0..b.spec.k)
                .map(|a| {
                    let ids = b.diversity[a].iter().filter_map(|&c| vocab.id(&b.chunk_text(c))).collect();
                    (a as u16, Domain::Product { ids, c: b.spec.c })
                })
                .collect();
            (pool, domains)
        }
        KnowledgeBase::BioS(_) => {
            let t = tables::tables();
            let level = |list: &[&str]| PoolLevel {
                ids: list.iter().filter_map(|s| vocab.id(s)).collect(),
                size: list.len() as f64,
            };
            let pool = vec![level(&t.first), level(&t.middle), level(&t.last)];
            let list = |items: Vec<String>| Domain::List(Trie::new(items.iter().map(|s| seq_ids(vocab, s))));
            let strings = |l: &[&str]| l.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            let mut dates = Vec::with_capacity(tables::MONTHS * tables::DAYS * tables::YEARS);
            for m in tables::MONTH_NAMES {
                for d in 1..=tables::DAYS {
                    for y in 0..tables::YEARS {
                        dates.push(format!("{m} {d}, {}", y + tables::FIRST_YEAR));
                    }
                }
            }
            let mut domains = HashMap::new();
            domains.insert(BioSAttr::BirthDate as u16, list(dates));
            domains.insert(BioSAttr::BirthCity as u16, list(strings(&t.cities)));
            domains.insert(BioSAttr::University as u16, list(strings(&t.universities)));
            domains.insert(BioSAttr::Major as u16, list(strings(&t.majors)));
            domains.insert(BioSAttr::Employer as u16, list(strings(&t.employers)));
            domains.insert(BioSAttr::WorkCity as u16, list(strings(&t.cities)));
            domains.insert(PRONOUN_ATTR, list(strings(&tables::PRONOUN_WORDS)));
            (pool, domains)
        }
    };
    Ok(Oracle { spec, v: vocab.len(), name_len, persons, by_name, names, pool, domains })
}

impl Oracle {
    fn uniform(&self) -> Vec<f64> {
        vec![-(self.v as f64).ln(); self.v]
    }

    fn delta(&self, tok: u32) -> Vec<f64> {
        let mut row = vec![f64::NEG_INFINITY; self.v];
        row[tok as usize] = 0.0;
        row
    }

    /// Row from `(token, probability)` pairs; `None` goes to the sink.
    fn row_from_probs(&self, probs: impl IntoIterator<Item = (Option<u32>, f64)>) -> Vec<f64> {
        let mut p = vec![0.0; self.v];
        for (t, x) in probs {
            p[t.unwrap_or(PAD) as usize] += x;
        }
        p.into_iter().map(f64::ln).collect()
    }

    fn name_row(&self, prefix: &[u32]) -> Vec<f64> {
        match self.spec.kind {
            OracleKind::Uniform => self.uniform(),
            OracleKind::NameUniformOverPool => {
                let level = &self.pool[prefix.len()];
                let each = 1.0 / level.size;
                let sink = 1.0 - level.ids.len() as f64 * each;
                self.row_from_probs(level.ids.iter().map(|&t| (Some(t), each)).chain([(None, sink)]))
            }
            OracleKind::Perfect | OracleKind::QNoisy { .. } => {
                let base = self.names.frac(prefix);
                if base == 0.0 {
                    return self.uniform();
                }
                self.row_from_probs(self.names.next(prefix).into_iter().map(|(t, f)| (t, f / base)))
            }
        }
    }

    fn value_row(&self, truth: &[u32], domain: &Domain, prefix: &[u32]) -> Vec<f64> {
        let q = match self.spec.kind {
            OracleKind::QNoisy { q } => q,
            _ => 1.0,
        };
        let on_truth = truth.starts_with(prefix) && prefix.len() < truth.len();
        let denom = if on_truth { q } else { 0.0 } + (1.0 - q) * domain.frac(prefix);
        if denom <= 0.0 {
            return self.uniform();
        }
        let mut probs: Vec<(Option<u32>, f64)> =
            domain.next(prefix).into_iter().map(|(t, f)| (t, (1.0 - q) * f / denom)).collect();
        if on_truth && q > 0.0 {
            probs.push((Some(truth[prefix.len()]), q / denom));
        }
        self.row_from_probs(probs)
    }

    /// Distribution of `seq[p]` given `seq[..p]`.
    fn row(&self, seq: &[u32], p: usize) -> Vec<f64> {
        if self.spec.kind == OracleKind::Uniform {
            return self.uniform();
        }
        if p <= self.name_len {
            return self.name_row(&seq[1..p]);
        }
        let Some(&n) = self.by_name.get(&seq[1..=self.name_len]) else {
            return self.uniform();
        };
        let person = &self.persons[n];
        let q = p - 1;
        if q >= person.tokens.len() {
            return self.delta(EOS);
        }
        match person.labels[q] {
            Label::Value { attr, offset } => {
                let r = &person.value_at[&attr];
                let prefix = &seq[p - offset as usize..p];
                self.value_row(&person.tokens[r.clone()], &self.domains[&attr], prefix)
            }
            _ => self.delta(person.tokens[q]),
        }
    }

    fn person_of(&self, tokens: &[u32]) -> Option<usize> {
        tokens.get(1..=self.name_len).and_then(|n| self.by_name.get(n)).copied()
    }
}

impl ModelInterface for Oracle {
    fn vocab_size(&self) -> usize {
        self.v
    }

    fn log_probs(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        if tokens.first() != Some(&EOS) {
            return Err(Error::ShapeMismatch("oracle prompts start with EOS".into()));
        }
        Ok((1..=tokens.len()).map(|p| self.row(tokens, p)).collect())
    }

    /// The oracle's generator: a stochastic oracle samples its answer once,
    /// keyed by `(seed, person, span start)`, and is scored on exact match.
    fn greedy_matches(&self, tokens: &[u32], spans: &[Range<usize>]) -> Result<Vec<bool>> {
        let Some(n) = self.person_of(tokens) else {
            return Ok(vec![false; spans.len()]);
        };
        let person = &self.persons[n];
        spans
            .iter()
            .map(|r| {
                let attr = person
                    .value_at
                    .iter()
                    .find(|(_, v)| v.start + 1 == r.start && v.end + 1 == r.end)
                    .map(|(&a, _)| a)
                    .ok_or_else(|| Error::ShapeMismatch("span is not a value of the prompt's person".into()))?;
                let mut g = rng::stream(self.spec.seed, &[n as u64, r.start as u64]);
                Ok(match self.spec.kind {
                    OracleKind::Perfect | OracleKind::NameUniformOverPool => true,
                    OracleKind::Uniform => r.clone().all(|pos| g.gen_range(0..self.v) == tokens[pos] as usize),
                    OracleKind::QNoisy { q } => {
                        g.gen::<f64>() < q || g.gen_range(0..self.domains[&attr].size() as u64) == 0
                    }
                })
            })
            .collect()
    }
}

/// Closed-form losses and bits for an oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBits {
    pub losses: LossStats,
    pub components: Components,
}

/// Closed-form (p1, p2m, p3m, p2s) of the oracle on `renderer`'s knowledge
/// base, and the bits they certify.
pub fn analytic_bits(spec: OracleSpec, renderer: &Renderer<'_>, vocab: &Vocab) -> Result<AnalyticBits> {
    spec.validate()?;
    let kb = renderer.kb();
    let n = kb.len() as f64;
    let ln_v = (vocab.len() as f64).ln();
    let attrs = eval_attrs(kb);
    let mix = |q: f64, size: f64| -(q + (1.0 - q) / size).ln();
    let losses = match kb {
        KnowledgeBase::BioD(b) => {
            let s = b.spec;
            let (d, c) = (s.d as f64, s.c as i32);
            let (p1, p2m, p3m) = match spec.kind {
                OracleKind::Perfect => (n.ln(), 0.0, 0.0),
                OracleKind::NameUniformOverPool => ((s.n0 as f64).ln(), 0.0, 0.0),
                OracleKind::Uniform => (ln_v, c as f64 * ln_v, ln_v),
                OracleKind::QNoisy { q } => (n.ln(), mix(q, d.powi(c)), mix(q, d)),
            };
            LossStats { p1, p2m, p3m, p2s: None }
        }
        KnowledgeBase::BioS(_) => {
            let per_attr: Vec<f64> = match spec.kind {
                OracleKind::Perfect | OracleKind::NameUniformOverPool => vec![0.0; attrs.len()],
                OracleKind::Uniform => {
                    let mut lens = vec![0.0; attrs.len()];
                    for p in 0..kb.len() {
                        let prompt = crate::evaluator::canonical_prompt(renderer, p)?;
                        for (i, &a) in attrs.iter().enumerate() {
                            lens[i] += prompt.value_range(a).expect("value").len() as f64;
                        }
                    }
                    lens.iter().map(|l| l / n * ln_v).collect()
                }
                OracleKind::QNoisy { q } => attrs
                    .iter()
                    .map(|&a| {
                        let size =
                            if a == PRONOUN_ATTR { tables::PRONOUNS } else { BioSAttr::ALL[a as usize].domain_size() };
                        mix(q, size as f64)
                    })
                    .collect(),
            };
            let p1 = match spec.kind {
                OracleKind::Uniform => 3.0 * ln_v,
                OracleKind::NameUniformOverPool => (BIOS_N0 as f64).ln(),
                _ => n.ln(),
            };
            let p2s: f64 = per_attr.iter().sum();
            let p2m = p2s / attrs.len() as f64;
            LossStats { p1, p2m, p3m: p2m, p2s: Some(p2s) }
        }
    };
    let components = match kb {
        KnowledgeBase::BioD(b) => bitmath::lower_bound_bits(&b.spec, &losses)?,
        KnowledgeBase::BioS(_) => bitmath::bios_components(kb.len(), losses.p1, losses.p2s.unwrap_or(0.0)),
    };
    Ok(AnalyticBits { losses, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{add_bios_tables, build_vocab, TemplateSet};
    use crate::evaluator::{eval_losses, memorization_accuracy};
    use crate::knowledge::{gen_biod, gen_bios, BioDSpec, BioSSpec};

    fn biod() -> KnowledgeBase {
        gen_biod(BioDSpec { n: 40, k: 3, c: 2, d: 5, l: 2, t: 6, n0: 5000, seed: 3 }).unwrap()
    }

    fn check(kb: &KnowledgeBase, vocab: &Vocab, kind: OracleKind) {
        let r = Renderer::new(kb, vocab).unwrap();
        let spec = OracleSpec { kind, seed: 0 };
        let o = make_oracle(spec, &r, vocab).unwrap();
        let got = eval_losses(&o, &r, vocab, usize::MAX, 0).unwrap();
        let want = analytic_bits(spec, &r, vocab).unwrap().losses;
        for (g, w) in [(got.p1, want.p1), (got.p2m, want.p2m), (got.p3m, want.p3m)] {
            assert!((g - w).abs() < 1e-9, "{kind:?}: measured {g} vs closed form {w}");
        }
        if let (Some(g), Some(w)) = (got.p2s, want.p2s) {
            assert!((g - w).abs() < 1e-9, "{kind:?}: p2s {g} vs {w}");
        }
    }

    #[test]
    fn biod_oracles_match_closed_forms() {
        let kb = biod();
        let vocab = build_vocab(&TemplateSet::biod(3), Some(&kb));
        for kind in [
            OracleKind::Perfect,
            OracleKind::Uniform,
            OracleKind::NameUniformOverPool,
            OracleKind::QNoisy { q: 0.0 },
            OracleKind::QNoisy { q: 0.3 },
            OracleKind::QNoisy { q: 1.0 },
        ] {
            check(&kb, &vocab, kind);
        }
    }

    #[test]
    fn bios_oracles_match_closed_forms() {
        let kb = gen_bios(BioSSpec { n: 12, seed: 5 }).unwrap();
        let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
        for kind in
            [OracleKind::Perfect, OracleKind::Uniform, OracleKind::NameUniformOverPool, OracleKind::QNoisy { q: 0.4 }]
        {
            check(&kb, &vocab, kind);
        }
        let mut full = vocab.clone();
        add_bios_tables(&mut full);
        check(&kb, &full, OracleKind::QNoisy { q: 0.0 });
    }

    #[test]
    fn pool_uniform_names_clip_to_zero_bits() {
        let kb = biod();
        let vocab = build_vocab(&TemplateSet::biod(3), Some(&kb));
        let r = Renderer::new(&kb, &vocab).unwrap();
        let a = analytic_bits(OracleSpec { kind: OracleKind::NameUniformOverPool, seed: 0 }, &r, &vocab).unwrap();
        assert_eq!(a.components.bits_name, 0.0);
        // A uniform-over-vocabulary model learns no values, but the used-token
        // vocabulary alone already narrows the name pool from N0 to V.
        let u = analytic_bits(OracleSpec { kind: OracleKind::Uniform, seed: 0 }, &r, &vocab).unwrap();
        assert_eq!(u.components.bits_value, 0.0);
        assert_eq!(u.components.bits_div, 0.0);
        let expect = 40.0 * ((5000.0 - 40.0) / vocab.len() as f64).log2();
        assert!((u.components.bits_name - expect).abs() < 1e-9);
    }

    #[test]
    fn q_noisy_bits_increase_with_q() {
        let kb = biod();
        let vocab = build_vocab(&TemplateSet::biod(3), Some(&kb));
        let r = Renderer::new(&kb, &vocab).unwrap();
        let bits: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&q| analytic_bits(OracleSpec { kind: OracleKind::QNoisy { q }, seed: 0 }, &r, &vocab).unwrap())
            .map(|a| a.components.bits_value)
            .collect();
        assert!(bits.windows(2).all(|w| w[0] < w[1]), "{bits:?}");
        assert!(OracleSpec { kind: OracleKind::QNoisy { q: 1.5 }, seed: 0 }.validate().is_err());
    }

    #[test]
    fn accuracy_of_perfect_and_domain_uniform_oracles() {
        let kb = gen_bios(BioSSpec { n: 100, seed: 1 }).unwrap();
        let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
        let r = Renderer::new(&kb, &vocab).unwrap();
        let perfect = make_oracle(OracleSpec { kind: OracleKind::Perfect, seed: 0 }, &r, &vocab).unwrap();
        assert_eq!(memorization_accuracy(&perfect, &r, &vocab).unwrap(), 100.0);
        let noisy = make_oracle(OracleSpec { kind: OracleKind::QNoisy { q: 0.0 }, seed: 2 }, &r, &vocab).unwrap();
        let acc = memorization_accuracy(&noisy, &r, &vocab).unwrap();
        assert!(acc < 5.0, "{acc}");
    }
}
