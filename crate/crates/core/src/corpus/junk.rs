//! Lazily generated junk knowledge and useful/junk window mixing.
//!
//! A junk base bioS(N') is never materialized: person `i` takes the pool
//! name at position `i` of a keyed permutation of the name pool (so names
//! stay distinct) and draws attributes from its own seeded stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pack::{pack_windows, Packer, Window};
use super::render::{BioSLexicon, Layout, RenderedParagraph, Source, Span, SpanKind};
use super::vocab::SPECIAL_USEFUL;
use crate::error::{Error, Result};
use crate::knowledge::{draw_bios_person, BioSAttr, BioSPerson, BIOS_N0};
use crate::rng::{self, streams};

/// Random junk: far more persons than any run can see twice.
pub const RANDOM_JUNK_N: u64 = 100_000_000;
/// Repetitive junk: few persons seen over and over.
pub const REPETITIVE_JUNK_N: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JunkSpec {
    pub n_prime: u64,
    pub seed: u64,
}

impl JunkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_prime == 0 || self.n_prime > BIOS_N0 {
            return Err(Error::SpecInvalid(format!("junk needs 1 <= N' <= {BIOS_N0}, got {}", self.n_prime)));
        }
        Ok(())
    }

    /// Junk person `i`.
    pub fn person(&self, i: u64) -> BioSPerson {
        debug_assert!(i < self.n_prime);
        let name = permute_pool(self.seed, i);
        draw_bios_person(name, &mut rng::stream(self.seed, &[streams::JUNK, i]))
    }
}

const HALF_BITS: u32 = 14;
const HALF_MASK: u64 = (1 << HALF_BITS) - 1;
const _: () = assert!(BIOS_N0 <= 1 << (2 * HALF_BITS));

/// Keyed bijection on `0..BIOS_N0`: a 4-round Feistel network on 28 bits
/// with cycle walking back into range.
pub fn permute_pool(seed: u64, mut x: u64) -> u64 {
    assert!(x < BIOS_N0);
    loop {
        let (mut l, mut r) = (x >> HALF_BITS, x & HALF_MASK);
        for round in 0..4u64 {
            let f = rng::derive(seed, &[streams::JUNK, u64::MAX - round, r]) & HALF_MASK;
            (l, r) = (r, l ^ f);
        }
        x = (l << HALF_BITS) | r;
        if x < BIOS_N0 {
            return x;
        }
    }
}

/// Unbounded stream of junk paragraphs, persons drawn uniformly from bioS(N').
pub struct JunkStream<'a> {
    lex: &'a BioSLexicon,
    spec: JunkSpec,
    rng: ChaCha8Rng,
}

impl<'a> JunkStream<'a> {
    /// The lexicon must cover every table entry.
    pub fn new(lex: &'a BioSLexicon, spec: JunkSpec) -> Result<Self> {
        spec.validate()?;
        if !lex.covers_all() {
            return Err(Error::format("vocabulary", "junk needs every bioS table entry"));
        }
        Ok(JunkStream { lex, spec, rng: rng::stream(spec.seed, &[streams::MIX]) })
    }
}

impl Iterator for JunkStream<'_> {
    type Item = RenderedParagraph;

    fn next(&mut self) -> Option<RenderedParagraph> {
        let i = self.rng.gen_range(0..self.spec.n_prime);
        let layout = Layout::draw(BioSAttr::ALL.len(), &mut self.rng);
        Some(self.lex.render(&self.spec.person(i), &layout, i, Source::Junk))
    }
}

/// A fraction `num / den` in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn validate(&self) -> Result<()> {
        if self.num == 0 || self.den == 0 || self.num > self.den {
            return Err(Error::SpecInvalid(format!("useful fraction {}/{} is not in (0, 1]", self.num, self.den)));
        }
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MixturePlan {
    pub useful_fraction: Ratio,
    pub junk: JunkSpec,
    pub special_token_on_useful: bool,
}

impl MixturePlan {
    pub fn new(junk: JunkSpec) -> Self {
        MixturePlan { useful_fraction: Ratio { num: 1, den: 8 }, junk, special_token_on_useful: false }
    }
}

/// Prepends SPECIAL_USEFUL as a one-token filler.
pub fn mark_useful(mut p: RenderedParagraph) -> RenderedParagraph {
    p.tokens.insert(0, SPECIAL_USEFUL);
    for s in &mut p.spans {
        s.start += 1;
    }
    p.spans.insert(0, Span { kind: SpanKind::Filler, attr: None, start: 0, len: 1 });
    p
}

type Marked<I> = std::iter::Map<I, fn(RenderedParagraph) -> RenderedParagraph>;

/// Interleaves pure useful windows with pure junk windows. Window `j` is
/// useful exactly when `floor((j+1) f) > floor(j f)`, so any prefix holds a
/// fraction `f` of useful windows to within one. Ends with the last useful window.
pub struct Mixer<U: Iterator, J: Iterator> {
    useful: Packer<Marked<U>>,
    junk: Packer<J>,
    f: Ratio,
    j: u64,
    junk_paragraphs: usize,
}

pub fn mix_with_junk<U, J>(
    useful: U,
    junk: J,
    plan: &MixturePlan,
    window: usize,
) -> Result<Mixer<U::IntoIter, J::IntoIter>>
where
    U: IntoIterator<Item = RenderedParagraph>,
    J: IntoIterator<Item = RenderedParagraph>,
{
    plan.useful_fraction.validate()?;
    let mark: fn(RenderedParagraph) -> RenderedParagraph =
        if plan.special_token_on_useful { mark_useful } else { std::convert::identity };
    Ok(Mixer {
        useful: pack_windows(useful.into_iter().map(mark), window),
        junk: pack_windows(junk, window),
        f: plan.useful_fraction,
        j: 0,
        junk_paragraphs: 0,
    })
}

impl<U, J> Iterator for Mixer<U, J>
where
    U: Iterator<Item = RenderedParagraph>,
    J: Iterator<Item = RenderedParagraph>,
{
    type Item = Result<Window>;

    fn next(&mut self) -> Option<Result<Window>> {
        let Ratio { num, den } = self.f;
        let useful_turn = (self.j + 1) * num / den > self.j * num / den;
        self.j += 1;
        if useful_turn {
            return self.useful.next();
        }
        match self.junk.next() {
            Some(w) => {
                if let Ok(w) = &w {
                    self.junk_paragraphs += w.fragments.iter().filter(|f| f.offset == 0).count();
                }
                Some(w)
            }
            None => Some(Err(Error::ExhaustedJunkStream(self.junk_paragraphs))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::pack::{pack_windows, schedule_exposures, ExposurePlan};
    use crate::corpus::render::{Renderer, TemplateMode};
    use crate::corpus::{build_vocab, templates::TemplateSet, vocab::Vocab};
    use crate::knowledge::{gen_bios, BioSSpec, KnowledgeBase};
    use std::collections::HashSet;

    fn setup() -> (KnowledgeBase, Vocab) {
        let kb = gen_bios(BioSSpec { n: 40, seed: 2 }).unwrap();
        let mut vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
        crate::corpus::add_bios_tables(&mut vocab);
        (kb, vocab)
    }

    fn useful<'a>(r: &'a Renderer<'a>, exposures: usize) -> impl Iterator<Item = RenderedParagraph> + 'a {
        let plan = ExposurePlan { exposures, template_mode: TemplateMode::MultiPermute, seed: 3 };
        schedule_exposures(r, plan).unwrap()
    }

    #[test]
    fn pool_permutation_is_a_bijection_on_a_prefix() {
        let seen: HashSet<u64> = (0..50_000).map(|i| permute_pool(9, i)).collect();
        assert_eq!(seen.len(), 50_000);
        assert!(seen.iter().all(|&x| x < BIOS_N0));
        assert_ne!(permute_pool(1, 0), permute_pool(2, 0));
    }

    #[test]
    fn junk_persons_are_deterministic() {
        let s = JunkSpec { n_prime: RANDOM_JUNK_N, seed: 4 };
        assert_eq!(s.person(123_456), s.person(123_456));
        assert!(JunkSpec { n_prime: BIOS_N0 + 1, seed: 0 }.validate().is_err());
    }

    #[test]
    fn full_fraction_is_plain_packing() {
        let (kb, vocab) = setup();
        let r = Renderer::new(&kb, &vocab).unwrap();
        let lex = BioSLexicon::new(&vocab).unwrap();
        let junk = JunkStream::new(&lex, JunkSpec { n_prime: 1000, seed: 1 }).unwrap();
        let plan = MixturePlan { useful_fraction: Ratio::ONE, ..MixturePlan::new(JunkSpec { n_prime: 1000, seed: 1 }) };
        let mixed: Vec<Window> = mix_with_junk(useful(&r, 3), junk, &plan, 512).unwrap().map(Result::unwrap).collect();
        let plain: Vec<Window> = pack_windows(useful(&r, 3), 512).map(Result::unwrap).collect();
        assert_eq!(mixed, plain);
    }

    #[test]
    fn eighth_fraction_windows_are_pure_and_marked() {
        let (kb, vocab) = setup();
        let r = Renderer::new(&kb, &vocab).unwrap();
        let lex = BioSLexicon::new(&vocab).unwrap();
        let spec = JunkSpec { n_prime: RANDOM_JUNK_N, seed: 1 };
        let plan = MixturePlan { special_token_on_useful: true, ..MixturePlan::new(spec) };
        let ws: Vec<Window> = mix_with_junk(useful(&r, 100), JunkStream::new(&lex, spec).unwrap(), &plan, 512)
            .unwrap()
            .take(800)
            .map(Result::unwrap)
            .collect();
        assert_eq!(ws.len(), 800);
        let n_useful = ws.iter().filter(|w| w.source() == Some(Source::Useful)).count();
        assert!((99..=101).contains(&n_useful), "{n_useful}");
        for w in &ws {
            let src = w.source().expect("pure window");
            let has_mark = w.tokens.contains(&SPECIAL_USEFUL);
            match src {
                Source::Junk => assert!(!has_mark),
                Source::Useful => {
                    for f in w.fragments.iter().filter(|f| f.offset == 0) {
                        assert_eq!(w.tokens[f.start as usize], SPECIAL_USEFUL);
                    }
                }
            }
        }
    }

    #[test]
    fn finite_junk_runs_dry() {
        let (kb, vocab) = setup();
        let r = Renderer::new(&kb, &vocab).unwrap();
        let plan = MixturePlan::new(JunkSpec { n_prime: 10, seed: 0 });
        let mut it = mix_with_junk(useful(&r, 2), std::iter::empty(), &plan, 512).unwrap();
        assert!(matches!(it.next(), Some(Err(Error::ExhaustedJunkStream(0)))));
    }
}
