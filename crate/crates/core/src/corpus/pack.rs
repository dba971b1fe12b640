//! Exposure scheduling and window packing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::render::{RenderedParagraph, Renderer, Source, Span, TemplateMode};
use super::vocab::{EOS, PAD};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const DEFAULT_WINDOW: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExposurePlan {
    pub exposures: usize,
    pub template_mode: TemplateMode,
    pub seed: u64,
}

/// The part of one paragraph that landed in a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub person: u64,
    pub source: Source,
    /// Offset of the fragment within the window.
    pub start: u32,
    pub len: u32,
    /// Offset of the fragment within its paragraph (0 when the paragraph starts here).
    pub offset: u32,
}

/// A fixed-length training window. Positions from `valid` on hold PAD.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub tokens: Vec<u32>,
    pub valid: usize,
    /// Span labels clipped to the window, window-relative.
    pub spans: Vec<Span>,
    pub fragments: Vec<Fragment>,
}

impl Window {
    /// Source shared by every fragment, or `None` for an empty or mixed window.
    pub fn source(&self) -> Option<Source> {
        let first = self.fragments.first()?.source;
        self.fragments.iter().all(|f| f.source == first).then_some(first)
    }
}

/// Concatenates paragraphs, each followed by EOS, and cuts the stream into
/// windows of `window` tokens. The last partial window is PAD-filled.
pub struct Packer<I> {
    src: I,
    window: usize,
    pending: Option<(RenderedParagraph, usize)>,
    done: bool,
}

pub fn pack_windows<I>(paragraphs: I, window: usize) -> Packer<I::IntoIter>
where
    I: IntoIterator<Item = RenderedParagraph>,
{
    assert!(window >= 2, "window must hold at least two tokens");
    Packer { src: paragraphs.into_iter(), window, pending: None, done: false }
}

impl<I: Iterator<Item = RenderedParagraph>> Iterator for Packer<I> {
    type Item = Result<Window>;

    fn next(&mut self) -> Option<Result<Window>> {
        if self.done {
            return None;
        }
        let mut w =
            Window { tokens: Vec::with_capacity(self.window), valid: 0, spans: Vec::new(), fragments: Vec::new() };
        while w.tokens.len() < self.window {
            if self.pending.is_none() {
                match self.src.next() {
                    Some(mut p) => {
                        if p.tokens.len() > self.window {
                            self.done = true;
                            return Some(Err(Error::ParagraphLongerThanWindow {
                                len: p.tokens.len(),
                                window: self.window,
                            }));
                        }
                        p.tokens.push(EOS);
                        self.pending = Some((p, 0));
                    }
                    None => {
                        self.done = true;
                        break;
                    }
                }
            }
            let (p, used) = self.pending.as_mut().expect("filled above");
            let from = *used;
            let take = (p.tokens.len() - from).min(self.window - w.tokens.len());
            let base = w.tokens.len();
            w.tokens.extend_from_slice(&p.tokens[from..from + take]);
            w.fragments.push(Fragment {
                person: p.person,
                source: p.source,
                start: base as u32,
                len: take as u32,
                offset: from as u32,
            });
            for s in &p.spans {
                let lo = (s.start as usize).max(from);
                let hi = (s.start as usize + s.len as usize).min(from + take);
                if lo < hi {
                    w.spans.push(Span { start: (base + lo - from) as u32, len: (hi - lo) as u32, ..*s });
                }
            }
            *used += take;
            if *used == p.tokens.len() {
                self.pending = None;
            }
        }
        if w.tokens.is_empty() {
            return None;
        }
        w.valid = w.tokens.len();
        w.tokens.resize(self.window, PAD);
        Some(Ok(w))
    }
}

/// Reassembles the paragraph stream (EOS separators included) from windows.
pub fn unpack(windows: &[Window]) -> Vec<u32> {
    windows.iter().flat_map(|w| w.tokens[..w.valid].iter().copied()).collect()
}

/// Person visiting order: every pass is an independent shuffle.
pub fn exposure_order(n: usize, plan: ExposurePlan) -> impl Iterator<Item = (usize, usize)> {
    (0..plan.exposures).flat_map(move |e| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(plan.seed, &[streams::SCHEDULE, e as u64]));
        order.into_iter().map(move |person| (e, person))
    })
}

/// `N * exposures` rendered paragraphs in training order.
pub fn schedule_exposures<'r>(
    renderer: &'r Renderer<'_>,
    plan: ExposurePlan,
) -> Result<impl Iterator<Item = RenderedParagraph> + 'r> {
    renderer.check_mode(plan.template_mode)?;
    Ok(exposure_order(renderer.kb().len(), plan).map(move |(e, person)| {
        let draw = rng::derive(plan.seed, &[e as u64]);
        renderer.render(person, plan.template_mode, draw).expect("mode and person validated")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::corpus::render::SpanKind;
    use crate::corpus::templates::TemplateSet;
    use crate::knowledge::{gen_biod, gen_bios, BioDSpec, BioSSpec};
    use std::collections::HashSet;

    fn para(len: usize, person: u64) -> RenderedParagraph {
        RenderedParagraph {
            tokens: (0..len).map(|i| 3 + (i % 7) as u32).collect(),
            spans: vec![Span { kind: SpanKind::Name, attr: None, start: 0, len: len as u32 }],
            person,
            source: Source::Useful,
        }
    }

    #[test]
    fn two_paragraphs_fill_one_window() {
        let ws: Vec<Window> = pack_windows([para(255, 0), para(255, 1)], 512).map(Result::unwrap).collect();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].valid, 512);
        assert_eq!(ws[0].tokens[255], EOS);
        assert_eq!(ws[0].tokens[511], EOS);
        assert_eq!(ws[0].spans[1].start, 256);
    }

    #[test]
    fn oversized_paragraph_is_rejected() {
        let mut it = pack_windows([para(513, 0)], 512);
        assert!(matches!(it.next(), Some(Err(Error::ParagraphLongerThanWindow { len: 513, window: 512 }))));
        assert!(it.next().is_none());
    }

    #[test]
    fn tail_is_padded_and_spans_are_clipped() {
        let ws: Vec<Window> = pack_windows([para(6, 0), para(6, 1)], 8).map(Result::unwrap).collect();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].valid, 6);
        assert_eq!(&ws[1].tokens[6..], &[PAD, PAD]);
        assert_eq!(ws[0].spans[1], Span { kind: SpanKind::Name, attr: None, start: 7, len: 1 });
        assert_eq!(ws[1].spans[0], Span { kind: SpanKind::Name, attr: None, start: 0, len: 5 });
        assert_eq!(ws[1].fragments[0].offset, 1);
    }

    #[test]
    fn unpacking_restores_the_stream() {
        let paras: Vec<RenderedParagraph> = (0..10_000).map(|i| para(1 + (i * 37) % 90, i as u64)).collect();
        let mut expect = Vec::new();
        for p in &paras {
            expect.extend_from_slice(&p.tokens);
            expect.push(EOS);
        }
        let ws: Vec<Window> = pack_windows(paras, 512).map(Result::unwrap).collect();
        assert!(ws.iter().all(|w| w.tokens.len() == 512));
        assert_eq!(unpack(&ws), expect);
    }

    #[test]
    fn each_person_appears_once_per_pass() {
        let kb = gen_biod(BioDSpec { n: 3, k: 2, c: 1, d: 4, l: 1, t: 8, n0: 100, seed: 0 }).unwrap();
        let vocab = build_vocab(&TemplateSet::biod(2), Some(&kb));
        let r = Renderer::new(&kb, &vocab).unwrap();
        let plan = ExposurePlan { exposures: 2, template_mode: TemplateMode::FixedTemplate, seed: 5 };
        let ps: Vec<_> = schedule_exposures(&r, plan).unwrap().collect();
        assert_eq!(ps.len(), 6);
        for n in 0..3 {
            assert_eq!(ps.iter().filter(|p| p.person == n).count(), 2);
        }
        let none = ExposurePlan { exposures: 0, ..plan };
        assert_eq!(schedule_exposures(&r, none).unwrap().count(), 0);
        assert_eq!(exposure_order(3, plan).collect::<Vec<_>>().len(), 6);
    }

    #[test]
    fn multi_permute_exposures_are_distinct() {
        let kb = gen_bios(BioSSpec { n: 1, seed: 8 }).unwrap();
        let vocab = build_vocab(&TemplateSet::bios(), Some(&kb));
        let r = Renderer::new(&kb, &vocab).unwrap();
        let plan = ExposurePlan { exposures: 100, template_mode: TemplateMode::MultiPermute, seed: 1 };
        let seen: HashSet<Vec<u32>> = schedule_exposures(&r, plan).unwrap().map(|p| p.tokens).collect();
        assert_eq!(seen.len(), 100);
    }
}
