//! Paragraph rendering with span labels.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::templates::{self, biod_sentence_words, SUBJECT, VALUE};
use super::vocab::{tokenize, Vocab};
use crate::error::{Error, Result};
use crate::knowledge::{tables, BioDBase, BioSAttr, BioSPerson, KnowledgeBase};
use crate::rng::{self, streams};

/// Attribute id carried by the pronoun span of a bioS paragraph.
pub const PRONOUN_ATTR: u16 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpanKind {
    Name,
    /// Zero-based chunk index within the value.
    ValueChunk {
        chunk: u16,
    },
    Filler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    #[serde(flatten)]
    pub kind: SpanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr: Option<u16>,
    pub start: u32,
    pub len: u32,
}

impl Span {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..(self.start + self.len) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Useful,
    Junk,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedParagraph {
    pub tokens: Vec<u32>,
    pub spans: Vec<Span>,
    pub person: u64,
    pub source: Source,
}

impl RenderedParagraph {
    pub fn name_span(&self) -> Option<&Span> {
        self.spans.iter().find(|s| s.kind == SpanKind::Name)
    }

    /// Value span of `attr`, chunk `chunk`.
    pub fn value_span(&self, attr: u16, chunk: u16) -> Option<&Span> {
        self.spans.iter().find(|s| s.attr == Some(attr) && s.kind == SpanKind::ValueChunk { chunk })
    }

    pub fn span_tokens(&self, s: &Span) -> &[u32] {
        &self.tokens[s.range()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateMode {
    /// bioS: fresh templates and sentence order on every render.
    MultiPermute,
    /// bioS-simple: one template choice and order per person, fixed forever.
    SingleFixed,
    /// bioD: the fixed sentence form in a fresh order.
    FixedTemplate,
}

impl std::str::FromStr for TemplateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::ConfigInvalid(format!("unknown template mode {s:?}")))
    }
}

impl TemplateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateMode::MultiPermute => "multi_permute",
            TemplateMode::SingleFixed => "single_fixed",
            TemplateMode::FixedTemplate => "fixed_template",
        }
    }
}

/// Sentence order plus, for bioS, the template chosen per attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub order: Vec<usize>,
    pub templates: [usize; 6],
}

impl Layout {
    pub fn canonical(attrs: usize) -> Self {
        Layout { order: (0..attrs).collect(), templates: [0; 6] }
    }

    pub fn draw<R: Rng>(attrs: usize, r: &mut R) -> Self {
        let mut order: Vec<usize> = (0..attrs).collect();
        order.shuffle(r);
        let mut t = [0; 6];
        for slot in &mut t {
            *slot = r.gen_range(0..templates::TEMPLATES_PER_ATTR);
        }
        Layout { order, templates: t }
    }
}

#[derive(Default)]
struct Builder {
    tokens: Vec<u32>,
    spans: Vec<Span>,
}

impl Builder {
    fn filler(&mut self, ids: &[u32]) {
        let start = self.tokens.len() as u32;
        self.tokens.extend_from_slice(ids);
        match self.spans.last_mut() {
            Some(s) if s.kind == SpanKind::Filler && s.start + s.len == start => s.len += ids.len() as u32,
            _ => self.spans.push(Span { kind: SpanKind::Filler, attr: None, start, len: ids.len() as u32 }),
        }
    }

    fn labeled(&mut self, kind: SpanKind, attr: Option<u16>, ids: &[u32]) {
        let start = self.tokens.len() as u32;
        self.tokens.extend_from_slice(ids);
        self.spans.push(Span { kind, attr, start, len: ids.len() as u32 });
    }

    fn finish(self, person: u64, source: Source) -> RenderedParagraph {
        RenderedParagraph { tokens: self.tokens, spans: self.spans, person, source }
    }
}

fn ids_of(vocab: &Vocab, text: &str) -> Option<Vec<u32>> {
    tokenize(text).into_iter().map(|t| vocab.id(t)).collect()
}

fn missing(what: &str) -> Error {
    Error::format("vocabulary", format!("no token for {what}"))
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    Subject,
    Value,
    Word(u32),
}

/// Token ids for everything a bioS paragraph can contain. Table entries the
/// vocabulary lacks are `None`; [`BioSLexicon::covers`] checks a person.
pub struct BioSLexicon {
    first: Vec<Option<u32>>,
    middle: Vec<Option<u32>>,
    last: Vec<Option<u32>>,
    months: Vec<Option<u32>>,
    days: Vec<Option<u32>>,
    years: Vec<Option<u32>>,
    comma: Option<u32>,
    cities: Vec<Option<Vec<u32>>>,
    universities: Vec<Option<Vec<u32>>>,
    majors: Vec<Option<Vec<u32>>>,
    employers: Vec<Option<Vec<u32>>>,
    pronouns: Vec<Option<u32>>,
    templates: Vec<Vec<Vec<Piece>>>,
}

impl BioSLexicon {
    pub fn new(vocab: &Vocab) -> Result<Self> {
        let t = tables::tables();
        let one = |s: &str| vocab.id(s);
        let many = |list: &[&str]| list.iter().map(|s| ids_of(vocab, s)).collect::<Vec<_>>();
        let templates = templates::bios_templates()
            .iter()
            .map(|list| {
                list.iter()
                    .map(|s| {
                        tokenize(s)
                            .into_iter()
                            .map(|w| match w {
                                SUBJECT => Ok(Piece::Subject),
                                VALUE => Ok(Piece::Value),
                                _ => vocab.id(w).map(Piece::Word).ok_or_else(|| missing(w)),
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BioSLexicon {
            first: t.first.iter().map(|s| one(s)).collect(),
            middle: t.middle.iter().map(|s| one(s)).collect(),
            last: t.last.iter().map(|s| one(s)).collect(),
            months: tables::MONTH_NAMES.iter().map(|s| one(s)).collect(),
            days: (1..=tables::DAYS).map(|d| one(&d.to_string())).collect(),
            years: (0..tables::YEARS).map(|y| one(&(y + tables::FIRST_YEAR).to_string())).collect(),
            comma: one(","),
            cities: many(&t.cities),
            universities: many(&t.universities),
            majors: many(&t.majors),
            employers: many(&t.employers),
            pronouns: tables::PRONOUN_WORDS.iter().map(|s| one(s)).collect(),
            templates,
        })
    }

    /// Whether every token `p` needs is in the vocabulary.
    pub fn covers(&self, p: &BioSPerson) -> bool {
        let mut buf = Vec::new();
        self.name_ids(p, &mut buf).is_some()
            && self.pronouns[p.pronoun as usize].is_some()
            && BioSAttr::ALL.iter().all(|&a| self.value_ids(p, a, &mut buf).is_some())
    }

    /// Whether every table entry is in the vocabulary (needed by junk streams).
    pub fn covers_all(&self) -> bool {
        let singles = [&self.first, &self.middle, &self.last, &self.months, &self.days, &self.years, &self.pronouns];
        let multi = [&self.cities, &self.universities, &self.majors, &self.employers];
        self.comma.is_some()
            && singles.iter().all(|v| v.iter().all(Option::is_some))
            && multi.iter().all(|v| v.iter().all(Option::is_some))
    }

    fn name_ids(&self, p: &BioSPerson, out: &mut Vec<u32>) -> Option<()> {
        out.clear();
        out.push(self.first[p.first as usize]?);
        out.push(self.middle[p.middle as usize]?);
        out.push(self.last[p.last as usize]?);
        Some(())
    }

    fn value_ids(&self, p: &BioSPerson, a: BioSAttr, out: &mut Vec<u32>) -> Option<()> {
        out.clear();
        let seq = match a {
            BioSAttr::BirthDate => {
                out.push(self.months[p.month as usize]?);
                out.push(self.days[p.day as usize]?);
                out.push(self.comma?);
                out.push(self.years[p.year as usize]?);
                return Some(());
            }
            BioSAttr::BirthCity => &self.cities[p.birth_city as usize],
            BioSAttr::University => &self.universities[p.university as usize],
            BioSAttr::Major => &self.majors[p.major as usize],
            BioSAttr::Employer => &self.employers[p.employer as usize],
            BioSAttr::WorkCity => &self.cities[p.work_city() as usize],
        };
        out.extend_from_slice(seq.as_ref()?);
        Some(())
    }

    /// Renders `p`. Panics if the lexicon does not cover `p`.
    pub fn render(&self, p: &BioSPerson, layout: &Layout, person: u64, source: Source) -> RenderedParagraph {
        let mut b = Builder::default();
        let mut buf = Vec::with_capacity(8);
        let pronoun = self.pronouns[p.pronoun as usize].expect("pronoun in vocabulary");
        for (i, &a) in layout.order.iter().enumerate() {
            let attr = BioSAttr::ALL[a];
            for piece in &self.templates[a][layout.templates[a]] {
                match *piece {
                    Piece::Word(id) => b.filler(&[id]),
                    Piece::Subject if i == 0 => {
                        self.name_ids(p, &mut buf).expect("name in vocabulary");
                        b.labeled(SpanKind::Name, None, &buf);
                    }
                    Piece::Subject if i == 1 => {
                        b.labeled(SpanKind::ValueChunk { chunk: 0 }, Some(PRONOUN_ATTR), &[pronoun])
                    }
                    Piece::Subject => b.filler(&[pronoun]),
                    Piece::Value => {
                        self.value_ids(p, attr, &mut buf).expect("value in vocabulary");
                        b.labeled(SpanKind::ValueChunk { chunk: 0 }, Some(a as u16), &buf);
                    }
                }
            }
        }
        b.finish(person, source)
    }
}

struct BioDLexicon {
    names: Vec<u32>,
    /// `chunks[a][i]` is the token of diversity element `i` of attribute `a`.
    chunks: Vec<Vec<u32>>,
    sentence: Vec<[u32; 3]>,
    period: u32,
}

impl BioDLexicon {
    fn new(b: &BioDBase, vocab: &Vocab) -> Result<Self> {
        let id = |s: &str| vocab.id(s).ok_or_else(|| missing(s));
        let names = (0..b.names.len()).map(|n| id(&b.name_text(n))).collect::<Result<_>>()?;
        let chunks = b
            .diversity
            .iter()
            .map(|set| set.iter().map(|&c| id(&b.chunk_text(c))).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let sentence = (0..b.spec.k)
            .map(|a| {
                let [w0, w1, w2] = biod_sentence_words(a);
                Ok([id(&w0)?, id(&w1)?, id(&w2)?])
            })
            .collect::<Result<_>>()?;
        Ok(BioDLexicon { names, chunks, sentence, period: id(".")? })
    }

    fn render(&self, b: &BioDBase, person: usize, layout: &Layout) -> RenderedParagraph {
        let mut out = Builder::default();
        out.labeled(SpanKind::Name, None, &[self.names[person]]);
        for &a in &layout.order {
            out.filler(&self.sentence[a]);
            for (c, &i) in b.value(person, a).iter().enumerate() {
                out.labeled(SpanKind::ValueChunk { chunk: c as u16 }, Some(a as u16), &[self.chunks[a][i as usize]]);
            }
            out.filler(&[self.period]);
        }
        out.finish(person as u64, Source::Useful)
    }
}

enum Lexicon {
    BioD(BioDLexicon),
    BioS(Box<BioSLexicon>),
}

/// Renders paragraphs of one knowledge base over one vocabulary.
pub struct Renderer<'a> {
    kb: &'a KnowledgeBase,
    lex: Lexicon,
}

impl<'a> Renderer<'a> {
    /// Fails if the vocabulary lacks a token the knowledge base needs.
    pub fn new(kb: &'a KnowledgeBase, vocab: &Vocab) -> Result<Self> {
        let lex = match kb {
            KnowledgeBase::BioD(b) => Lexicon::BioD(BioDLexicon::new(b, vocab)?),
            KnowledgeBase::BioS(b) => {
                let lex = BioSLexicon::new(vocab)?;
                if let Some(n) = b.persons.iter().position(|p| !lex.covers(p)) {
                    return Err(missing(&format!("person {n}")));
                }
                Lexicon::BioS(Box::new(lex))
            }
        };
        Ok(Renderer { kb, lex })
    }

    pub fn kb(&self) -> &'a KnowledgeBase {
        self.kb
    }

    /// Number of attribute sentences per paragraph.
    pub fn attrs(&self) -> usize {
        match self.kb {
            KnowledgeBase::BioD(b) => b.spec.k,
            KnowledgeBase::BioS(_) => BioSAttr::ALL.len(),
        }
    }

    pub fn check_mode(&self, mode: TemplateMode) -> Result<()> {
        let ok = matches!(
            (self.kb, mode),
            (KnowledgeBase::BioD(_), TemplateMode::FixedTemplate)
                | (KnowledgeBase::BioS(_), TemplateMode::MultiPermute | TemplateMode::SingleFixed)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::ModeMismatch { mode: mode.as_str().into(), family: self.kb.family().into() })
        }
    }

    pub fn render_with(&self, person: usize, layout: &Layout) -> Result<RenderedParagraph> {
        if person >= self.kb.len() {
            return Err(Error::UnknownPerson(person));
        }
        Ok(match (&self.lex, self.kb) {
            (Lexicon::BioD(lex), KnowledgeBase::BioD(b)) => lex.render(b, person, layout),
            (Lexicon::BioS(lex), KnowledgeBase::BioS(b)) => {
                lex.render(&b.persons[person], layout, person as u64, Source::Useful)
            }
            _ => unreachable!("lexicon matches its knowledge base"),
        })
    }

    /// One training paragraph. `draw_seed` selects the random layout; it is
    /// ignored in single_fixed mode, whose layout is keyed by the kb seed.
    pub fn render(&self, person: usize, mode: TemplateMode, draw_seed: u64) -> Result<RenderedParagraph> {
        self.check_mode(mode)?;
        let seed = match mode {
            TemplateMode::SingleFixed => self.kb.seed(),
            _ => draw_seed,
        };
        let layout = Layout::draw(self.attrs(), &mut rng::stream(seed, &[streams::RENDER, person as u64]));
        self.render_with(person, &layout)
    }

    /// The evaluation paragraph: first template of every attribute, canonical order.
    pub fn canonical(&self, person: usize) -> Result<RenderedParagraph> {
        self.render_with(person, &Layout::canonical(self.attrs()))
    }
}

/// Convenience wrapper building a one-off [`Renderer`].
pub fn render_paragraph(
    kb: &KnowledgeBase,
    vocab: &Vocab,
    person: usize,
    mode: TemplateMode,
    draw_seed: u64,
) -> Result<RenderedParagraph> {
    Renderer::new(kb, vocab)?.render(person, mode, draw_seed)
}
