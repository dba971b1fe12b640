//! From knowledge to token windows: vocabulary, rendering, exposure
//! scheduling, packing and junk mixing.

pub mod junk;
pub mod pack;
pub mod render;
pub mod templates;
pub mod vocab;

use std::io::{BufRead, Write};

pub use junk::{mix_with_junk, JunkSpec, JunkStream, MixturePlan, Ratio};
pub use pack::{pack_windows, schedule_exposures, ExposurePlan, Window, DEFAULT_WINDOW};
pub use render::{render_paragraph, RenderedParagraph, Renderer, Source, Span, SpanKind, TemplateMode};
pub use templates::TemplateSet;
pub use vocab::Vocab;

use crate::error::Result;
use crate::knowledge::{tables, BioSAttr, KnowledgeBase};

/// Vocabulary of template words followed by every token of `kb`, in order of
/// first occurrence.
pub fn build_vocab(templates: &TemplateSet, kb: Option<&KnowledgeBase>) -> Vocab {
    let mut v = Vocab::new();
    for w in templates.words() {
        v.insert(w);
    }
    match kb {
        Some(KnowledgeBase::BioD(b)) => {
            for n in 0..b.names.len() {
                v.insert(&b.name_text(n));
            }
            for set in &b.diversity {
                for &c in set {
                    v.insert(&b.chunk_text(c));
                }
            }
        }
        Some(KnowledgeBase::BioS(b)) => {
            for p in &b.persons {
                v.insert_text(&p.full_name());
                v.insert(p.pronoun_text());
                for a in BioSAttr::ALL {
                    v.insert_text(&p.value_text(a));
                }
            }
        }
        None => {}
    }
    v
}

/// Adds every bioS table entry, as junk streams may emit any of them.
pub fn add_bios_tables(v: &mut Vocab) {
    let t = tables::tables();
    for list in [&t.first, &t.middle, &t.last, &t.cities, &t.universities, &t.majors, &t.employers] {
        for s in list {
            v.insert_text(s);
        }
    }
    for s in tables::MONTH_NAMES.iter().chain(&tables::PRONOUN_WORDS) {
        v.insert(s);
    }
    for d in 1..=tables::DAYS {
        v.insert(&d.to_string());
    }
    v.insert(",");
    for y in 0..tables::YEARS {
        v.insert(&(y + tables::FIRST_YEAR).to_string());
    }
}

/// Writes paragraphs as JSONL, one `{tokens, spans, person, source}` per line.
pub fn write_corpus<'a, W: Write, I: IntoIterator<Item = &'a RenderedParagraph>>(
    paragraphs: I,
    mut out: W,
) -> Result<()> {
    for p in paragraphs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<RenderedParagraph>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{gen_biod, gen_bios, BioDSpec, BioSSpec};

    #[test]
    fn empty_templates_give_reserved_vocab() {
        assert_eq!(build_vocab(&TemplateSet::empty(), None).len(), 3);
    }

    #[test]
    fn biod_vocab_size_is_bounded() {
        let spec = BioDSpec { n: 30, k: 3, c: 2, d: 6, l: 2, t: 4, n0: 1000, seed: 2 };
        let kb = gen_biod(spec).unwrap();
        let tpl = TemplateSet::biod(3);
        let v = build_vocab(&tpl, Some(&kb));
        let words: std::collections::HashSet<&str> = tpl.words().collect();
        assert!(v.len() <= 3 + 30 + 6 * 3 + words.len());
        assert_eq!(v, build_vocab(&tpl, Some(&kb)));
        let r = Renderer::new(&kb, &v).unwrap();
        let paras: Vec<_> = (0..30).map(|n| r.render(n, TemplateMode::FixedTemplate, 0).unwrap()).collect();
        assert!(v.used_size(paras.iter().map(|p| p.tokens.as_slice())) <= v.len());
    }

    #[test]
    fn table_vocab_covers_junk() {
        let mut v = build_vocab(&TemplateSet::bios(), None);
        add_bios_tables(&mut v);
        assert!(render::BioSLexicon::new(&v).unwrap().covers_all());
        let kb = gen_bios(BioSSpec { n: 5, seed: 0 }).unwrap();
        let small = build_vocab(&TemplateSet::bios(), Some(&kb));
        assert!(!render::BioSLexicon::new(&small).unwrap().covers_all());
        assert!(small.len() < v.len());
    }

    #[test]
    fn corpus_jsonl_round_trips() {
        let kb = gen_bios(BioSSpec { n: 4, seed: 0 }).unwrap();
        let v = build_vocab(&TemplateSet::bios(), Some(&kb));
        let r = Renderer::new(&kb, &v).unwrap();
        let paras: Vec<_> = (0..4).map(|n| r.render(n, TemplateMode::MultiPermute, 1).unwrap()).collect();
        let mut buf = Vec::new();
        write_corpus(&paras, &mut buf).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), paras);
    }
}
