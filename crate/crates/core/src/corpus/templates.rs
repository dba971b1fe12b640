//! Sentence templates.
//!
//! bioS sentences come from a data file with 50 templates per attribute;
//! `{S}` marks the subject and `{V}` the value. bioD uses the single form
//! "ID k is <chunks> .", with the person's name prefixed to the first sentence.

use std::sync::OnceLock;

use crate::knowledge::BioSAttr;

pub const TEMPLATES_PER_ATTR: usize = 50;
pub const SUBJECT: &str = "{S}";
pub const VALUE: &str = "{V}";

/// The 6 x 50 bioS templates, indexed by [`BioSAttr::index`].
pub fn bios_templates() -> &'static [Vec<String>; 6] {
    static T: OnceLock<[Vec<String>; 6]> = OnceLock::new();
    T.get_or_init(|| parse(include_str!("../../data/templates_bios.txt")))
}

fn parse(src: &str) -> [Vec<String>; 6] {
    let mut out: [Vec<String>; 6] = Default::default();
    let mut current: Option<usize> = None;
    for line in src.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(key) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let attr = BioSAttr::ALL.iter().find(|a| a.key() == key).expect("template section names an attribute");
            current = Some(attr.index());
            continue;
        }
        let slot = current.expect("template before any section header");
        assert!(
            line.matches(SUBJECT).count() == 1 && line.matches(VALUE).count() == 1,
            "template must hold one subject and one value: {line}"
        );
        out[slot].push(line.to_string());
    }
    for (a, list) in out.iter().enumerate() {
        assert_eq!(list.len(), TEMPLATES_PER_ATTR, "attribute {a} template count");
    }
    out
}

/// Literal words of the bioD sentence form for attribute `a`.
pub fn biod_sentence_words(a: usize) -> [String; 3] {
    ["ID".to_string(), (a + 1).to_string(), "is".to_string()]
}

/// Raw template sentences used to seed a vocabulary.
#[derive(Clone, Debug, Default)]
pub struct TemplateSet {
    pub sentences: Vec<String>,
}

impl TemplateSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn bios() -> Self {
        TemplateSet { sentences: bios_templates().iter().flatten().cloned().collect() }
    }

    pub fn biod(k: usize) -> Self {
        TemplateSet { sentences: (0..k).map(|a| format!("{} {VALUE} .", biod_sentence_words(a).join(" "))).collect() }
    }

    /// Template words without placeholders, in order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flat_map(|s| super::vocab::tokenize(s)).filter(|w| *w != SUBJECT && *w != VALUE)
    }
}
