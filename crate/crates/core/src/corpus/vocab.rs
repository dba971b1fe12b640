//! Word-level tokenizer and vocabulary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const EOS: u32 = 1;
pub const SPECIAL_USEFUL: u32 = 2;
pub const RESERVED: [&str; 3] = ["<pad>", "<eos>", "<useful>"];

/// Splits text into word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        let mut trailing = Vec::new();
        while let Some(stripped) = rest.strip_suffix([',', '.']) {
            trailing.push(&rest[stripped.len()..]);
            rest = stripped;
        }
        if !rest.is_empty() {
            out.push(rest);
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// Joins tokens back into text, attaching punctuation to the previous word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        if !out.is_empty() && tok != "," && tok != "." {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Canonical whitespace form used to compare texts with their round trip.
pub fn normalize(text: &str) -> String {
    detokenize(&tokenize(text))
}

/// Bijective token/id table. Ids 0..3 are reserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// A vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Vocab { tokens: Vec::new(), ids: HashMap::new() };
        for r in RESERVED {
            v.insert(r);
        }
        v
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    /// Adds every token of `text` in order of first occurrence.
    pub fn insert_text(&mut self, text: &str) {
        for tok in tokenize(text) {
            self.insert(tok);
        }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token ids of `text`; fails on out-of-vocabulary words.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        tokenize(text)
            .into_iter()
            .map(|t| self.id(t).ok_or_else(|| Error::format("text", format!("token {t:?} is not in the vocabulary"))))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let toks: Vec<&str> = ids.iter().map(|&i| self.token(i).unwrap_or("<unk>")).collect();
        detokenize(&toks)
    }

    /// Number of distinct ids that occur in `streams`.
    pub fn used_size<'a, I: IntoIterator<Item = &'a [u32]>>(&self, streams: I) -> usize {
        let mut seen = HashSet::new();
        for s in streams {
            seen.extend(s.iter().copied());
        }
        seen.len()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let map: BTreeMap<&str, u32> = self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
        serde_json::to_writer_pretty(out, &map)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let map: BTreeMap<String, u32> = serde_json::from_reader(input)?;
        let mut tokens = vec![String::new(); map.len()];
        for (tok, id) in &map {
            let slot = tokens
                .get_mut(*id as usize)
                .ok_or_else(|| Error::format("vocab file", format!("id {id} out of range")))?;
            if !slot.is_empty() {
                return Err(Error::format("vocab file", format!("duplicate id {id}")));
            }
            *slot = tok.clone();
        }
        if tokens.iter().take(RESERVED.len()).map(String::as_str).ne(RESERVED) {
            return Err(Error::format("vocab file", "reserved ids are not in place"));
        }
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Vocab { tokens, ids })
    }
}
