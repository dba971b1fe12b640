//! Ground-truth knowledge bases for the bioD and bioS data families.
//!
//! A knowledge base is a pure function of its spec (which carries the seed):
//! regenerating it reproduces the same persons, the same diversity sets and
//! the same serialized bytes.

mod io;
pub mod tables;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitmath;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub use io::{read_jsonl, write_jsonl};

/// Largest admissible `T^L`.
pub const MAX_ALPHABET_POWER: u64 = 1 << 62;

/// bioS name pool: 400 first x 400 middle x 1000 last names.
pub const BIOS_N0: u64 = (tables::FIRST_NAMES * tables::MIDDLE_NAMES * tables::LAST_NAMES) as u64;

/// Number of distinct bioS attribute assignments per person (working city excluded).
pub const BIOS_S0: u128 = (tables::PRONOUNS
    * (tables::MONTHS * tables::DAYS * tables::YEARS)
    * tables::CITIES
    * tables::UNIVERSITIES
    * tables::MAJORS
    * tables::EMPLOYERS) as u128;

/// Parameters of a bioD(N, K, C, D, L, T) knowledge set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BioDSpec {
    /// Person count.
    pub n: usize,
    /// Attributes per person.
    pub k: usize,
    /// Chunks per value.
    pub c: usize,
    /// Diversity-set size per attribute.
    pub d: usize,
    /// Symbols per chunk.
    pub l: u32,
    /// Chunk alphabet size.
    pub t: u64,
    /// Candidate-name pool size.
    pub n0: u64,
    pub seed: u64,
}

impl BioDSpec {
    /// `T^L`, or `None` when it exceeds [`MAX_ALPHABET_POWER`].
    pub fn alphabet_power(&self) -> Option<u64> {
        let mut acc: u64 = 1;
        for _ in 0..self.l {
            acc = acc.checked_mul(self.t)?;
            if acc > MAX_ALPHABET_POWER {
                return None;
            }
        }
        Some(acc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if self.k == 0 || self.c == 0 || self.l == 0 || self.t == 0 {
            return bad("K, C, L and T must all be at least 1".into());
        }
        if self.n as u64 > self.n0 {
            return bad(format!("N = {} exceeds the name pool N0 = {}", self.n, self.n0));
        }
        let Some(space) = self.alphabet_power() else {
            return bad(format!("T^L = {}^{} exceeds 2^62", self.t, self.l));
        };
        if self.d == 0 || self.d as u64 >= space {
            return bad(format!("need 1 <= D < T^L, got D = {} and T^L = {space}", self.d));
        }
        if self.d > u32::MAX as usize {
            return bad(format!("D = {} is too large", self.d));
        }
        Ok(())
    }

    /// Attribute label as it appears in text, e.g. "ID 3".
    pub fn attribute_name(a: usize) -> String {
        format!("ID {}", a + 1)
    }
}

/// Parameters of a bioS(N) knowledge set. Domain sizes are fixed by the tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BioSSpec {
    pub n: usize,
    pub seed: u64,
}

impl BioSSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n as u64 > BIOS_N0 {
            return Err(Error::SpecInvalid(format!("bioS needs 1 <= N <= {BIOS_N0}, got {}", self.n)));
        }
        Ok(())
    }
}

/// The six bioS attributes, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BioSAttr {
    BirthDate,
    BirthCity,
    University,
    Major,
    Employer,
    WorkCity,
}

impl BioSAttr {
    pub const ALL: [BioSAttr; 6] = [
        BioSAttr::BirthDate,
        BioSAttr::BirthCity,
        BioSAttr::University,
        BioSAttr::Major,
        BioSAttr::Employer,
        BioSAttr::WorkCity,
    ];

    pub fn key(self) -> &'static str {
        match self {
            BioSAttr::BirthDate => "birth_date",
            BioSAttr::BirthCity => "birth_city",
            BioSAttr::University => "university",
            BioSAttr::Major => "major",
            BioSAttr::Employer => "employer",
            BioSAttr::WorkCity => "work_city",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of values the attribute can take.
    pub fn domain_size(self) -> usize {
        use tables::*;
        match self {
            BioSAttr::BirthDate => MONTHS * DAYS * YEARS,
            BioSAttr::BirthCity | BioSAttr::WorkCity => CITIES,
            BioSAttr::University => UNIVERSITIES,
            BioSAttr::Major => MAJORS,
            BioSAttr::Employer => EMPLOYERS,
        }
    }
}

/// One bioS person. Working city is derived from the employer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BioSPerson {
    pub first: u16,
    pub middle: u16,
    pub last: u16,
    pub month: u8,
    pub day: u8,
    pub year: u16,
    pub birth_city: u16,
    pub university: u16,
    pub major: u8,
    pub employer: u16,
    pub pronoun: u8,
}

impl BioSPerson {
    pub fn work_city(&self) -> u16 {
        tables::tables().employer_city[self.employer as usize]
    }

    pub fn full_name(&self) -> String {
        let t = tables::tables();
        format!("{} {} {}", t.first[self.first as usize], t.middle[self.middle as usize], t.last[self.last as usize])
    }

    /// Index of this person's name in the Cartesian pool.
    pub fn name_index(&self) -> u64 {
        (self.first as u64 * tables::MIDDLE_NAMES as u64 + self.middle as u64) * tables::LAST_NAMES as u64
            + self.last as u64
    }

    /// Value string of an attribute, e.g. "October 2, 1996".
    pub fn value_text(&self, attr: BioSAttr) -> String {
        let t = tables::tables();
        match attr {
            BioSAttr::BirthDate => format!(
                "{} {}, {}",
                tables::MONTH_NAMES[self.month as usize],
                self.day as usize + 1,
                self.year as usize + tables::FIRST_YEAR
            ),
            BioSAttr::BirthCity => t.cities[self.birth_city as usize].to_string(),
            BioSAttr::University => t.universities[self.university as usize].to_string(),
            BioSAttr::Major => t.majors[self.major as usize].to_string(),
            BioSAttr::Employer => t.employers[self.employer as usize].to_string(),
            BioSAttr::WorkCity => t.cities[self.work_city() as usize].to_string(),
        }
    }

    pub fn pronoun_text(&self) -> &'static str {
        tables::PRONOUN_WORDS[self.pronoun as usize]
    }
}

/// bioD knowledge: names, diversity sets and values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioDBase {
    pub spec: BioDSpec,
    /// Pool indices of the chosen names.
    pub names: Vec<u64>,
    /// `diversity[a]` holds the D chunk codes of attribute `a`; a code is the
    /// base-T integer of the chunk's L symbols.
    pub diversity: Vec<Vec<u64>>,
    /// Flat `N x K x C` indices into the diversity sets.
    values: Vec<u32>,
}

impl BioDBase {
    /// Indices into `diversity[a]` of the chunks of `v*(n, a)`.
    pub fn value(&self, person: usize, attr: usize) -> &[u32] {
        let c = self.spec.c;
        let at = (person * self.spec.k + attr) * c;
        &self.values[at..at + c]
    }

    /// Chunk codes of `v*(n, a)`.
    pub fn value_codes(&self, person: usize, attr: usize) -> Vec<u64> {
        self.value(person, attr).iter().map(|&i| self.diversity[attr][i as usize]).collect()
    }

    pub fn name_text(&self, person: usize) -> String {
        format!("Name_{}", self.names[person])
    }

    /// The L symbols of a chunk code, most significant first.
    pub fn chunk_symbols(&self, code: u64) -> Vec<u64> {
        let mut out = vec![0; self.spec.l as usize];
        let mut rest = code;
        for slot in out.iter_mut().rev() {
            *slot = rest % self.spec.t;
            rest /= self.spec.t;
        }
        out
    }

    pub fn chunk_text(&self, code: u64) -> String {
        let syms: Vec<String> = self.chunk_symbols(code).iter().map(u64::to_string).collect();
        format!("v{}", syms.join("."))
    }

    fn chunk_code(&self, text: &str) -> Option<u64> {
        let body = text.strip_prefix('v')?;
        let mut code: u64 = 0;
        let mut count = 0;
        for part in body.split('.') {
            let s: u64 = part.parse().ok()?;
            if s >= self.spec.t {
                return None;
            }
            code = code.checked_mul(self.spec.t)?.checked_add(s)?;
            count += 1;
        }
        (count == self.spec.l).then_some(code)
    }
}

/// bioS knowledge: one record per person.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioSBase {
    pub spec: BioSSpec,
    pub persons: Vec<BioSPerson>,
}

/// Z = {(n, a, v*(n, a))} together with the spec it was drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KnowledgeBase {
    BioD(BioDBase),
    BioS(BioSBase),
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        match self {
            KnowledgeBase::BioD(b) => b.names.len(),
            KnowledgeBase::BioS(b) => b.persons.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self) -> &'static str {
        match self {
            KnowledgeBase::BioD(_) => "biod",
            KnowledgeBase::BioS(_) => "bios",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            KnowledgeBase::BioD(b) => b.spec.seed,
            KnowledgeBase::BioS(b) => b.spec.seed,
        }
    }

    pub fn name_text(&self, person: usize) -> String {
        match self {
            KnowledgeBase::BioD(b) => b.name_text(person),
            KnowledgeBase::BioS(b) => b.persons[person].full_name(),
        }
    }

    pub fn as_biod(&self) -> Option<&BioDBase> {
        match self {
            KnowledgeBase::BioD(b) => Some(b),
            KnowledgeBase::BioS(_) => None,
        }
    }

    pub fn as_bios(&self) -> Option<&BioSBase> {
        match self {
            KnowledgeBase::BioS(b) => Some(b),
            KnowledgeBase::BioD(_) => None,
        }
    }
}

/// Draws `k` distinct integers from `0..pool` with a sparse partial
/// Fisher-Yates shuffle. Memory is O(k) regardless of the pool size.
pub fn sample_distinct<R: Rng>(rng: &mut R, pool: u64, k: usize) -> Vec<u64> {
    assert!(k as u64 <= pool, "cannot draw {k} distinct items from {pool}");
    let mut swapped: HashMap<u64, u64> = HashMap::with_capacity(k * 2);
    let mut out = Vec::with_capacity(k);
    for i in 0..k as u64 {
        let j = rng.gen_range(i..pool);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}

/// Generates a bioD knowledge base.
pub fn gen_biod(spec: BioDSpec) -> Result<KnowledgeBase> {
    spec.validate()?;
    let space = spec.alphabet_power().expect("validated");

    let names = sample_distinct(&mut rng::stream(spec.seed, &[streams::NAMES]), spec.n0, spec.n);

    let diversity: Vec<Vec<u64>> = (0..spec.k)
        .map(|a| {
            let mut r = rng::stream(spec.seed, &[streams::DIVERSITY, a as u64]);
            sample_distinct(&mut r, space, spec.d)
        })
        .collect();

    let mut values = Vec::with_capacity(spec.n * spec.k * spec.c);
    for n in 0..spec.n {
        let mut r = rng::stream(spec.seed, &[streams::VALUES, n as u64]);
        for _ in 0..spec.k * spec.c {
            values.push(r.gen_range(0..spec.d as u32));
        }
    }

    Ok(KnowledgeBase::BioD(BioDBase { spec, names, diversity, values }))
}

/// The bioS person with pool name `name_index`, attributes drawn from `r`.
pub fn draw_bios_person<R: Rng>(name_index: u64, r: &mut R) -> BioSPerson {
    use tables::*;
    let last = (name_index % LAST_NAMES as u64) as u16;
    let middle = ((name_index / LAST_NAMES as u64) % MIDDLE_NAMES as u64) as u16;
    let first = (name_index / (LAST_NAMES * MIDDLE_NAMES) as u64) as u16;
    BioSPerson {
        first,
        middle,
        last,
        month: r.gen_range(0..MONTHS as u8),
        day: r.gen_range(0..DAYS as u8),
        year: r.gen_range(0..YEARS as u16),
        birth_city: r.gen_range(0..CITIES as u16),
        university: r.gen_range(0..UNIVERSITIES as u16),
        major: r.gen_range(0..MAJORS as u8),
        employer: r.gen_range(0..EMPLOYERS as u16),
        pronoun: r.gen_range(0..PRONOUNS as u8),
    }
}

/// Generates a bioS knowledge base.
pub fn gen_bios(spec: BioSSpec) -> Result<KnowledgeBase> {
    spec.validate()?;
    let names = sample_distinct(&mut rng::stream(spec.seed, &[streams::NAMES]), BIOS_N0, spec.n);
    let persons = names
        .into_iter()
        .enumerate()
        .map(|(i, idx)| draw_bios_person(idx, &mut rng::stream(spec.seed, &[streams::ATTRIBUTES, i as u64])))
        .collect();
    Ok(KnowledgeBase::BioS(BioSBase { spec, persons }))
}

/// Summary of a knowledge base and its exact information content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    pub family: String,
    pub n: usize,
    pub k: usize,
    /// Name-pool size followed by the per-attribute domain sizes.
    pub name_pool: u64,
    pub domain_sizes: Vec<u64>,
    /// `log2 C(N0, N)`.
    pub name_bits: f64,
    /// Bits carried by the values given the names.
    pub value_bits: f64,
    /// bioD only: `K log2 C(T^L, D)`.
    pub diversity_bits: f64,
    pub upper_bound_bits: f64,
    /// Value bits per person, names excluded.
    pub per_person_bits: f64,
}

pub fn kb_stats(kb: &KnowledgeBase) -> KbStats {
    match kb {
        KnowledgeBase::BioD(b) => {
            let s = b.spec;
            let parts = bitmath::upper_bound_parts(&s).expect("knowledge base spec was validated");
            KbStats {
                family: "biod".into(),
                n: s.n,
                k: s.k,
                name_pool: s.n0,
                domain_sizes: vec![s.d as u64; s.k],
                name_bits: parts.names,
                value_bits: parts.values,
                diversity_bits: parts.diversity,
                upper_bound_bits: parts.total(),
                per_person_bits: parts.values / s.n as f64,
            }
        }
        KnowledgeBase::BioS(b) => {
            let n = b.spec.n;
            let name_bits = bitmath::log2_binomial(BIOS_N0, n as u64);
            let per_person = bitmath::bios_person_bits();
            KbStats {
                family: "bios".into(),
                n,
                k: BioSAttr::ALL.len(),
                name_pool: BIOS_N0,
                domain_sizes: BioSAttr::ALL.iter().map(|a| a.domain_size() as u64).collect(),
                name_bits,
                value_bits: per_person * n as f64,
                diversity_bits: 0.0,
                upper_bound_bits: name_bits + per_person * n as f64,
                per_person_bits: per_person,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[allow(clippy::too_many_arguments)]
    fn biod(n: usize, k: usize, c: usize, d: usize, l: u32, t: u64, n0: u64, seed: u64) -> BioDSpec {
        BioDSpec { n, k, c, d, l, t, n0, seed }
    }

    #[test]
    fn single_diversity_element_forces_the_value() {
        let kb = gen_biod(biod(1, 1, 1, 1, 1, 2, 4, 0)).unwrap();
        let b = kb.as_biod().unwrap();
        assert_eq!(b.names.len(), 1);
        assert_eq!(b.diversity[0].len(), 1);
        assert_eq!(b.value(0, 0), &[0]);
        assert!(b.names[0] < 4);
    }

    #[test]
    fn small_biod_membership_and_distinctness() {
        let kb = gen_biod(biod(2, 1, 2, 2, 1, 4, 1000, 7)).unwrap();
        let b = kb.as_biod().unwrap();
        assert_eq!(b.names.len(), 2);
        assert_ne!(b.names[0], b.names[1]);
        let ds = &b.diversity[0];
        assert_eq!(ds.len(), 2);
        assert_ne!(ds[0], ds[1]);
        assert!(ds.iter().all(|&c| c < 4));
        for n in 0..2 {
            let codes = b.value_codes(n, 0);
            assert_eq!(codes.len(), 2);
            assert!(codes.iter().all(|c| ds.contains(c)));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_biod(biod(1, 1, 1, 4, 1, 4, 4, 0)).is_err()); // D = T^L
        assert!(gen_biod(biod(5, 1, 1, 1, 1, 4, 4, 0)).is_err()); // N > N0
        assert!(gen_biod(biod(1, 1, 1, 1, 63, 2, 4, 0)).is_err()); // 2^63 > 2^62
        assert!(gen_biod(biod(1, 1, 1, 1, 2, u64::MAX, 4, 0)).is_err()); // overflow
        assert!(gen_biod(biod(0, 1, 1, 1, 1, 4, 4, 0)).is_err());
        assert!(gen_bios(BioSSpec { n: 0, seed: 0 }).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = biod(50, 3, 2, 5, 3, 6, 10_000, 42);
        assert_eq!(gen_biod(s).unwrap(), gen_biod(s).unwrap());
        let t = BioSSpec { n: 40, seed: 9 };
        assert_eq!(gen_bios(t).unwrap(), gen_bios(t).unwrap());
        assert_ne!(gen_bios(t).unwrap(), gen_bios(BioSSpec { n: 40, seed: 10 }).unwrap());
    }

    #[test]
    fn bios_single_person_uses_declared_domains() {
        let kb = gen_bios(BioSSpec { n: 1, seed: 3 }).unwrap();
        let p = kb.as_bios().unwrap().persons[0];
        let t = tables::tables();
        assert!((p.first as usize) < tables::FIRST_NAMES);
        assert!((p.middle as usize) < tables::MIDDLE_NAMES);
        assert!((p.last as usize) < tables::LAST_NAMES);
        assert!((p.month as usize) < 12 && (p.day as usize) < 28 && (p.year as usize) < 200);
        assert!(t.cities.contains(&p.value_text(BioSAttr::BirthCity).as_str()));
        assert!(t.universities.contains(&p.value_text(BioSAttr::University).as_str()));
        assert!(t.majors.contains(&p.value_text(BioSAttr::Major).as_str()));
        assert!(t.employers.contains(&p.value_text(BioSAttr::Employer).as_str()));
        assert_eq!(p.work_city(), t.employer_city[p.employer as usize]);
        assert!(p.pronoun < 2);
    }

    #[test]
    fn bios_names_are_distinct() {
        let kb = gen_bios(BioSSpec { n: 3, seed: 3 }).unwrap();
        let names: HashSet<String> = (0..3).map(|i| kb.name_text(i)).collect();
        assert_eq!(names.len(), 3);
    }

    #[test]
    fn sample_distinct_covers_small_pools() {
        let mut r = rng::stream(1, &[0]);
        let mut all = sample_distinct(&mut r, 10, 10);
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn chunk_text_round_trips() {
        let kb = gen_biod(biod(3, 2, 2, 4, 3, 5, 100, 1)).unwrap();
        let b = kb.as_biod().unwrap();
        for &code in &b.diversity[1] {
            assert_eq!(b.chunk_code(&b.chunk_text(code)), Some(code));
        }
    }

    #[test]
    fn stats_report_known_constants() {
        let kb = gen_biod(biod(2, 1, 1, 2, 1, 4, 4, 0)).unwrap();
        let s = kb_stats(&kb);
        assert!((s.upper_bound_bits - (2.0 * 6f64.log2() + 2.0)).abs() < 1e-12);
        assert!((s.upper_bound_bits - 7.170).abs() < 1e-3);

        let kb = gen_bios(BioSSpec { n: 1, seed: 0 }).unwrap();
        let s = kb_stats(&kb);
        assert!((s.per_person_bits - 47.6).abs() < 0.05, "{}", s.per_person_bits);

        let kb = gen_biod(biod(4, 3, 2, 1, 1, 4, 100, 0)).unwrap();
        assert_eq!(kb_stats(&kb).value_bits, 0.0);
    }
}
