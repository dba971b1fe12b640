//! JSONL knowledge-base files.
//!
//! Record 0 is a header `{format_version, family, spec, seed}`. A bioD file
//! follows it with one `{diversity: {attr: [chunk, ...]}}` record; every
//! remaining line is a person `{name, attrs}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{tables, BioDBase, BioDSpec, BioSAttr, BioSBase, BioSPerson, BioSSpec, KnowledgeBase};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    family: String,
    spec: Value,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct DiversityRecord {
    diversity: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct PersonRecord {
    name: String,
    attrs: BTreeMap<String, Value>,
}

fn write_line<W: Write, T: Serialize>(out: &mut W, rec: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_jsonl<W: Write>(kb: &KnowledgeBase, mut out: W) -> Result<()> {
    match kb {
        KnowledgeBase::BioD(b) => {
            write_line(
                &mut out,
                &Header {
                    format_version: FORMAT_VERSION,
                    family: "biod".into(),
                    spec: serde_json::to_value(b.spec)?,
                    seed: b.spec.seed,
                },
            )?;
            let diversity = b
                .diversity
                .iter()
                .enumerate()
                .map(|(a, set)| (BioDSpec::attribute_name(a), set.iter().map(|&c| b.chunk_text(c)).collect()))
                .collect();
            write_line(&mut out, &DiversityRecord { diversity })?;
            for n in 0..b.names.len() {
                let attrs = (0..b.spec.k)
                    .map(|a| {
                        let chunks: Vec<Value> =
                            b.value_codes(n, a).into_iter().map(|c| Value::String(b.chunk_text(c))).collect();
                        (BioDSpec::attribute_name(a), Value::Array(chunks))
                    })
                    .collect();
                write_line(&mut out, &PersonRecord { name: b.name_text(n), attrs })?;
            }
        }
        KnowledgeBase::BioS(b) => {
            write_line(
                &mut out,
                &Header {
                    format_version: FORMAT_VERSION,
                    family: "bios".into(),
                    spec: serde_json::to_value(b.spec)?,
                    seed: b.spec.seed,
                },
            )?;
            for p in &b.persons {
                let mut attrs: BTreeMap<String, Value> =
                    BioSAttr::ALL.iter().map(|&a| (a.key().to_string(), Value::String(p.value_text(a)))).collect();
                attrs.insert("pronoun".into(), Value::String(p.pronoun_text().to_string()));
                write_line(&mut out, &PersonRecord { name: p.full_name(), attrs })?;
            }
        }
    }
    Ok(())
}

fn position(list: &[&str], item: &str, what: &'static str) -> Result<usize> {
    list.iter().position(|x| *x == item).ok_or_else(|| Error::format(what, format!("unknown entry {item:?}")))
}

fn attr_str<'a>(rec: &'a PersonRecord, key: &str) -> Result<&'a str> {
    rec.attrs
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::format("kb person", format!("missing attribute {key}")))
}

fn parse_bios_person(rec: &PersonRecord) -> Result<BioSPerson> {
    let t = tables::tables();
    let mut parts = rec.name.split(' ');
    let (Some(f), Some(m), Some(l), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(Error::format("kb person", format!("bad name {:?}", rec.name)));
    };
    let date = attr_str(rec, "birth_date")?;
    let bad_date = || Error::format("kb person", format!("bad birth date {date:?}"));
    let (month_day, year) = date.split_once(", ").ok_or_else(bad_date)?;
    let (month, day) = month_day.split_once(' ').ok_or_else(bad_date)?;
    let day: usize = day.parse().map_err(|_| bad_date())?;
    let year: usize = year.parse().map_err(|_| bad_date())?;
    if !(1..=tables::DAYS).contains(&day) || !(tables::FIRST_YEAR..tables::FIRST_YEAR + tables::YEARS).contains(&year) {
        return Err(bad_date());
    }
    let pronoun = position(&tables::PRONOUN_WORDS, attr_str(rec, "pronoun")?, "pronoun")?;
    let person = BioSPerson {
        first: position(&t.first, f, "first name")? as u16,
        middle: position(&t.middle, m, "middle name")? as u16,
        last: position(&t.last, l, "last name")? as u16,
        month: position(&tables::MONTH_NAMES, month, "month")? as u8,
        day: (day - 1) as u8,
        year: (year - tables::FIRST_YEAR) as u16,
        birth_city: position(&t.cities, attr_str(rec, "birth_city")?, "city")? as u16,
        university: position(&t.universities, attr_str(rec, "university")?, "university")? as u16,
        major: position(&t.majors, attr_str(rec, "major")?, "major")? as u8,
        employer: position(&t.employers, attr_str(rec, "employer")?, "employer")? as u16,
        pronoun: pronoun as u8,
    };
    if person.value_text(BioSAttr::WorkCity) != attr_str(rec, "work_city")? {
        return Err(Error::format("kb person", "working city disagrees with the employer table"));
    }
    Ok(person)
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<KnowledgeBase> {
    let mut lines = input.lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::format("kb file", "empty file")),
    };
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format("kb file", format!("unsupported version {}", header.format_version)));
    }
    match header.family.as_str() {
        "biod" => {
            let spec: BioDSpec = serde_json::from_value(header.spec)?;
            spec.validate()?;
            let div: DiversityRecord = match lines.next() {
                Some(line) => serde_json::from_str(&line?)?,
                None => return Err(Error::format("kb file", "missing diversity record")),
            };
            let mut base = BioDBase {
                spec,
                names: Vec::with_capacity(spec.n),
                diversity: Vec::with_capacity(spec.k),
                values: Vec::with_capacity(spec.n * spec.k * spec.c),
            };
            for a in 0..spec.k {
                let set = div
                    .diversity
                    .get(&BioDSpec::attribute_name(a))
                    .ok_or_else(|| Error::format("kb file", format!("no diversity set for attribute {a}")))?;
                let codes = set
                    .iter()
                    .map(|s| base.chunk_code(s).ok_or_else(|| Error::format("chunk", s.clone())))
                    .collect::<Result<Vec<_>>>()?;
                base.diversity.push(codes);
            }
            for line in lines {
                let rec: PersonRecord = serde_json::from_str(&line?)?;
                let idx = rec
                    .name
                    .strip_prefix("Name_")
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::format("kb person", format!("bad name {:?}", rec.name)))?;
                base.names.push(idx);
                for a in 0..spec.k {
                    let chunks = rec
                        .attrs
                        .get(&BioDSpec::attribute_name(a))
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::format("kb person", format!("missing attribute {a}")))?;
                    if chunks.len() != spec.c {
                        return Err(Error::format("kb person", "wrong chunk count"));
                    }
                    for ch in chunks {
                        let code = ch.as_str().and_then(|s| base.chunk_code(s));
                        let pos = code.and_then(|c| base.diversity[a].iter().position(|&d| d == c));
                        let pos = pos.ok_or_else(|| Error::format("kb person", "chunk outside diversity set"))?;
                        base.values.push(pos as u32);
                    }
                }
            }
            if base.names.len() != spec.n {
                return Err(Error::format(
                    "kb file",
                    format!("expected {} persons, found {}", spec.n, base.names.len()),
                ));
            }
            Ok(KnowledgeBase::BioD(base))
        }
        "bios" => {
            let spec: BioSSpec = serde_json::from_value(header.spec)?;
            spec.validate()?;
            let persons =
                lines.map(|line| parse_bios_person(&serde_json::from_str(&line?)?)).collect::<Result<Vec<_>>>()?;
            if persons.len() != spec.n {
                return Err(Error::format("kb file", format!("expected {} persons, found {}", spec.n, persons.len())));
            }
            Ok(KnowledgeBase::BioS(BioSBase { spec, persons }))
        }
        other => Err(Error::format("kb file", format!("unknown family {other:?}"))),
    }
}
