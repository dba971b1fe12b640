//! Fixed bioS string tables, generated once by `data/gen_tables.py`.

use std::sync::OnceLock;

pub const FIRST_NAMES: usize = 400;
pub const MIDDLE_NAMES: usize = 400;
pub const LAST_NAMES: usize = 1000;
pub const MONTHS: usize = 12;
pub const DAYS: usize = 28;
pub const YEARS: usize = 200;
pub const FIRST_YEAR: usize = 1900;
pub const CITIES: usize = 200;
pub const UNIVERSITIES: usize = 300;
pub const MAJORS: usize = 100;
pub const EMPLOYERS: usize = 263;
pub const PRONOUNS: usize = 2;

pub const MONTH_NAMES: [&str; MONTHS] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

pub const PRONOUN_WORDS: [&str; PRONOUNS] = ["He", "She"];

pub struct Tables {
    pub first: Vec<&'static str>,
    pub middle: Vec<&'static str>,
    pub last: Vec<&'static str>,
    pub cities: Vec<&'static str>,
    pub universities: Vec<&'static str>,
    pub majors: Vec<&'static str>,
    pub employers: Vec<&'static str>,
    pub employer_city: Vec<u16>,
}

fn lines(src: &'static str, expected: usize) -> Vec<&'static str> {
    let out: Vec<&'static str> = src.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(out.len(), expected, "embedded table has wrong size");
    out
}

pub fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| Tables {
        first: lines(include_str!("../../data/first_names.txt"), FIRST_NAMES),
        middle: lines(include_str!("../../data/middle_names.txt"), MIDDLE_NAMES),
        last: lines(include_str!("../../data/last_names.txt"), LAST_NAMES),
        cities: lines(include_str!("../../data/cities.txt"), CITIES),
        universities: lines(include_str!("../../data/universities.txt"), UNIVERSITIES),
        majors: lines(include_str!("../../data/majors.txt"), MAJORS),
        employers: lines(include_str!("../../data/employers.txt"), EMPLOYERS),
        employer_city: lines(include_str!("../../data/employer_city.txt"), EMPLOYERS)
            .into_iter()
            .map(|s| s.parse().expect("employer_city.txt holds city indices"))
            .collect(),
    })
}
