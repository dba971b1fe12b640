//! Bit accounting: the exact upper bound on a knowledge set's description
//! length, the three-component lower bound estimated from summed losses, and
//! capacity ratios.
//!
//! Losses arrive in nats; this is the only place they are converted to bits.

use std::f64::consts::LN_2;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{BioDSpec, BIOS_N0, BIOS_S0};

/// Above this many factors the binomial falls back to compensated log sums.
const EXACT_BINOMIAL_TERMS: u64 = 200_000;

fn product_range(lo: u64, hi: u64) -> BigUint {
    // product of lo..=hi by binary splitting
    if lo > hi {
        return BigUint::one();
    }
    if hi - lo < 16 {
        return (lo..=hi).fold(BigUint::one(), |acc, x| acc * x);
    }
    let mid = lo + (hi - lo) / 2;
    product_range(lo, mid) * product_range(mid + 1, hi)
}

/// Exact `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    let k = k.min(n - k);
    product_range(n - k + 1, n) / product_range(1, k)
}

/// `log2 x` for an arbitrarily large integer.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().expect("fits in 64 bits") as f64).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 leading bits");
    (top as f64).log2() + shift as f64
}

/// `log2 C(n, k)`; exact big-integer evaluation for moderate `min(k, n-k)`.
pub fn log2_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "C({n}, {k}) is zero");
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k <= EXACT_BINOMIAL_TERMS {
        return log2_big(&binomial(n, k));
    }
    // Kahan-compensated sum of log2((n - i) / (i + 1)).
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 0..k {
        let term = ((n - i) as f64 / (i + 1) as f64).log2() - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    sum
}

/// The three terms of the description-length upper bound, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// `log2 C(N0, N)`.
    pub names: f64,
    /// `K log2 C(T^L, D)`.
    pub diversity: f64,
    /// `N K C log2 D`.
    pub values: f64,
}

impl UpperBound {
    pub fn total(&self) -> f64 {
        self.names + self.diversity + self.values
    }
}

pub fn upper_bound_parts(spec: &BioDSpec) -> Result<UpperBound> {
    spec.validate()?;
    let space = spec.alphabet_power().expect("validated");
    Ok(UpperBound {
        names: log2_binomial(spec.n0, spec.n as u64),
        diversity: spec.k as f64 * log2_binomial(space, spec.d as u64),
        values: (spec.n * spec.k * spec.c) as f64 * (spec.d as f64).log2(),
    })
}

/// Bits needed to describe a bioD knowledge set drawn from `spec`.
pub fn upper_bound_bits(spec: &BioDSpec) -> Result<f64> {
    Ok(upper_bound_parts(spec)?.total())
}

/// `log2 S0`: bits of knowledge per bioS person, names excluded.
pub fn bios_person_bits() -> f64 {
    (BIOS_S0 as f64).log2()
}

/// Summed (not averaged) cross-entropy statistics, in nats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Expected NLL of a full name.
    pub p1: f64,
    /// Expected NLL of a full value, per (person, attribute).
    pub p2m: f64,
    /// Expected NLL of a value's first chunk, per (person, attribute).
    pub p3m: f64,
    /// bioS: expected NLL of all attribute values of a person.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2s: Option<f64>,
}

impl LossStats {
    /// Losses of a loss-free model on `spec`.
    pub fn perfect(spec: &BioDSpec) -> Self {
        LossStats { p1: (spec.n as f64).ln(), p2m: 0.0, p3m: 0.0, p2s: None }
    }
}

/// Bits attributed to each knowledge component, each clipped at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub bits_name: f64,
    pub bits_value: f64,
    pub bits_div: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.bits_name + self.bits_value + self.bits_div
    }

    /// Name, value and diversity shares of the total. All zero when nothing was learned.
    pub fn fractions(&self) -> [f64; 3] {
        let total = self.total();
        if total <= 0.0 {
            return [0.0; 3];
        }
        [self.bits_name / total, self.bits_value / total, self.bits_div / total]
    }
}

fn check_losses(losses: &LossStats) -> Result<()> {
    for (name, v) in [("p1", losses.p1), ("p2m", losses.p2m), ("p3m", losses.p3m)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::SpecInvalid(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    Ok(())
}

/// Lower bound on the bits a model must hold to reach `losses` on a bioD set.
pub fn lower_bound_bits(spec: &BioDSpec, losses: &LossStats) -> Result<Components> {
    spec.validate()?;
    check_losses(losses)?;
    let space = spec.alphabet_power().expect("validated") as f64;
    let (n, k, c, d) = (spec.n as f64, spec.k as f64, spec.c as f64, spec.d as f64);
    let name_pool_left = (spec.n0 - spec.n as u64) as f64;
    let name_nats = if name_pool_left > 0.0 { n * (name_pool_left.ln() - losses.p1) } else { 0.0 };
    Ok(Components {
        bits_name: name_nats.max(0.0) / LN_2,
        bits_value: (n * k * (c * d.ln() - losses.p2m)).max(0.0) / LN_2,
        bits_div: (k * d * (((space - d) / d).ln() - losses.p3m)).max(0.0) / LN_2,
    })
}

/// `(R, Rmax)` for a bioD model with `params` parameters.
pub fn capacity_ratio_biod(spec: &BioDSpec, learned: &Components, params: u64) -> Result<(f64, f64)> {
    if params == 0 {
        return Err(Error::ConfigInvalid("parameter count must be positive".into()));
    }
    let best = lower_bound_bits(spec, &LossStats::perfect(spec))?;
    Ok((learned.total() / params as f64, best.total() / params as f64))
}

/// Components for a bioS model. The diversity term is omitted because the
/// attribute domains are fixed tables.
pub fn bios_components(n: usize, p1: f64, p2s: f64) -> Components {
    let n = n as f64;
    Components {
        bits_name: (n * ((BIOS_N0 as f64).ln() - p1)).max(0.0) / LN_2,
        bits_value: (n * (BIOS_S0 as f64).ln() - n * p2s).max(0.0) / LN_2,
        bits_div: 0.0,
    }
}

/// Capacity ratio of a bioS model.
pub fn capacity_ratio_bios(n: usize, p1: f64, p2s: f64, params: u64) -> f64 {
    assert!(params > 0, "parameter count must be positive");
    bios_components(n, p1, p2s).total() / params as f64
}

/// Max capacity ratio of a bioS model: a perfect model has `p1 = ln N`, `p2s = 0`.
pub fn capacity_ratio_bios_max(n: usize, params: u64) -> f64 {
    capacity_ratio_bios(n, (n as f64).ln(), 0.0, params)
}

/// One capacity measurement. Serializes to the results CSV row and to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub family: String,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub d: usize,
    pub l: u32,
    pub t: u64,
    pub params: u64,
    pub exposures: u64,
    pub p1: f64,
    /// `p2m` for bioD, `p2s` for bioS.
    pub p2: f64,
    pub p3: f64,
    pub bits_name: f64,
    pub bits_value: f64,
    pub bits_div: f64,
    pub bits_total: f64,
    pub r: f64,
    pub rmax: f64,
    /// Name / value / diversity shares of `bits_total`.
    pub fractions: [f64; 3],
    /// Free-form provenance, e.g. the quantization method.
    #[serde(default)]
    pub notes: Vec<String>,
}

pub const CSV_HEADER: &str = "family,N,K,C,D,L,T,P,exposures,p1,p2,p3,bits_name,bits_value,bits_div,bits_total,R,Rmax";

impl CapacityReport {
    pub fn biod(spec: &BioDSpec, losses: &LossStats, params: u64, exposures: u64) -> Result<Self> {
        let comp = lower_bound_bits(spec, losses)?;
        let (r, rmax) = capacity_ratio_biod(spec, &comp, params)?;
        Ok(CapacityReport {
            family: "biod".into(),
            n: spec.n,
            k: spec.k,
            c: spec.c,
            d: spec.d,
            l: spec.l,
            t: spec.t,
            params,
            exposures,
            p1: losses.p1,
            p2: losses.p2m,
            p3: losses.p3m,
            bits_name: comp.bits_name,
            bits_value: comp.bits_value,
            bits_div: comp.bits_div,
            bits_total: comp.total(),
            r,
            rmax,
            fractions: comp.fractions(),
            notes: Vec::new(),
        })
    }

    pub fn bios(n: usize, losses: &LossStats, params: u64, exposures: u64) -> Result<Self> {
        check_losses(losses)?;
        if params == 0 {
            return Err(Error::ConfigInvalid("parameter count must be positive".into()));
        }
        let p2s =
            losses.p2s.ok_or_else(|| Error::SpecInvalid("bioS capacity needs the per-person value loss p2s".into()))?;
        let comp = bios_components(n, losses.p1, p2s);
        Ok(CapacityReport {
            family: "bios".into(),
            n,
            k: crate::knowledge::BioSAttr::ALL.len(),
            c: 0,
            d: 0,
            l: 0,
            t: 0,
            params,
            exposures,
            p1: losses.p1,
            p2: p2s,
            p3: losses.p3m,
            bits_name: comp.bits_name,
            bits_value: comp.bits_value,
            bits_div: comp.bits_div,
            bits_total: comp.total(),
            r: comp.total() / params as f64,
            rmax: capacity_ratio_bios_max(n, params),
            fractions: comp.fractions(),
            notes: Vec::new(),
        })
    }

    pub fn components(&self) -> Components {
        Components { bits_name: self.bits_name, bits_value: self.bits_value, bits_div: self.bits_div }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.n,
            self.k,
            self.c,
            self.d,
            self.l,
            self.t,
            self.params,
            self.exposures,
            self.p1,
            self.p2,
            self.p3,
            self.bits_name,
            self.bits_value,
            self.bits_div,
            self.bits_total,
            self.r,
            self.rmax
        )
    }

    /// Parses a row written by [`csv_row`](Self::csv_row).
    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 18 {
            return Err(Error::format("csv row", format!("expected 18 fields, got {}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::format("csv field", s.to_string()))
        }
        let comp = Components { bits_name: num(f[12])?, bits_value: num(f[13])?, bits_div: num(f[14])? };
        Ok(CapacityReport {
            family: f[0].to_string(),
            n: num(f[1])?,
            k: num(f[2])?,
            c: num(f[3])?,
            d: num(f[4])?,
            l: num(f[5])?,
            t: num(f[6])?,
            params: num(f[7])?,
            exposures: num(f[8])?,
            p1: num(f[9])?,
            p2: num(f[10])?,
            p3: num(f[11])?,
            bits_name: comp.bits_name,
            bits_value: comp.bits_value,
            bits_div: comp.bits_div,
            bits_total: num(f[15])?,
            r: num(f[16])?,
            rmax: num(f[17])?,
            fractions: comp.fractions(),
            notes: Vec::new(),
        })
    }
}
