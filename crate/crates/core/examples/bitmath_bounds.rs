//! Exact description lengths and the capacity ratios they imply.
//!
//!     cargo run --release --example bitmath_bounds

use caplab::bitmath::{bios_person_bits, capacity_ratio_bios_max, log2_binomial, upper_bound_parts};
use caplab::knowledge::{BioDSpec, BIOS_N0};

fn main() -> caplab::Result<()> {
    println!("bits per bioS person (names excluded): {:.4}", bios_person_bits());
    for n in [1_000u64, 10_000, 100_000, 1_000_000] {
        println!("  log2 C(N0, {n:>9}) = {:>14.1} bits", log2_binomial(BIOS_N0, n));
    }

    println!("bioD upper bounds (K=4, C=2, L=4, T=32):");
    for (n, d) in [(1_000, 16), (10_000, 64), (100_000, 1024)] {
        let u = upper_bound_parts(&BioDSpec { n, k: 4, c: 2, d, l: 4, t: 32, n0: 1 << 30, seed: 0 })?;
        println!(
            "  N={n:>7} D={d:>5}: names {:>12.1}  diversity {:>10.1}  values {:>12.1}  total {:>12.1}",
            u.names,
            u.diversity,
            u.values,
            u.total()
        );
    }

    println!("max capacity ratio of a loss-free model on bioS(N):");
    for params in [100_000u64, 1_000_000, 10_000_000] {
        let row: Vec<String> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| format!("N={n}: {:.3}", capacity_ratio_bios_max(n, params)))
            .collect();
        println!("  P={params:>9}  {}", row.join("  "));
    }
    Ok(())
}
