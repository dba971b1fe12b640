//! Measures analytic oracles with the summed-loss evaluator and compares the
//! bits they certify with the closed forms.
//!
//!     cargo run --release --example oracle_bits

use caplab::corpus::{build_vocab, Renderer, TemplateSet};
use caplab::evaluator::measure_capacity;
use caplab::knowledge::{gen_biod, BioDSpec};
use caplab::oracles::{analytic_bits, make_oracle, OracleKind, OracleSpec};

fn main() -> caplab::Result<()> {
    let spec = BioDSpec { n: 512, k: 4, c: 2, d: 16, l: 4, t: 32, n0: 1 << 24, seed: 2 };
    let kb = gen_biod(spec)?;
    let vocab = build_vocab(&TemplateSet::biod(spec.k), Some(&kb));
    let r = Renderer::new(&kb, &vocab)?;
    println!("{:<28} {:>10} {:>10} {:>10} {:>12} {:>12}", "oracle", "p1", "p2m", "p3m", "bits", "closed form");
    let mut kinds = vec![OracleKind::Perfect, OracleKind::Uniform, OracleKind::NameUniformOverPool];
    kinds.extend([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| OracleKind::QNoisy { q }));
    for kind in kinds {
        let spec = OracleSpec { kind, seed: 0 };
        let oracle = make_oracle(spec, &r, &vocab)?;
        let got = measure_capacity(&oracle, 1, &r, &vocab, 0, usize::MAX, 0)?;
        let want = analytic_bits(spec, &r, &vocab)?;
        println!(
            "{:<28} {:>10.4} {:>10.4} {:>10.4} {:>12.1} {:>12.1}",
            format!("{kind:?}"),
            got.p1,
            got.p2,
            got.p3,
            got.bits_total,
            want.components.total()
        );
    }
    Ok(())
}
