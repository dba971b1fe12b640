//! Cross-module invariants over random inputs.

use caplab::bitmath::{lower_bound_bits, upper_bound_bits, CapacityReport, LossStats};
use caplab::corpus::pack::unpack;
use caplab::corpus::vocab::EOS;
use caplab::corpus::{pack_windows, RenderedParagraph, Source, Span, SpanKind};
use caplab::experiment::PlotFrame;
use caplab::knowledge::{gen_biod, gen_bios, read_jsonl, write_jsonl, BioDSpec, BioSSpec};
use caplab::model::{Checkpoint, ModelConfig};
use caplab::quant::{quantize_rtn, Granularity, QuantConfig};
use proptest::prelude::*;

fn biod_spec() -> impl Strategy<Value = BioDSpec> {
    (1usize..200, 1usize..5, 1usize..4, 1u32..4, 2u64..20, any::<u64>())
        .prop_flat_map(|(n, k, c, l, t, seed)| {
            let space = t.pow(l);
            (Just((n, k, c, l, t, seed)), 1..space.min(64), n as u64..n as u64 * 50 + 10)
        })
        .prop_map(|((n, k, c, l, t, seed), d, n0)| BioDSpec { n, k, c, d: d as usize, l, t, n0, seed })
}

fn paragraph(len: usize, person: u64) -> RenderedParagraph {
    RenderedParagraph {
        tokens: (0..len).map(|i| 3 + ((i as u64 + person) % 11) as u32).collect(),
        spans: vec![Span { kind: SpanKind::Name, attr: None, start: 0, len: len as u32 }],
        person,
        source: Source::Useful,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn learned_bits_never_exceed_the_description_length(spec in biod_spec(), q in 0.0f64..=1.0) {
        let d = spec.d as f64;
        let c = spec.c as i32;
        let losses = LossStats {
            p1: (spec.n as f64).ln(),
            p2m: -(q + (1.0 - q) / d.powi(c)).ln(),
            p3m: -(q + (1.0 - q) / d).ln(),
            p2s: None,
        };
        let upper = upper_bound_bits(&spec).unwrap();
        let perfect = lower_bound_bits(&spec, &LossStats::perfect(&spec)).unwrap();
        let noisy = lower_bound_bits(&spec, &losses).unwrap();
        prop_assert!(perfect.total() <= upper * (1.0 + 1e-12) + 1e-9, "{} > {upper}", perfect.total());
        prop_assert!(noisy.total() <= perfect.total() + 1e-9);
        prop_assert!(noisy.bits_name >= 0.0 && noisy.bits_value >= 0.0 && noisy.bits_div >= 0.0);
    }

    #[test]
    fn knowledge_bases_round_trip_through_jsonl(spec in biod_spec(), n in 1usize..40, seed in any::<u64>()) {
        for kb in [gen_biod(spec).unwrap(), gen_bios(BioSSpec { n, seed }).unwrap()] {
            let mut buf = Vec::new();
            write_jsonl(&kb, &mut buf).unwrap();
            prop_assert_eq!(read_jsonl(buf.as_slice()).unwrap(), kb);
        }
    }

    #[test]
    fn packing_preserves_the_token_stream(lens in proptest::collection::vec(1usize..90, 1..30), window in 16usize..128) {
        let paras: Vec<RenderedParagraph> = lens.iter().enumerate().map(|(i, &l)| paragraph(l, i as u64)).collect();
        let fits: Vec<RenderedParagraph> = paras.into_iter().filter(|p| p.tokens.len() < window).collect();
        prop_assume!(!fits.is_empty());
        let mut expect = Vec::new();
        for p in &fits {
            expect.extend_from_slice(&p.tokens);
            expect.push(EOS);
        }
        let windows = pack_windows(fits, window).collect::<caplab::Result<Vec<_>>>().unwrap();
        prop_assert!(windows.iter().all(|w| w.tokens.len() == window && w.valid <= window));
        prop_assert!(windows[..windows.len() - 1].iter().all(|w| w.valid == window));
        prop_assert_eq!(unpack(&windows), expect);
    }

    #[test]
    fn quantization_is_idempotent(seed in any::<u64>(), four in any::<bool>(), per_tensor in any::<bool>()) {
        let config = ModelConfig { layers: 1, heads: 2, head_dim: 8, window_len: 16, ..ModelConfig::new(1, 2, 23) };
        let ck = Checkpoint::init(config, seed).unwrap();
        let qc = QuantConfig {
            bits: if four { 4 } else { 8 },
            granularity: if per_tensor { Granularity::PerTensor } else { Granularity::PerChannel },
        };
        let once = quantize_rtn(&ck, qc).unwrap();
        let twice = quantize_rtn(&once, qc).unwrap();
        prop_assert_eq!(once.model.params(), twice.model.params());
    }

    #[test]
    fn capacity_rows_round_trip_through_csv(n in 1usize..10_000, p1 in 0.0f64..30.0, p2s in 0.0f64..60.0, params in 1u64..1u64 << 40) {
        let r = CapacityReport::bios(n, &LossStats { p1, p2m: 0.0, p3m: 0.0, p2s: Some(p2s) }, params, 100).unwrap();
        let back = CapacityReport::from_csv_row(&r.csv_row()).unwrap();
        prop_assert_eq!(back.csv_row(), r.csv_row());
        prop_assert!((back.r - r.r).abs() <= 1e-12 * r.r.abs().max(1.0));
    }

    #[test]
    fn two_bits_per_parameter_lies_on_the_guide(ps in proptest::collection::vec(1e3f64..1e9, 1..6), at in 0.0f64..1.0) {
        let rows: Vec<CapacityReport> = ps
            .iter()
            .map(|&p| CapacityReport::bios(1000, &LossStats { p1: 5.0, p2m: 0.0, p3m: 0.0, p2s: Some(10.0) }, p as u64, 100).unwrap())
            .collect();
        let frame = PlotFrame::fit(&rows);
        let [(x0, y0), (x1, y1)] = frame.guide();
        let p = 10f64.powf(frame.x.0 + at * (frame.x.1 - frame.x.0));
        let (x, y) = frame.map(p, 2.0 * p);
        let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
        prop_assert!(cross.abs() < 1e-6 * (x1 - x0).abs().max(1.0) * (y1 - y0).abs().max(1.0), "cross {cross}");
    }
}
