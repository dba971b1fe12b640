//! Tables and a log-log plot from a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{QUANT_CSV, QUANT_PREFIX, RESULTS_CSV};
use crate::bitmath::{CapacityReport, CSV_HEADER};
use crate::error::{Error, Result};
use crate::quant::METHOD_NOTE;

pub const REPORT_MD: &str = "report.md";
pub const PLOT_SVG: &str = "plot.svg";

/// Bits per parameter of the guide line.
pub const GUIDE_RATIO: f64 = 2.0;

/// Rows of a results CSV written by the runner.
pub fn read_results(path: &Path) -> Result<Vec<CapacityReport>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::format("results csv", format!("{} lacks the expected header", path.display()))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(CapacityReport::from_csv_row).collect()
}

/// One row of `quant.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantRow {
    pub hash: String,
    /// 32 for the full-precision reference.
    pub bits: u8,
    pub granularity: String,
    pub accuracy: Option<f64>,
    pub report: CapacityReport,
}

pub fn read_quant(path: &Path) -> Result<Vec<QuantRow>> {
    let text = fs::read_to_string(path)?;
    let expected = format!("{QUANT_PREFIX},{CSV_HEADER}");
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(expected.as_str()) {
        return Err(Error::format("quant csv", format!("{} lacks the expected header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(Error::format("quant csv row", l.to_string()));
            }
            let bad = |s: &str| Error::format("quant csv field", s.to_string());
            Ok(QuantRow {
                hash: f[0].to_string(),
                bits: f[1].parse().map_err(|_| bad(f[1]))?,
                granularity: f[2].to_string(),
                accuracy: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| bad(f[3]))?) },
                report: CapacityReport::from_csv_row(f[4])?,
            })
        })
        .collect()
}

/// Maps (parameters, bits) onto SVG coordinates on log-log axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotFrame {
    /// log10 bounds of the axes.
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl PlotFrame {
    /// Axes covering every row and the guide over the same parameter range,
    /// padded by a quarter decade. Rows without positive bits sit on the floor.
    pub fn fit(rows: &[CapacityReport]) -> Self {
        let xs: Vec<f64> = rows.iter().map(|r| (r.params.max(1) as f64).log10()).collect();
        let (x0, x1) = bounds(&xs);
        let mut ys: Vec<f64> = rows.iter().filter(|r| r.bits_total > 0.0).map(|r| r.bits_total.log10()).collect();
        ys.extend([x0, x1].map(|x| x + GUIDE_RATIO.log10()));
        let (y0, y1) = bounds(&ys);
        PlotFrame { x: (x0 - 0.25, x1 + 0.25), y: (y0 - 0.25, y1 + 0.25), width: 640.0, height: 480.0, margin: 60.0 }
    }

    pub fn map(&self, params: f64, bits: f64) -> (f64, f64) {
        let lx = params.max(f64::MIN_POSITIVE).log10();
        let ly = if bits > 0.0 { bits.log10().max(self.y.0) } else { self.y.0 };
        let fx = (lx - self.x.0) / (self.x.1 - self.x.0);
        let fy = (ly - self.y.0) / (self.y.1 - self.y.0);
        (
            self.margin + fx * (self.width - 2.0 * self.margin),
            self.height - self.margin - fy * (self.height - 2.0 * self.margin),
        )
    }

    /// End points of the `bits = 2P` line across the horizontal range.
    pub fn guide(&self) -> [(f64, f64); 2] {
        [self.x.0, self.x.1].map(|lx| {
            let p = 10f64.powf(lx);
            self.map(p, GUIDE_RATIO * p)
        })
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Learned bits against parameters, one series per (family, N).
pub fn plot_svg(rows: &[CapacityReport]) -> String {
    let f = PlotFrame::fit(rows);
    let mut s = String::new();
    let (w, h, m) = (f.width, f.height, f.margin);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for d in (f.x.0.ceil() as i32)..=(f.x.1.floor() as i32) {
        let (x, _) = f.map(10f64.powi(d), 1.0);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"##,
            m,
            h - m,
            h - m + 15.0
        );
    }
    for d in (f.y.0.ceil() as i32)..=(f.y.1.floor() as i32) {
        let (_, y) = f.map(1.0, 10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{m}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            w - m,
            m - 5.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">parameters</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">learned bits</text>"#,
        h / 2.0,
        h / 2.0
    );
    let [(gx0, gy0), (gx1, gy1)] = f.guide();
    let _ = writeln!(
        s,
        r#"<line x1="{gx0:.2}" y1="{gy0:.2}" x2="{gx1:.2}" y2="{gy1:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" fill="gray" text-anchor="end">{GUIDE_RATIO} bits / param</text>"#,
        gx1 - 4.0,
        gy1 + 14.0
    );

    for (k, ((family, n), mut pts)) in series(rows).into_iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xy: Vec<(f64, f64)> = pts.iter().map(|&(p, b)| f.map(p, b)).collect();
        if xy.len() > 1 {
            let path: Vec<String> = xy.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="{color}"/>"##, path.join(" "));
        }
        for (x, y) in &xy {
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"##);
        }
        let ly = m + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r##"<circle cx="{}" cy="{}" r="3.5" fill="{color}"/><text x="{}" y="{}">{family} N={n}</text>"##,
            m + 12.0,
            ly - 4.0,
            m + 20.0,
            ly
        );
    }
    s.push_str("</svg>\n");
    s
}

fn series(rows: &[CapacityReport]) -> BTreeMap<(String, usize), Vec<(f64, f64)>> {
    let mut out: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        out.entry((r.family.clone(), r.n)).or_default().push((r.params as f64, r.bits_total));
    }
    out
}

fn sorted(rows: &[CapacityReport]) -> Vec<&CapacityReport> {
    let mut v: Vec<&CapacityReport> = rows.iter().collect();
    v.sort_by(|a, b| (&a.family, a.n, a.exposures, a.params).cmp(&(&b.family, b.n, b.exposures, b.params)));
    v
}

/// Capacity table, component-fraction table and, when present, the
/// quantization comparison.
pub fn markdown(rows: &[CapacityReport], quant: &[QuantRow]) -> String {
    let mut s = String::from("# Capacity report\n\n## Capacity versus parameters\n\n");
    s.push_str("| family | N | exposures | P | bits | R | Rmax |\n|---|---:|---:|---:|---:|---:|---:|\n");
    for r in sorted(rows) {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.1} | {:.4} | {:.4} |",
            r.family, r.n, r.exposures, r.params, r.bits_total, r.r, r.rmax
        );
    }
    s.push_str("\n## Component fractions\n\n");
    s.push_str(
        "| family | N | exposures | P | name | value | diversity | sum |\n|---|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in sorted(rows) {
        let [a, b, c] = r.fractions;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {a:.4} | {b:.4} | {c:.4} | {:.4} |",
            r.family,
            r.n,
            r.exposures,
            r.params,
            a + b + c
        );
    }
    if !quant.is_empty() {
        let _ = write!(
            s,
            "\n## Quantization\n\nMethod: {METHOD_NOTE}. These numbers are not comparable with GPTQ results.\n\n"
        );
        s.push_str(
            "| run | weights | granularity | bits | fraction of full | accuracy |\n|---|---:|---|---:|---:|---:|\n",
        );
        let full: BTreeMap<&str, f64> =
            quant.iter().filter(|q| q.bits == 32).map(|q| (q.hash.as_str(), q.report.bits_total)).collect();
        for q in quant {
            let frac = full
                .get(q.hash.as_str())
                .filter(|&&b| b > 0.0)
                .map_or("-".to_string(), |b| format!("{:.3}", q.report.bits_total / b));
            let acc = q.accuracy.map_or("-".to_string(), |a| format!("{a:.2}"));
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.1} | {frac} | {acc} |",
                q.hash, q.bits, q.granularity, q.report.bits_total
            );
        }
    }
    let _ = write!(s, "\n![learned bits versus parameters]({PLOT_SVG})\n");
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub markdown: PathBuf,
    pub plot: PathBuf,
    pub rows: usize,
}

/// Writes `report.md` and `plot.svg` next to the results.
pub fn report(dir: &Path) -> Result<Report> {
    let csv = dir.join(RESULTS_CSV);
    let rows = if csv.exists() { read_results(&csv)? } else { Vec::new() };
    if rows.is_empty() {
        return Err(Error::EmptyResults(dir.to_path_buf()));
    }
    let qpath = dir.join(QUANT_CSV);
    let quant = if qpath.exists() { read_quant(&qpath)? } else { Vec::new() };
    let out = Report { markdown: dir.join(REPORT_MD), plot: dir.join(PLOT_SVG), rows: rows.len() };
    fs::write(&out.markdown, markdown(&rows, &quant))?;
    fs::write(&out.plot, plot_svg(&rows))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmath::LossStats;

    fn row(n: usize, params: u64, p1: f64, p2s: f64) -> CapacityReport {
        CapacityReport::bios(n, &LossStats { p1, p2m: 0.0, p3m: 0.0, p2s: Some(p2s) }, params, 100).unwrap()
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(Error::EmptyResults(_))));
        fs::write(dir.path().join(RESULTS_CSV), format!("{CSV_HEADER}\n")).unwrap();
        assert!(matches!(report(dir.path()), Err(Error::EmptyResults(_))));
    }

    #[test]
    fn single_row_gives_one_point_and_one_table_line() {
        let dir = tempfile::tempdir().unwrap();
        let r = row(100, 50_000, 5.0, 10.0);
        fs::write(dir.path().join(RESULTS_CSV), format!("{CSV_HEADER}\n{}\n", r.csv_row())).unwrap();
        let rep = report(dir.path()).unwrap();
        assert_eq!(rep.rows, 1);
        let svg = fs::read_to_string(&rep.plot).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 0);
        let md = fs::read_to_string(&rep.markdown).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with("| bios |")).count(), 2);
        assert!(!md.contains("Quantization"));
    }

    #[test]
    fn fractions_in_the_table_sum_to_one() {
        let rows = [row(100, 50_000, 5.0, 10.0), row(200, 80_000, 9.0, 3.0)];
        let md = markdown(&rows, &[]);
        let sums: Vec<f64> = md
            .split("## Component fractions")
            .nth(1)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("| bios"))
            .map(|l| l.split('|').map(str::trim).filter(|x| !x.is_empty()).collect::<Vec<_>>())
            .map(|f| f[4..7].iter().map(|x| x.parse::<f64>().unwrap()).sum())
            .collect();
        assert_eq!(sums.len(), 2);
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-3), "{sums:?}");
    }
}
