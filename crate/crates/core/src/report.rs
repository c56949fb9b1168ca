//! Report emission: JSON with 17 significant digits, one CSV row per duality
//! instance, and a static SVG of the homotopy residual curves.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::problems::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            _ => {
                Err(Error::Config { path: "format".into(), message: format!("unknown format `{s}` (json, csv, svg)") })
            }
        }
    }
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

/// Pretty printer that writes every float as `d.dddddddddddddddde±x`.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes with 17 significant digits per float and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).map_err(|e| Error::Io(format!("serializing report: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `<dir>/<problem>.json` and returns its path.
pub fn write_run(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{}.json", report.problem));
    write(&path, &to_json(report)?)?;
    Ok(path)
}

const SUMMARY: &str = "summary";

/// Run reports in `dir`, ordered by file name. The summary file is skipped.
pub fn load_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_stem().is_some_and(|s| s != SUMMARY))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: not a run report: {e}", p.display())))
        })
        .collect()
}

/// Minimum certificate residual of an instance, or its left boundary margin
/// when it has no certificates.
fn min_residual(d: &crate::certify::DualityReport) -> f64 {
    d.certificates.iter().map(|c| c.min_residual).reduce(f64::min).unwrap_or(d.left.min_boundary_norm)
}

pub fn to_csv(reports: &[RunReport]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Io(format!("csv: {e}"));
    w.write_record(["problem", "pair", "left", "right", "equal", "min_residual"]).map_err(io_err)?;
    for r in reports {
        for d in &r.duality {
            w.write_record([
                r.problem.clone(),
                d.pair.clone(),
                d.left.degree.to_string(),
                d.right.degree.to_string(),
                d.equal.to_string(),
                format!("{:.16e}", min_residual(d)),
            ])
            .map_err(io_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Residual curves (log scale) of every certificate, followed by a degree table.
pub fn to_svg(reports: &[RunReport]) -> String {
    const W: f64 = 720.0;
    const PLOT_H: f64 = 320.0;
    const ROW: f64 = 18.0;
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let (left, top, right) = (70.0, 30.0, 20.0);

    let curves: Vec<(String, &crate::certify::HomotopyCertificate)> = reports
        .iter()
        .flat_map(|r| {
            r.duality
                .iter()
                .flat_map(move |d| d.certificates.iter().map(move |c| (format!("{} {}", r.problem, c.label), c)))
        })
        .collect();
    let logs: Vec<f64> = curves.iter().flat_map(|(_, c)| c.curve.iter().map(|v| v.max(1e-300).log10())).collect();
    let (mut lo, mut hi) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        (lo, hi) = (-6.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let rows: usize = reports.iter().map(|r| r.duality.len()).sum();
    let legend_h = ROW * curves.len() as f64;
    let table_top = top + PLOT_H + 50.0 + legend_h;
    let height = table_top + ROW * (rows as f64 + 2.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (left, W - right, top + PLOT_H, top);
    let _ = writeln!(s, r#"<text x="{left}" y="18">min boundary residual vs lambda (log10)</text>"#);
    let _ =
        writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{PLOT_H}" fill="none" stroke="black"/>"#, x1 - x0);
    let mut e = lo;
    while e <= hi {
        let y = y0 - (e - lo) / (hi - lo) * PLOT_H;
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, x0 - 4.0, y + 4.0, e as i64);
        e += 1.0;
    }
    for (k, lbl) in [(0.0, "0"), (1.0, "1")] {
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{lbl}</text>"#, x0 + k * (x1 - x0), y0 + 16.0);
    }
    for (i, (label, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .lambda_grid
            .iter()
            .zip(&c.curve)
            .map(|(l, v)| {
                let y = y0 - (v.max(1e-300).log10() - lo) / (hi - lo) * PLOT_H;
                format!("{:.2},{:.2}", x0 + l * (x1 - x0), y)
            })
            .collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = top + PLOT_H + 40.0 + ROW * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{ly}" fill="{color}">{} (min {:.3e}, {})</text>"#,
            escape(label),
            c.min_residual,
            if c.admissible { "admissible" } else { "not admissible" }
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{table_top}" font-weight="bold">problem  pair                       left  right  factor  equal</text>"#
    );
    let mut y = table_top + ROW;
    for r in reports {
        for d in &r.duality {
            let _ = writeln!(
                s,
                r#"<text x="{left}" y="{y}" xml:space="preserve">{:<8} {:<26} {:>4}  {:>5}  {:>6}  {}</text>"#,
                escape(&r.problem),
                escape(&d.pair),
                d.left.degree,
                d.right.degree,
                d.factor,
                d.equal
            );
            y += ROW;
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<dir>/summary.<ext>` for the given reports.
pub fn emit(reports: &[RunReport], format: Format, dir: &Path) -> Result<PathBuf> {
    let text = match format {
        Format::Json => to_json(&reports)?,
        Format::Csv => to_csv(reports)?,
        Format::Svg => to_svg(reports),
    };
    let path = dir.join(format!("{SUMMARY}.{}", format.extension()));
    write(&path, &text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{builtin, run, RunOptions, Suite};

    fn p1() -> RunReport {
        run(&builtin("P1").unwrap(), Suite::Duality, &RunOptions::default()).unwrap()
    }

    #[test]
    fn floats_carry_17_digits() {
        let text = to_json(&vec![0.1f64, 1.0 / 3.0, 2.0]).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("3.3333333333333331e-1"));
        assert!(text.contains("2.0000000000000000e0"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![0.1, 1.0 / 3.0, 2.0]);
    }

    #[test]
    fn json_round_trip() {
        let r = p1();
        let back: RunReport = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_and_svg_shapes() {
        let r = p1();
        let csv = to_csv(std::slice::from_ref(&r)).unwrap();
        assert!(!csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "problem,pair,left,right,equal,min_residual");
        assert_eq!(lines.len() - 1, r.duality.len());
        let svg = to_svg(std::slice::from_ref(&r));
        let certs: usize = r.duality.iter().map(|d| d.certificates.len()).sum();
        assert!(certs > 0);
        assert_eq!(svg.matches("<polyline").count(), certs);
    }

    #[test]
    fn emit_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let r = p1();
        write_run(&r, dir.path()).unwrap();
        for f in [Format::Json, Format::Csv, Format::Svg] {
            assert!(emit(std::slice::from_ref(&r), f, dir.path()).unwrap().exists());
        }
        assert_eq!(load_reports(dir.path()).unwrap(), vec![r]);
        assert!(matches!(emit(&[], Format::Csv, Path::new("/nonexistent/dir")), Err(Error::Io(_))));
    }
}
