//! Learning curves as SVG: mean eval return per group with a ±1 std band.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::runner::{csv_err, MetricsRow, CSV_HEADER};

/// `(episodes_elapsed, eval_return_mean)` per row.
pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("{}: unexpected CSV header", path.display())));
    }
    rdr.deserialize::<MetricsRow>()
        .map(|r| r.map(|row| (row.episodes_elapsed as f64, row.eval_return_mean)).map_err(csv_err))
        .collect()
}

/// Label for a CSV: the method in a sibling `config.txt`, else the file stem.
pub fn curve_label(path: &Path) -> String {
    let echo = path.parent().map(|d| d.join("config.txt"));
    if let Some(text) = echo.and_then(|p| std::fs::read_to_string(p).ok()) {
        if let Ok(cfg) = RunConfig::parse(&text) {
            return cfg.method.name().to_string();
        }
    }
    path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    /// Sample std across runs; zero for a single run.
    pub std: f64,
}

/// Pointwise mean and sample std over runs, truncated to the shortest run.
/// The x coordinate is the mean x at each index.
pub fn band(runs: &[Vec<(f64, f64)>]) -> Vec<BandPoint> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len() as f64;
    (0..len)
        .map(|i| {
            let x = runs.iter().map(|r| r[i].0).sum::<f64>() / n;
            let mean = runs.iter().map(|r| r[i].1).sum::<f64>() / n;
            let std = if runs.len() > 1 {
                (runs.iter().map(|r| (r[i].1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            BandPoint { x, mean, std }
        })
        .collect()
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub fn plot_curves(csvs: &[PathBuf], out: &Path) -> Result<()> {
    if csvs.is_empty() {
        return Err(Error::Config("plot needs at least one CSV".into()));
    }
    let mut groups: BTreeMap<String, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for p in csvs {
        groups.entry(curve_label(p)).or_default().push(read_curve(p)?);
    }
    let bands: Vec<(String, Vec<BandPoint>)> = groups.into_iter().map(|(k, runs)| (k, band(&runs))).collect();
    std::fs::write(out, render_svg(&bands))?;
    Ok(())
}

pub fn render_svg(bands: &[(String, Vec<BandPoint>)]) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 160.0, 20.0, 50.0);
    let pts = bands.iter().flat_map(|(_, b)| b.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.mean - p.std);
        y1 = y1.max(p.mean + p.std);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (ax0, ax1, ay0, ay1) = (sx(x0), sx(x1), sy(y0), sy(y1));
    let _ = writeln!(s, r#"<path d="M{ax0:.1},{ay1:.1} V{ay0:.1} H{ax1:.1}" stroke="black" fill="none"/>"#);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{ay0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, ay0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#, ay0 + 18.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{ax0:.1}" y2="{py:.1}" stroke="black"/>"#, ax0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.1}</text>"#, ax0 - 8.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">episodes</text>"#, (ax0 + ax1) / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">eval return</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0
    );
    for (k, (label, b)) in bands.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if b.len() > 1 {
            let upper = b.iter().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean + p.std)));
            let lower = b.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean - p.std)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = b.iter().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 20.0 * k as f64 + 10.0;
        let lx = w - right + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_zero_band() {
        let b = band(&[vec![(50.0, 1.0), (100.0, 2.0)]]);
        assert!(b.iter().all(|p| p.std == 0.0));
        assert_eq!(b[1].mean, 2.0);
    }

    #[test]
    fn sample_std_across_seeds() {
        let b = band(&[vec![(1.0, 1.0)], vec![(1.0, 2.0)], vec![(1.0, 3.0)]]);
        assert_eq!(b[0].mean, 2.0);
        assert!((b[0].std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_list_is_usage_error() {
        assert!(matches!(plot_curves(&[], Path::new("/tmp/x.svg")), Err(Error::Config(_))));
    }

    #[test]
    fn schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_curve(&p), Err(Error::Format(_))));
    }

    #[test]
    fn svg_renders() {
        let svg = render_svg(&[("hdice".into(), band(&[vec![(0.0, -10.0), (50.0, 20.0)]]))]);
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.contains("hdice"));
    }
}
