//! The `report-plots` command: five-category box plots from `proportions.csv`.
//!
//! Quartiles interpolate linearly between order statistics (the default of
//! most numeric libraries). Whiskers reach the most extreme observation
//! within 1.5 IQR of the box; anything beyond is drawn as an outlier.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use coltopic::outcome::OutcomeLabel;

use crate::evaluate::PROPORTIONS_FILE;
use crate::CliError;

pub const STATS_FILE: &str = "boxplot_stats.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box statistics of a non-empty sample.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = percentile(&sorted, 0.25);
    let q3 = percentile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (fence_low, fence_high) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || {
        sorted
            .iter()
            .copied()
            .filter(|v| (fence_low..=fence_high).contains(v))
    };
    Some(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1,
        median: percentile(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        whisker_low: inside().next().unwrap_or(q1),
        whisker_high: inside().next_back().unwrap_or(q3),
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| *v < fence_low || *v > fence_high)
            .collect(),
    })
}

type Series = BTreeMap<(String, String), Vec<[f64; 5]>>;

fn read_proportions(bundle: &Path) -> Result<Series, CliError> {
    let path = bundle.join(PROPORTIONS_FILE);
    let text = crate::read(&path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let bad = |msg: String| CliError::invalid(format!("{}: {msg}", path.display()));
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut expected = vec!["backend", "context", "run"];
    expected.extend(OutcomeLabel::ALL.iter().map(|l| l.as_str()));
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!(
            "unexpected columns `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut series = Series::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let mut shares = [0.0; 5];
        for (j, slot) in shares.iter_mut().enumerate() {
            *slot = record[3 + j].parse().map_err(|_| {
                bad(format!(
                    "line {}: `{}` is not a number",
                    i + 2,
                    &record[3 + j]
                ))
            })?;
        }
        series
            .entry((record[0].to_string(), record[1].to_string()))
            .or_default()
            .push(shares);
    }
    if series.is_empty() {
        return Err(bad("no tallied runs to plot".into()));
    }
    Ok(series)
}

/// Writes one SVG per (backend, context) plus the statistics table into
/// `out`. Returns the files written.
pub fn run(bundle: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let series = read_proportions(bundle)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", out.display())))?;

    let mut table = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    table
        .write_record([
            "backend",
            "context",
            "label",
            "n",
            "min",
            "q1",
            "median",
            "q3",
            "max",
            "whisker_low",
            "whisker_high",
            "outliers",
        ])
        .expect("in-memory write");
    let mut written = Vec::new();
    for ((backend, context), runs) in &series {
        let boxes: Vec<BoxStats> = OutcomeLabel::ALL
            .iter()
            .map(|&l| {
                let values: Vec<f64> = runs.iter().map(|r| r[l as usize]).collect();
                box_stats(&values).expect("series are never empty")
            })
            .collect();
        for (label, b) in OutcomeLabel::ALL.iter().zip(&boxes) {
            let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
            table
                .write_record([
                    backend.clone(),
                    context.clone(),
                    label.to_string(),
                    b.n.to_string(),
                    b.min.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.max.to_string(),
                    b.whisker_low.to_string(),
                    b.whisker_high.to_string(),
                    outliers.join(";"),
                ])
                .expect("in-memory write");
        }
        let path = out.join(format!(
            "boxplot_{}_{}.svg",
            file_safe(backend),
            file_safe(context)
        ));
        fs::write(&path, render_svg(&format!("{backend} ({context})"), &boxes))
            .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    let path = out.join(STATS_FILE);
    fs::write(&path, table.into_inner().expect("in-memory flush"))
        .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?;
    written.push(path);
    Ok(written)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn render_svg(title: &str, boxes: &[BoxStats]) -> String {
    let plot_h = HEIGHT - TOP - BOTTOM;
    let slot = (WIDTH - LEFT - RIGHT) / boxes.len() as f64;
    let y = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#dddddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{v:.2}</text>"##,
            y(v),
            WIDTH - RIGHT,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">share of headers</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (i, (label, b)) in OutcomeLabel::ALL.iter().zip(boxes).enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.whisker_high),
            y(b.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.q1),
            y(b.whisker_low)
        );
        for w in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2"/>"##,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        for o in &b.outliers {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#,
                y(*o)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 20.0,
            label
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_degenerates() {
        let b = box_stats(&[0.4]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (0.4, 0.4, 0.4));
        assert_eq!((b.whisker_low, b.whisker_high), (0.4, 0.4));
        assert!(b.outliers.is_empty());
        assert!(box_stats(&[]).is_none());
    }

    #[test]
    fn ten_run_fixture() {
        // reference quartiles from an independent linear-interpolation percentile
        let values = [0.12, 0.5, 0.31, 0.33, 0.29, 0.95, 0.3, 0.28, 0.35, 0.32];
        let b = box_stats(&values).unwrap();
        assert!((b.q1 - 0.2925).abs() < 1e-12);
        assert!((b.median - 0.315).abs() < 1e-12);
        assert!((b.q3 - 0.345).abs() < 1e-12);
        assert_eq!(b.whisker_low, 0.28);
        assert_eq!(b.whisker_high, 0.35);
        assert_eq!(b.outliers, vec![0.12, 0.5, 0.95]);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let b = box_stats(&[0.1, 0.2, 0.9]).unwrap();
        let svg = render_svg("a <b>", &vec![b; 5]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches("<rect").count(), 6);
    }
}
