//! Learning-curve charts from metrics CSV files: the mean over seeds per step
//! with a shaded `mean ± 1.96·SEM` band. Train and global splits are drawn
//! solid, test splits dashed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{config, Result};
use crate::experiment::{mean_ci95, CONFIG_ECHO};
use crate::metrics::{read_csv, MetricRecord, Split, METRICS};

/// How files are grouped into curves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupBy {
    /// Name of the directory holding the CSV.
    Dir,
    /// File stem.
    File,
    /// Dotted key looked up in the `config.json` next to the CSV.
    ConfigKey(String),
}

impl GroupBy {
    pub fn parse(s: &str) -> Self {
        match s {
            "dir" => GroupBy::Dir,
            "file" => GroupBy::File,
            key => GroupBy::ConfigKey(key.to_string()),
        }
    }

    fn label(&self, path: &Path) -> Result<String> {
        match self {
            GroupBy::Dir => Ok(path
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| ".".to_string())),
            GroupBy::File => Ok(path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()),
            GroupBy::ConfigKey(key) => {
                let cfg_path = path.parent().unwrap_or(Path::new(".")).join(CONFIG_ECHO);
                let text = std::fs::read_to_string(&cfg_path)
                    .map_err(|e| config(format!("group-by {key}: cannot read {}: {e}", cfg_path.display())))?;
                let v: Value = serde_json::from_str(&text)?;
                let pointer = format!("/{}", key.replace('.', "/"));
                let found = v
                    .pointer(&pointer)
                    .ok_or_else(|| config(format!("group-by {key}: not present in {}", cfg_path.display())))?;
                let shown = match found {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                Ok(format!("{key}={shown}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub step: u64,
    pub mean: f64,
    /// Half-width of the 95% interval.
    pub half_width: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub group: String,
    pub split: Split,
    pub points: Vec<Point>,
}

/// Per group and split, the mean and interval over files at each step.
pub fn aggregate(groups: &[(String, Vec<MetricRecord>)], metric: &str) -> Vec<Series> {
    let mut acc: BTreeMap<(String, Split), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for (group, records) in groups {
        for r in records.iter().filter(|r| r.metric == metric) {
            acc.entry((group.clone(), r.split)).or_default().entry(r.step).or_default().push(r.value);
        }
    }
    acc.into_iter()
        .map(|((group, split), steps)| Series {
            group,
            split,
            points: steps
                .into_iter()
                .map(|(step, vals)| {
                    let (mean, half_width) = mean_ci95(&vals);
                    Point { step, mean, half_width, n: vals.len() }
                })
                .collect(),
        })
        .collect()
}

/// Loads every CSV matching `pattern`, sorted by path, with its group label.
pub fn load_groups(pattern: &str, group_by: &GroupBy) -> Result<Vec<(String, Vec<MetricRecord>)>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| config(format!("bad glob {pattern:?}: {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(config(format!("no files match {pattern:?}")));
    }
    paths.iter().map(|p| Ok((group_by.label(p)?, read_csv(p)?))).collect()
}

pub fn plot(pattern: &str, metric: &str, group_by: &GroupBy, out: &Path) -> Result<()> {
    if !METRICS.contains(&metric) {
        return Err(config(format!("unknown metric {metric:?}; expected one of {}", METRICS.join(", "))));
    }
    let groups = load_groups(pattern, group_by)?;
    let series = aggregate(&groups, metric);
    if series.is_empty() {
        return Err(config(format!("no {metric} records in the matched files")));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, render_svg(&series, metric))?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

/// Deterministic SVG: same series, same bytes.
pub fn render_svg(series: &[Series], metric: &str) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1) = (u64::MAX, 0u64);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.step);
        x1 = x1.max(p.step);
        y0 = y0.min(p.mean - p.half_width);
        y1 = y1.max(p.mean + p.half_width);
    }
    if x1 <= x0 {
        x1 = x0 + 1;
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.05;
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |s: u64| LEFT + (s - x0) as f64 / (x1 - x0) as f64 * pw;
    let sy = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 as f64 + f * (x1 - x0) as f64;
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (LEFT + f * pw, TOP + (1.0 - f) * ph);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{b2:.2}" stroke="#444"/><text x="{px:.2}" y="{t:.2}" text-anchor="middle">{}</text>"##,
            fmt_tick(xv),
            b = TOP + ph,
            b2 = TOP + ph + 5.0,
            t = TOP + ph + 18.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{a:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{t:.2}" y="{ty:.2}" text-anchor="end">{}</text>"##,
            fmt_tick(yv),
            a = LEFT - 5.0,
            t = LEFT - 8.0,
            ty = py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">environment steps</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(metric)
    );

    let mut groups: Vec<&str> = series.iter().map(|s| s.group.as_str()).collect();
    groups.dedup();
    for (k, s) in series.iter().enumerate() {
        let gi = groups.iter().position(|g| *g == s.group).unwrap_or(0);
        let colour = PALETTE[gi % PALETTE.len()];
        let dash = if s.split.is_test() { r#" stroke-dasharray="6 4""# } else { "" };
        let mut band = String::new();
        for p in &s.points {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.step), sy(p.mean + p.half_width));
        }
        for p in s.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.step), sy(p.mean - p.half_width));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{colour}" fill-opacity="0.18" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.step), sy(p.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + k as f64 * 18.0;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{} / {}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&s.group),
            s.split
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
