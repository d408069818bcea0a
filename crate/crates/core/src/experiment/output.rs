//! Curve aggregation and CSV/SVG emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::window_mean;

pub const CSV_HEADER: &str = "iteration,mean_sumrate_bits,std_sumrate_bits,budget,eps_tilde_mean";
pub const SMOOTHING_WINDOW: usize = 200;
const SVG_MAX_POINTS: usize = 400;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count: n }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

/// Across-seed statistics of one configuration's curves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveAggregate {
    pub label: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub budget: Vec<u32>,
    pub eps_tilde_mean: Vec<Option<f64>>,
    /// Final-window mean of each contributing run.
    pub final_window: Vec<f64>,
    pub final_window_stats: Stats,
}

impl CurveAggregate {
    /// Aggregates equal-length curves; `errors` entries may be absent.
    pub fn from_runs(
        label: impl Into<String>,
        curves: &[&[f64]],
        budget: &[u32],
        errors: &[Option<&[Option<f64>]>],
        window_fraction: f64,
    ) -> Result<Self> {
        let label = label.into();
        let len = budget.len();
        if curves.is_empty() {
            return Err(Error::InvalidArgument(format!("no curves to aggregate for '{label}'")));
        }
        if let Some(bad) = curves.iter().find(|c| c.len() != len) {
            return Err(Error::InvalidArgument(format!(
                "series of different lengths in '{label}' ({} vs {len})",
                bad.len()
            )));
        }
        let mut mean = Vec::with_capacity(len);
        let mut std = Vec::with_capacity(len);
        let mut eps_tilde_mean = Vec::with_capacity(len);
        let mut column = Vec::with_capacity(curves.len());
        for t in 0..len {
            column.clear();
            column.extend(curves.iter().map(|c| c[t]));
            let s = Stats::of(&column);
            mean.push(s.mean);
            std.push(s.std);
            let probed: Vec<f64> = errors.iter().filter_map(|e| e.and_then(|e| e.get(t).copied().flatten())).collect();
            eps_tilde_mean.push((!probed.is_empty()).then(|| probed.iter().sum::<f64>() / probed.len() as f64));
        }
        let final_window: Vec<f64> = curves.iter().map(|c| window_mean(c, window_fraction)).collect();
        Ok(Self {
            label,
            final_window_stats: Stats::of(&final_window),
            final_window,
            mean,
            std,
            budget: budget.to_vec(),
            eps_tilde_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Mean of the across-seed mean curve over iterations `range`.
    pub fn segment_mean(&self, range: std::ops::Range<usize>) -> f64 {
        let seg = &self.mean[range];
        seg.iter().sum::<f64>() / seg.len() as f64
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn csv_string(curves: &[&CurveAggregate]) -> Result<String> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("no curves to emit".into()));
    };
    for c in curves {
        if c.is_empty() {
            return Err(Error::InvalidArgument(format!("curve '{}' is empty", c.label)));
        }
        if c.len() != first.len() {
            return Err(Error::InvalidArgument(format!(
                "series of different lengths: '{}' has {}, '{}' has {}",
                first.label,
                first.len(),
                c.label,
                c.len()
            )));
        }
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in curves {
        for t in 0..c.len() {
            let eps = c.eps_tilde_mean[t].map(|e| format!("{e:.9}")).unwrap_or_default();
            writeln!(out, "{t},{:.9},{:.9},{},{eps}", c.mean[t], c.std[t], c.budget[t]).unwrap();
        }
    }
    Ok(out)
}

/// Writes the curves in the fixed CSV schema; several curves are stacked.
pub fn emit_csv(curves: &[&CurveAggregate], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &csv_string(curves)?)
}

/// Trailing moving average over `window` points.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub fn svg_string(curves: &[&CurveAggregate], title: &str) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidArgument("no curves to plot".into()));
    }
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let smoothed: Vec<Vec<f64>> = curves.iter().map(|c| trailing_mean(&c.mean, SMOOTHING_WINDOW)).collect();
    let x_max = curves.iter().map(|c| c.len() - 1).max().unwrap_or(0).max(1) as f64;
    let mut y_min = smoothed.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mut y_max = smoothed.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let px = |x: f64| left + (w - left - right) * x / x_max;
    let py = |y: f64| top + (h - top - bottom) * (1.0 - (y - y_min) / (y_max - y_min));

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (w - right + left) / 2.0, escape(title)).unwrap();
    let (x0, x1, y0, y1) = (px(0.0), px(x_max), py(y_min), py(y_max));
    writeln!(s, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let yv = y_min + (y_max - y_min) * i as f64 / 4.0;
        let xv = x_max * i as f64 / 4.0;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#, x0 - 6.0, py(yv) + 4.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#, px(xv), y0 + 18.0).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#, (x0 + x1) / 2.0, h - 10.0).unwrap();
    writeln!(s, r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">sumrate (bits/s/Hz)</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0).unwrap();
    for (i, (c, ys)) in curves.iter().zip(&smoothed).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = ys.len().div_ceil(SVG_MAX_POINTS).max(1);
        let mut points = String::new();
        for (t, y) in ys.iter().enumerate() {
            if t % stride == 0 || t + 1 == ys.len() {
                write!(points, "{:.1},{:.1} ", px(t as f64), py(*y)).unwrap();
            }
        }
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.trim_end()).unwrap();
        let ly = top + 18.0 * i as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - right + 35.0, ly + 4.0, escape(&c.label)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline chart of the smoothed mean curves, one series per label.
pub fn emit_svg(curves: &[&CurveAggregate], title: &str, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &svg_string(curves, title)?)
}

pub fn emit_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(path.as_ref(), &text)
}

pub(crate) fn emit_text(text: &str, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), text)
}
