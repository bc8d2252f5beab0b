//! Data and plot emission: CSV and JSON tables, static SVG line plots, and
//! atomic file writes.
//!
//! Everything here is a pure function of its input; no timestamps or
//! environment leak into the bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cavity::{SweepResult, SweepRow};
use crate::steady::Trajectory;

/// Writes `bytes` to `dir/name` through a temporary file in `dir` and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}

/// CSV with a header taken from the field names of `T`.
pub fn to_csv<T: Serialize>(rows: &[T]) -> csv::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// One row of the transient export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t_us: f64,
    pub rho_aa: f64,
    pub rho_bb: f64,
    pub rho_cc: f64,
    pub i_rho_ab: f64,
    pub rho_cb: f64,
    pub i_rho_ca: f64,
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<TrajectoryRow> {
    traj.points
        .iter()
        .map(|&(t, s)| TrajectoryRow {
            t_us: t,
            rho_aa: s.rho_aa,
            rho_bb: s.rho_bb,
            rho_cc: s.rho_cc(),
            i_rho_ab: s.u,
            rho_cb: s.v,
            i_rho_ca: s.w,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

/// One stacked panel sharing the figure's x axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; points outside are drawn on the frame edge.
    pub y_range: Option<(f64, f64)>,
}

impl Panel {
    pub fn new(y_label: impl Into<String>, series: Vec<Series>) -> Self {
        Self {
            y_label: y_label.into(),
            series,
            y_range: None,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub x_scale: Scale,
    pub panels: Vec<Panel>,
}

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const GAP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        let s = format!("{v:.2e}");
        // 1.00e18 -> 1e18
        let (m, e) = s.split_once('e').expect("exponent form");
        let m = m.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.log10().ceil() as i32;
    let last = hi.log10().floor() as i32;
    let every = ((last - first) / 6 + 1).max(1);
    (first..=last)
        .filter(|e| (e - first) % every == 0)
        .map(|e| 10f64.powi(e))
        .collect()
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Axis {
    lo: f64,
    hi: f64,
    scale: Scale,
    start: f64,
    end: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let s = match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
        };
        self.start + s.clamp(0.0, 1.0) * (self.end - self.start)
    }
}

/// Renders `fig` as a standalone SVG document. Coordinates are written with
/// two decimals, so identical input gives identical bytes.
pub fn render_svg(fig: &Figure) -> String {
    let n = fig.panels.len().max(1) as f64;
    let height = TOP + n * PANEL_HEIGHT + (n - 1.0) * GAP + BOTTOM;
    let plot_right = WIDTH - RIGHT;

    let xs = fig
        .panels
        .iter()
        .flat_map(|p| p.series.iter())
        .flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = match fig.x_scale {
        Scale::Linear => {
            let (lo, hi) = xs
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                    (l.min(x), h.max(x))
                });
            if lo < hi {
                (lo, hi)
            } else {
                padded_range([lo, hi].into_iter())
            }
        }
        Scale::Log => {
            let pos = xs.filter(|&x| x > 0.0);
            let (lo, hi) = pos.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                (l.min(x), h.max(x))
            });
            if lo < hi {
                (lo, hi)
            } else {
                (1.0, 10.0)
            }
        }
    };
    let x_axis = Axis {
        lo: x_lo,
        hi: x_hi,
        scale: fig.x_scale,
        start: LEFT,
        end: plot_right,
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH:.0}" height="{height:.0}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&fig.title)
    )
    .unwrap();

    let x_ticks = match fig.x_scale {
        Scale::Linear => linear_ticks(x_lo, x_hi),
        Scale::Log => log_ticks(x_lo, x_hi),
    };

    for (k, panel) in fig.panels.iter().enumerate() {
        let top = TOP + k as f64 * (PANEL_HEIGHT + GAP);
        let bottom = top + PANEL_HEIGHT;
        let (y_lo, y_hi) = panel.y_range.unwrap_or_else(|| {
            padded_range(
                panel
                    .series
                    .iter()
                    .flat_map(|s| s.points.iter().map(|p| p.1)),
            )
        });
        let y_axis = Axis {
            lo: y_lo,
            hi: y_hi,
            scale: Scale::Linear,
            start: bottom,
            end: top,
        };

        writeln!(s, r#"<g class="panel" id="panel-{k}">"#).unwrap();
        writeln!(
            s,
            r#"<rect x="{LEFT:.2}" y="{top:.2}" width="{:.2}" height="{PANEL_HEIGHT:.2}" fill="none" stroke="black"/>"#,
            plot_right - LEFT
        )
        .unwrap();
        for &t in &x_ticks {
            let x = x_axis.map(t);
            writeln!(s, r##"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="#dddddd"/>"##).unwrap();
            if k + 1 == fig.panels.len() {
                writeln!(
                    s,
                    r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    bottom + 16.0,
                    escape(&tick_label(t))
                )
                .unwrap();
            }
        }
        for t in linear_ticks(y_lo, y_hi) {
            let y = y_axis.map(t);
            writeln!(s, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{plot_right:.2}" y2="{y:.2}" stroke="#dddddd"/>"##).unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                escape(&tick_label(t))
            )
            .unwrap();
        }
        let mid = 0.5 * (top + bottom);
        writeln!(
            s,
            r#"<text x="18" y="{mid:.2}" text-anchor="middle" transform="rotate(-90 18 {mid:.2})">{}</text>"#,
            escape(&panel.y_label)
        )
        .unwrap();

        for (i, series) in panel.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| {
                    x.is_finite() && y.is_finite() && (fig.x_scale == Scale::Linear || *x > 0.0)
                })
                .map(|&(x, y)| format!("{:.2},{:.2}", x_axis.map(x), y_axis.map(y)))
                .collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                pts.join(" "),
                escape(&series.label)
            )
            .unwrap();
            let ly = top + 16.0 + 18.0 * i as f64;
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
                plot_right + 10.0,
                plot_right + 30.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                plot_right + 36.0,
                ly + 4.0,
                escape(&series.label)
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        0.5 * (LEFT + plot_right),
        height - 18.0,
        escape(&fig.x_label)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Titles and scales for [`emit_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxesMeta {
    pub title: String,
    pub x_label: String,
    pub x_scale: Scale,
    /// Cavity amplitude decay rate drawn over the gain (MHz).
    pub loss: Option<f64>,
}

/// Intensity, small-signal gain and inversion panels for a sweep.
pub fn sweep_figure(sweep: &SweepResult, meta: &AxesMeta) -> Figure {
    let col = |pick: fn(&SweepRow) -> f64| -> Vec<(f64, f64)> {
        sweep
            .rows
            .iter()
            .map(|r| (r.sweep_param, pick(r)))
            .collect()
    };
    let gain = col(|r| r.linear_gain_mhz);
    let mut gain_series = vec![Series::new("small-signal gain", gain.clone())];
    let mut gain_panel_hi = padded_range(gain.iter().map(|p| p.1)).1;
    let mut gain_panel_lo = padded_range(gain.iter().map(|p| p.1)).0;
    if let Some(loss) = meta.loss {
        let (x0, x1) = (
            gain.first().map_or(0.0, |p| p.0),
            gain.last().map_or(1.0, |p| p.0),
        );
        gain_series.push(Series::new("cavity loss", vec![(x0, loss), (x1, loss)]));
        // keep the crossing region readable when the gain diverges at small drive
        gain_panel_hi = gain_panel_hi.min(10.0 * loss);
        gain_panel_lo = gain_panel_lo.max(-2.0 * loss);
    }
    Figure {
        title: meta.title.clone(),
        x_label: meta.x_label.clone(),
        x_scale: meta.x_scale,
        panels: vec![
            Panel::new(
                "intensity a^2",
                vec![Series::new("intensity", col(|r| r.intensity))],
            ),
            Panel::new("gain (MHz)", gain_series).with_range(gain_panel_lo, gain_panel_hi),
            Panel::new(
                "inversion rho_aa - rho_bb",
                vec![Series::new("inversion", col(|r| r.inversion))],
            ),
        ],
    }
}

/// A sweep rendered as SVG.
pub fn emit_svg(sweep: &SweepResult, meta: &AxesMeta) -> String {
    render_svg(&sweep_figure(sweep, meta))
}
