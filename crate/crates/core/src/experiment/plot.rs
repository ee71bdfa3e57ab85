//! Minimal deterministic SVG line charts.

use std::fmt::Write as _;

use crate::lqr::SystemParams;
use crate::sim::episode::EpisodeTrace;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const MAX_POINTS: usize = 1000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub y: Vec<f64>,
    /// Half-width of a shaded band around `y`.
    pub band: Option<Vec<f64>>,
    pub dashed: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            y,
            band: None,
            dashed: false,
        }
    }
}

struct Frame {
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + x / self.x_max * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn sampled(len: usize) -> impl Iterator<Item = usize> {
    let k = stride(len);
    (0..len).step_by(k).chain((len > 0 && !(len - 1).is_multiple_of(k)).then_some(len - 1))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(frame: &Frame, ys: &[f64]) -> String {
    let mut pts = String::new();
    for i in sampled(ys.len()) {
        if ys[i].is_finite() {
            let _ = write!(pts, "{:.2},{:.2} ", frame.px(i as f64), frame.py(ys[i]));
        }
    }
    pts.trim_end().to_string()
}

/// A chart with the x axis the step index of each series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let len = series.iter().map(|s| s.y.len()).max().unwrap_or(0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (i, &y) in s.y.iter().enumerate() {
            let w = s.band.as_ref().and_then(|b| b.get(i)).copied().unwrap_or(0.0);
            if (y - w).is_finite() && (y + w).is_finite() {
                y_min = y_min.min(y - w);
                y_max = y_max.max(y + w);
            }
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let frame = Frame {
        x_max: (len.max(2) - 1) as f64,
        y_min: y_min - pad,
        y_max: y_max + pad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    );
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for k in 0..=5 {
        let fx = frame.x_max * k as f64 / 5.0;
        let px = frame.px(fx);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            fx.round()
        );
        let fy = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 5.0;
        let py = frame.py(fy);
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            x0 - 8.0,
            py + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(band) = &s.band {
            let upper: Vec<f64> = s.y.iter().zip(band).map(|(y, w)| y + w).collect();
            let lower: Vec<f64> = s.y.iter().zip(band).map(|(y, w)| y - w).collect();
            let mut pts = polyline(&frame, &upper);
            let idx: Vec<usize> = sampled(lower.len()).collect();
            for &i in idx.iter().rev() {
                if lower[i].is_finite() {
                    let _ = write!(pts, " {:.2},{:.2}", frame.px(i as f64), frame.py(lower[i]));
                }
            }
            let _ = writeln!(svg, r#"<polygon points="{pts}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#);
        }
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            polyline(&frame, &s.y)
        );
        let ly = MARGIN_T + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x1 + 10.0,
            x1 + 35.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x1 + 40.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Mean regret with a ±1 standard deviation band. The band is dropped for a
/// single run.
pub fn regret_plot(title: &str, label: &str, mean: &[f64], std: &[f64], runs: usize) -> String {
    let band = (runs > 1).then(|| std.to_vec());
    let series = Series {
        label: format!("{label} (n={runs})"),
        y: mean.to_vec(),
        band,
        dashed: false,
    };
    line_chart(title, "t", "cumulative regret", &[series])
}

/// One mean-regret curve per mode.
pub fn comparison_plot(title: &str, curves: &[(&str, &[f64])]) -> String {
    let series: Vec<Series> = curves.iter().map(|(l, y)| Series::line(*l, y.to_vec())).collect();
    line_chart(title, "t", "mean cumulative regret", &series)
}

/// Entries of `Θ̃_t` against the true parameter, drawn dashed.
pub fn estimate_plot(title: &str, trace: &EpisodeTrace, truth: &SystemParams) -> String {
    let mut series = Vec::new();
    let entries = |p: &SystemParams| -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, mat) in [("a", p.a()), ("b", p.b())] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    let label = if mat.len() == 1 {
                        name.to_string()
                    } else {
                        format!("{name}{}{}", i + 1, j + 1)
                    };
                    out.push((label, mat[(i, j)]));
                }
            }
        }
        out
    };
    let truth_entries = entries(truth);
    let mut paths: Vec<Vec<f64>> = vec![Vec::with_capacity(trace.steps.len()); truth_entries.len()];
    for step in &trace.steps {
        let values = trace
            .switches
            .get(step.policy)
            .map(|s| entries(&s.theta_tilde))
            .unwrap_or_default();
        for (k, path) in paths.iter_mut().enumerate() {
            path.push(values.get(k).map_or(f64::NAN, |v| v.1));
        }
    }
    for ((label, _), path) in truth_entries.iter().zip(paths) {
        series.push(Series::line(format!("{label} optimistic"), path));
    }
    for (label, v) in &truth_entries {
        series.push(Series {
            label: format!("{label} true"),
            y: vec![*v; trace.steps.len()],
            band: None,
            dashed: true,
        });
    }
    line_chart(title, "t", "parameter", &series)
}
