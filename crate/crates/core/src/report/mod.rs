//! Self-contained SVG figures. Coordinates are written with two decimals so
//! identical inputs give identical bytes.

use std::fmt::Write as _;

use crate::ecg::{EcgTrace, LEAD_NAMES};
use crate::error::{Error, Result};
use crate::eval::stats::{correlate, quantile};

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

/// Plot kinds understood by [`PlotKind::parse`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Boxplot,
    Scatter,
    EcgOverlay,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boxplot" => Ok(PlotKind::Boxplot),
            "scatter" => Ok(PlotKind::Scatter),
            "ecg-overlay" => Ok(PlotKind::EcgOverlay),
            _ => Err(Error::Config(format!(
                "unknown plot kind '{s}' (expected boxplot, scatter or ecg-overlay)"
            ))),
        }
    }
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            p0,
            p1,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn frame(s: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for i in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * i as f64 / 4.0;
        let py = y.map(v);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            tick(v)
        );
    }
    if !xlabel.is_empty() {
        for i in 0..=4 {
            let v = x.lo + (x.hi - x.lo) * i as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x.map(v),
                H - BOTTOM + 16.0,
                tick(v)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let r = if v.abs() < 5e-13 { 0.0 } else { v };
    format!("{r:.3}")
}

/// One box glyph per group, in the given order: quartile box, median line,
/// whiskers to the extremes.
pub fn boxplot(groups: &[(String, Vec<f64>)], title: &str, ylabel: &str) -> Result<String> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("boxplot groups"));
    }
    if let Some((name, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Invalid(format!("boxplot group '{name}' is empty")));
    }
    let y = Axis::fit(groups.iter().flat_map(|(_, v)| v.iter().copied()), H - BOTTOM, TOP);
    let x = Axis {
        lo: 0.0,
        hi: groups.len() as f64,
        p0: LEFT,
        p1: W - RIGHT,
    };
    let mut s = open(title);
    frame(&mut s, &x, &y, "", ylabel);
    let slot = (W - LEFT - RIGHT) / groups.len() as f64;
    let half = slot * 0.3;
    for (i, (name, vals)) in groups.iter().enumerate() {
        let mut v = vals.clone();
        v.sort_by(f64::total_cmp);
        let q = |p| quantile(&v, p);
        let cx = x.map(i as f64 + 0.5);
        let (lo, q1, med, q3, hi) = (v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]);
        let _ = writeln!(s, r#"<g class="group" data-label="{}">"#, escape(name));
        let _ = writeln!(
            s,
            r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y.map(lo),
            y.map(hi)
        );
        let _ = writeln!(
            s,
            r##"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y.map(q3),
            2.0 * half,
            y.map(q1) - y.map(q3)
        );
        let _ = writeln!(
            s,
            r#"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y.map(med),
            cx + half,
            y.map(med)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            escape(name)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Points with their least-squares line.
pub fn scatter(x: &[f64], y: &[f64], xlabel: &str, ylabel: &str) -> Result<String> {
    let fit = correlate(x, y)?;
    let ax = Axis::fit(x.iter().copied(), LEFT, W - RIGHT);
    let ay = Axis::fit(y.iter().copied(), H - BOTTOM, TOP);
    let mut s = open(&format!("{ylabel} vs {xlabel} (r = {:.3})", fit.pearson));
    frame(&mut s, &ax, &ay, xlabel, ylabel);
    for (&a, &b) in x.iter().zip(y) {
        let _ = writeln!(
            s,
            r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="#3182bd"/>"##,
            ax.map(a),
            ay.map(b)
        );
    }
    let (x0, x1) = (ax.lo, ax.hi);
    let _ = writeln!(
        s,
        r##"<path class="regression" d="M {:.2} {:.2} L {:.2} {:.2}" stroke="#de2d26" fill="none"/>"##,
        ax.map(x0),
        ay.map(fit.intercept + fit.slope * x0),
        ax.map(x1),
        ay.map(fit.intercept + fit.slope * x1)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn polyline(tr: &EcgTrace, lead: usize, ax: &Axis, ay: &Axis) -> String {
    let mut pts = String::new();
    for (i, v) in tr.leads[lead].iter().enumerate() {
        if i > 0 {
            pts.push(' ');
        }
        let _ = write!(pts, "{:.2},{:.2}", ax.map(i as f64 * tr.dt_ms), ay.map(*v));
    }
    pts
}

/// Eight lead panels, each with the reference and the predicted trace.
pub fn ecg_overlay(reference: &EcgTrace, predicted: &EcgTrace, title: &str) -> Result<String> {
    let mut s = open(title);
    let (cols, rows) = (4, 2);
    let pw = (W - 20.0) / cols as f64;
    let ph = (H - TOP - 10.0) / rows as f64;
    for lead in 0..8 {
        let (c, r) = (lead % cols, lead / cols);
        let x0 = 10.0 + c as f64 * pw;
        let y0 = TOP + r as f64 * ph;
        let t_end = (reference.len().max(predicted.len()).max(2) - 1) as f64 * reference.dt_ms.max(predicted.dt_ms);
        let ax = Axis {
            lo: 0.0,
            hi: t_end,
            p0: x0 + 4.0,
            p1: x0 + pw - 4.0,
        };
        let ay = Axis::fit(
            reference.leads[lead].iter().chain(&predicted.leads[lead]).copied(),
            y0 + ph - 6.0,
            y0 + 18.0,
        );
        let _ = writeln!(
            s,
            r#"<g class="lead" data-lead="{}"><rect x="{x0:.2}" y="{y0:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="gray"/>"#,
            LEAD_NAMES[lead]
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x0 + 6.0, y0 + 14.0, LEAD_NAMES[lead]);
        let _ = writeln!(
            s,
            r#"<polyline class="reference" points="{}" fill="none" stroke="black"/>"#,
            polyline(reference, lead, &ax, &ay)
        );
        let _ = writeln!(
            s,
            r##"<polyline class="predicted" points="{}" fill="none" stroke="#de2d26" stroke-dasharray="4 2"/>"##,
            polyline(predicted, lead, &ax, &ay)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
