//! Minimal SVG plots.
//!
//! Both plots draw into a [`Frame`]: a `width x height` canvas with a fixed
//! margin, where a data point `(x, y)` lands at
//!
//! ```text
//! px = margin + (x - x_min) / (x_max - x_min) * (width  - 2 margin)
//! py = height - margin - (y - y_min) / (y_max - y_min) * (height - 2 margin)
//! ```
//!
//! The plot group carries the data ranges as `data-x-min`, `data-x-max`,
//! `data-y-min` and `data-y-max` attributes so points can be mapped back.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Sequential palette from "never correct" to "always correct".
pub const PALETTE: [&str; 11] = [
    "#3b0f70", "#57157e", "#721f81", "#8c2981", "#a8327d", "#c43c75", "#de4968", "#f1605d",
    "#fa7f5e", "#fe9f6d", "#fec287",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.width - 2.0 * self.margin;
        let h = self.height - 2.0 * self.margin;
        (
            self.margin + (x - self.x_min) / (self.x_max - self.x_min) * w,
            self.height - self.margin - (y - self.y_min) / (self.y_max - self.y_min) * h,
        )
    }

    pub fn unmap(&self, px: f64, py: f64) -> (f64, f64) {
        let w = self.width - 2.0 * self.margin;
        let h = self.height - 2.0 * self.margin;
        (
            self.x_min + (px - self.margin) / w * (self.x_max - self.x_min),
            self.y_min + (self.height - self.margin - py) / h * (self.y_max - self.y_min),
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(frame: &Frame, title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        frame.width / 2.0,
        frame.margin / 2.0,
        escape(title)
    );
    let (x0, y0) = frame.map(frame.x_min, frame.y_min);
    let (x1, y1) = frame.map(frame.x_max, frame.y_max);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let (px, _) = frame.map(xv, frame.y_min);
        let (_, py) = frame.map(frame.x_min, yv);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            y0 + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            x0 - 4.0,
            py + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        frame.width / 2.0,
        frame.height - frame.margin / 4.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        frame.margin / 4.0,
        frame.height / 2.0,
        frame.margin / 4.0,
        frame.height / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r#"<g id="plot" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        frame.x_min, frame.x_max, frame.y_min, frame.y_max
    );
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Palette entry for correctness level `j` of `epochs + 1` levels.
pub fn level_color(level: usize, epochs: usize) -> &'static str {
    if epochs == 0 {
        return PALETTE[PALETTE.len() - 1];
    }
    PALETTE[(level.min(epochs) * (PALETTE.len() - 1) + epochs / 2) / epochs]
}

/// Variability on x in [0, 0.5], confidence on y in [0, 1], one circle per
/// instance coloured by its correctness level `round(correctness * epochs)`.
pub fn datamap_svg(
    title: &str,
    variability: &[f64],
    confidence: &[f64],
    correctness: &[f64],
    epochs: usize,
) -> Result<String> {
    if variability.len() != confidence.len() || confidence.len() != correctness.len() {
        return Err(Error::Mismatch("data map columns differ in length".into()));
    }
    let frame = Frame {
        width: 640.0,
        height: 640.0,
        margin: 60.0,
        x_min: 0.0,
        x_max: 0.5,
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut s = open(&frame, title, "variability", "confidence");
    for i in 0..confidence.len() {
        let (px, py) = frame.map(variability[i], confidence[i]);
        let level = (correctness[i] * epochs as f64).round() as usize;
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.3}" cy="{py:.3}" r="2.5" fill="{}" fill-opacity="0.7" data-level="{level}"/>"#,
            level_color(level, epochs)
        );
    }
    s.push_str("</g>\n<g id=\"legend\">\n");
    for level in 0..=epochs {
        let y = frame.margin + 14.0 * level as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{y:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            frame.width - frame.margin + 6.0,
            level_color(level, epochs),
            frame.width - frame.margin + 20.0,
            y + 9.0,
            tick(level as f64 / epochs.max(1) as f64)
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// Mean accuracy per labeled-set size for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Averages `(labeled_count, accuracy)` pairs over seeds.
pub fn mean_curve(label: &str, rows: &[(usize, f64)]) -> Curve {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &(x, y) in rows {
        let e = acc.entry(x).or_default();
        e.0 += y;
        e.1 += 1;
    }
    Curve {
        label: label.to_string(),
        points: acc
            .into_iter()
            .map(|(x, (sum, n))| (x as f64, sum / n as f64))
            .collect(),
    }
}

const LINE_COLORS: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// One polyline per curve. All curves must share the same x positions.
pub fn curves_svg(title: &str, curves: &[Curve]) -> Result<String> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to plot".into()))?;
    let xs: Vec<f64> = first.points.iter().map(|p| p.0).collect();
    if xs.is_empty() {
        return Err(Error::InvalidArgument("curve has no points".into()));
    }
    for c in curves {
        let other: Vec<f64> = c.points.iter().map(|p| p.0).collect();
        if other != xs {
            return Err(Error::Mismatch(format!(
                "`{}` has {} points at different labeled sizes than `{}` ({})",
                c.label,
                other.len(),
                first.label,
                xs.len()
            )));
        }
    }
    let ys = curves.iter().flat_map(|c| c.points.iter().map(|p| p.1));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), y| (l.min(y), h.max(y)));
    let pad = ((y_hi - y_lo) * 0.05).max(0.01);
    let x_lo = xs[0];
    let x_hi = if xs[xs.len() - 1] > x_lo { xs[xs.len() - 1] } else { x_lo + 1.0 };
    let frame = Frame {
        width: 720.0,
        height: 480.0,
        margin: 60.0,
        x_min: x_lo,
        x_max: x_hi,
        y_min: (y_lo - pad).max(0.0),
        y_max: (y_hi + pad).min(1.0),
    };
    let mut s = open(&frame, title, "labeled instances", "mean test accuracy");
    for (i, c) in curves.iter().enumerate() {
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.3},{py:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" data-label="{}"/>"#,
            pts.join(" "),
            escape(&c.label)
        );
    }
    s.push_str("</g>\n<g id=\"legend\">\n");
    for (i, c) in curves.iter().enumerate() {
        let y = frame.margin + 10.0 + 16.0 * i as f64;
        let x = frame.margin + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            x + 18.0,
            LINE_COLORS[i % LINE_COLORS.len()],
            x + 24.0,
            y + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame { width: 100.0, height: 50.0, margin: 10.0, x_min: -1.0, x_max: 3.0, y_min: 0.0, y_max: 2.0 };
        let (px, py) = f.map(1.0, 0.5);
        let (x, y) = f.unmap(px, py);
        assert!((x - 1.0).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
        assert_eq!(f.map(-1.0, 0.0), (10.0, 40.0));
    }

    #[test]
    fn palette_ends() {
        assert_eq!(level_color(0, 10), PALETTE[0]);
        assert_eq!(level_color(10, 10), PALETTE[10]);
        assert_eq!(level_color(3, 3), PALETTE[10]);
    }

    #[test]
    fn mismatched_curves() {
        let a = Curve { label: "a".into(), points: vec![(1.0, 0.5), (2.0, 0.6)] };
        let b = Curve { label: "b".into(), points: vec![(1.0, 0.5)] };
        assert!(curves_svg("t", &[a.clone(), b]).is_err());
        assert!(curves_svg("t", &[a]).is_ok());
    }
}
