//! Standalone SVG scatter plots (formant plane, PCA plane).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64, String)>,
}

const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

#[derive(Debug, Clone, Copy)]
enum Marker {
    Circle,
    Square,
    Triangle,
    Diamond,
    Cross,
}

const MARKERS: [Marker; 5] = [Marker::Circle, Marker::Square, Marker::Triangle, Marker::Diamond, Marker::Cross];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn marker(out: &mut String, m: Marker, x: f64, y: f64, color: &str) {
    let r = 3.5;
    let _ = match m {
        Marker::Circle => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}" fill-opacity="0.7"/>"#),
        Marker::Square => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{color}" fill-opacity="0.7"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        Marker::Triangle => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}" fill-opacity="0.7"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        Marker::Diamond => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}" fill-opacity="0.7"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        Marker::Cross => writeln!(
            out,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        ),
    };
}

/// "Nice" tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    out
}

impl ScatterPlot {
    /// Distinct labels in legend order (sorted).
    pub fn legend(&self) -> Vec<String> {
        let mut l: Vec<String> = self.points.iter().map(|p| p.2.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 480.0);
        let (ml, mr, mt, mb) = (70.0, 110.0, 40.0, 55.0);
        let fin = self.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in fin {
            x0 = x0.min(p.0);
            x1 = x1.max(p.0);
            y0 = y0.min(p.1);
            y1 = y1.max(p.1);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |a: f64, b: f64| {
            let d = if b > a { (b - a) * 0.05 } else { 1.0 };
            (a - d, b + d)
        };
        let ((x0, x1), (y0, y1)) = (pad(x0, x1), pad(y0, y1));
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
        let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, esc(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - ml - mr,
            h - mt - mb
        );
        for t in ticks(x0, x1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"#,
                sx(t),
                h - mb,
                h - mb + 5.0,
                h - mb + 18.0,
                t
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{2:.2}" x2="{1}" y2="{2:.2}" stroke="black"/><text x="{3}" y="{4:.2}" text-anchor="end">{5}</text>"#,
                ml - 5.0,
                ml,
                sy(t),
                ml - 8.0,
                sy(t) + 4.0,
                t
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ml + (w - ml - mr) / 2.0,
            h - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            mt + (h - mt - mb) / 2.0,
            esc(&self.y_label)
        );

        let legend = self.legend();
        let style: BTreeMap<&str, (Marker, &str)> = legend
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), (MARKERS[i % MARKERS.len()], COLORS[i % COLORS.len()])))
            .collect();
        let _ = writeln!(s, r#"<g class="points">"#);
        for (x, y, l) in &self.points {
            if x.is_finite() && y.is_finite() {
                let (m, c) = style[l.as_str()];
                marker(&mut s, m, sx(*x), sy(*y), c);
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g class="legend">"#);
        for (i, l) in legend.iter().enumerate() {
            let y = mt + 12.0 + 20.0 * i as f64;
            let (m, c) = style[l.as_str()];
            marker(&mut s, m, w - mr + 18.0, y, c);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - mr + 30.0, y + 4.0, esc(l));
        }
        let _ = writeln!(s, "</g>");
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_svg())
    }
}
