//! Static SVG line charts. Output depends only on the data, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{PpmError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// Shaded region between two curves sharing x values.
#[derive(Debug, Clone)]
pub struct Band {
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub opacity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn line(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.into(), points, dashed: false });
        self
    }

    pub fn dashed(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.into(), points, dashed: true });
        self
    }

    pub fn band(mut self, x: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, opacity: f64) -> Self {
        self.bands.push(Band { x, lower, upper, opacity });
        self
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    fn tx(&self, v: f64) -> f64 {
        if self.log_x { v.log10() } else { v }
    }

    fn ty(&self, v: f64) -> f64 {
        if self.log_y { v.log10() } else { v }
    }

    fn extent(&self) -> Option<(f64, f64, f64, f64)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(self.tx(x));
                ys.push(self.ty(y));
            }
        }
        for b in &self.bands {
            xs.extend(b.x.iter().map(|&x| self.tx(x)));
            ys.extend(b.lower.iter().chain(&b.upper).map(|&y| self.ty(y)));
        }
        let finite = |v: &Vec<f64>| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
        let (xs, ys) = (finite(&xs), finite(&ys));
        if xs.is_empty() || ys.is_empty() {
            return None;
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) }
        };
        let (x0, x1) = span(&xs);
        let (y0, y1) = span(&ys);
        let pad = 0.05 * (y1 - y0);
        Some((x0, x1, y0 - pad, y1 + pad))
    }

    pub fn to_svg(&self) -> String {
        let (l, r, t, b) = MARGIN;
        let pw = WIDTH - l - r;
        let ph = HEIGHT - t - b;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, esc(&self.title));
        let Some((x0, x1, y0, y1)) = self.extent() else {
            s.push_str("</svg>\n");
            return s;
        };
        let px = |x: f64| l + (self.tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| t + ph - (self.ty(y) - y0) / (y1 - y0) * ph;

        let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let gx = l + pw * i as f64 / 4.0;
            let gy = t + ph - ph * i as f64 / 4.0;
            let lx = if self.log_x { 10f64.powf(fx) } else { fx };
            let ly = if self.log_y { 10f64.powf(fy) } else { fy };
            let _ = writeln!(s, r##"<line x1="{gx:.2}" y1="{:.2}" x2="{gx:.2}" y2="{:.2}" stroke="#888"/>"##, t + ph, t + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, t + ph + 18.0, tick(lx));
            let _ = writeln!(s, r##"<line x1="{:.2}" y1="{gy:.2}" x2="{l}" y2="{gy:.2}" stroke="#888"/>"##, l - 5.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, gy + 4.0, tick(ly));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, l + pw / 2.0, HEIGHT - 10.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            t + ph / 2.0,
            t + ph / 2.0,
            esc(&self.y_label)
        );

        for band in &self.bands {
            let mut pts: Vec<String> = band.x.iter().zip(&band.upper).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            pts.extend(band.x.iter().zip(&band.lower).rev().map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))));
            let _ = writeln!(s, r#"<polygon points="{}" fill="{}" fill-opacity="{}" stroke="none"/>"#, pts.join(" "), PALETTE[0], band.opacity);
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| self.tx(*x).is_finite() && self.ty(*y).is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
            let ly = t + 16.0 + 16.0 * i as f64;
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, l + 10.0, l + 30.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, l + 36.0, ly + 4.0, esc(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_svg()).map_err(|e| PpmError::io(path, e))
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_lines_bands_and_escapes() {
        let chart = LineChart::new("a < b", "x", "y")
            .line("mean", vec![(0.0, 1.0), (1.0, 2.0)])
            .band(vec![0.0, 1.0], vec![0.5, 1.5], vec![1.5, 2.5], 0.2);
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg, chart.to_svg());
    }

    #[test]
    fn empty_chart_is_still_valid() {
        let svg = LineChart::new("empty", "x", "y").to_svg();
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
