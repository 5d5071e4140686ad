//! Minimal SVG writer for heatmaps and line plots.

use std::fmt::Write;

pub const GENERATOR: &str = concat!("nestagree ", env!("CARGO_PKG_VERSION"));

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg { body: String::new(), width, height }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#);
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            esc(s)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}" stroke-width="{width}"{dash}/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dash: Option<&str>) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}/>"#,
            p.join(" ")
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<!-- generator: {GENERATOR} -->\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Diverging colour for an accuracy: red at 0, white at 0.5, blue at 1.
pub fn accuracy_color(v: f64) -> String {
    if !v.is_finite() {
        return "#cccccc".into();
    }
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 0.5 {
        let t = v / 0.5;
        (255.0, 255.0 * t, 255.0 * t)
    } else {
        let t = (v - 0.5) / 0.5;
        (255.0 * (1.0 - t), 255.0 * (1.0 - t) + 80.0 * t, 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round().min(255.0) as u8, b.round() as u8)
}

/// Line colours for plots with several groups.
pub const PALETTE: [&str; 8] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Axis-aligned plot of several series over a shared x range.
pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_labels: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
    /// Optional horizontal guide (value, label).
    pub guide: Option<(f64, &'a str)>,
}

impl LinePlot<'_> {
    pub fn render(&self) -> String {
        let (w, h, left, top, right, bottom) = (720.0, 420.0, 60.0, 40.0, 170.0, 60.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let vals = self.series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
        let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if let Some((g, _)) = self.guide {
            lo = lo.min(g);
            hi = hi.max(g);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let n = self.x_labels.len().max(2);
        let x = |i: usize| left + pw * i as f64 / (n - 1) as f64;
        let y = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));
        let mut svg = Svg::new(w, h);
        svg.text(w / 2.0, 24.0, 14.0, "middle", self.title);
        svg.line(left, top + ph, left + pw, top + ph, "black", 1.0, false);
        svg.line(left, top, left, top + ph, "black", 1.0, false);
        for (i, l) in self.x_labels.iter().enumerate() {
            svg.text(x(i), top + ph + 16.0, 10.0, "middle", l);
        }
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            svg.text(left - 6.0, y(v) + 3.0, 10.0, "end", &format!("{v:.2}"));
        }
        if let Some((g, label)) = self.guide {
            svg.line(left, y(g), left + pw, y(g), "gray", 1.0, true);
            svg.text(left + pw - 4.0, y(g) - 4.0, 10.0, "end", label);
        }
        for (k, (name, v)) in self.series.iter().enumerate() {
            let pts: Vec<(f64, f64)> =
                v.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, &v)| (x(i), y(v))).collect();
            let dash = if k / PALETTE.len() % 2 == 1 { Some("4,3") } else { None };
            let color = PALETTE[k % PALETTE.len()];
            svg.polyline(&pts, color, 1.5, dash);
            let ly = top + 14.0 * k as f64;
            svg.line(w - right + 10.0, ly, w - right + 30.0, ly, color, 2.0, dash.is_some());
            svg.text(w - right + 34.0, ly + 4.0, 10.0, "start", name);
        }
        svg.finish()
    }
}

/// Trajectories in a plane, one polyline per series with a marker at its start.
pub struct XyPlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

impl XyPlot<'_> {
    pub fn render(&self) -> String {
        let (w, h, left, top, right, bottom) = (620.0, 520.0, 60.0, 40.0, 150.0, 60.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let pts = self.series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            (x0, x1, y0, y1) = (x0.min(x), x1.max(x), y0.min(y), y1.max(y));
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        if y1 - y0 < 1e-12 {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        let sx = |x: f64| left + pw * (x - x0) / (x1 - x0);
        let sy = |y: f64| top + ph * (1.0 - (y - y0) / (y1 - y0));
        let mut svg = Svg::new(w, h);
        svg.text(w / 2.0, 24.0, 14.0, "middle", self.title);
        svg.line(left, top + ph, left + pw, top + ph, "black", 1.0, false);
        svg.line(left, top, left, top + ph, "black", 1.0, false);
        svg.text(left + pw / 2.0, h - 20.0, 12.0, "middle", self.x_label);
        svg.text(12.0, top - 12.0, 12.0, "start", self.y_label);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            svg.text(sx(x0 + (x1 - x0) * f), top + ph + 16.0, 10.0, "middle", &format!("{:.2}", x0 + (x1 - x0) * f));
            svg.text(left - 6.0, sy(y0 + (y1 - y0) * f) + 3.0, 10.0, "end", &format!("{:.2}", y0 + (y1 - y0) * f));
        }
        for (k, (name, v)) in self.series.iter().enumerate() {
            let p: Vec<(f64, f64)> =
                v.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            let dash = if k / PALETTE.len() % 2 == 1 { Some("4,3") } else { None };
            let color = PALETTE[k % PALETTE.len()];
            svg.polyline(&p, color, 1.5, dash);
            if let Some(&(x, y)) = p.first() {
                svg.rect(x - 2.5, y - 2.5, 5.0, 5.0, color);
            }
            let ly = top + 14.0 * k as f64;
            svg.line(w - right + 10.0, ly, w - right + 30.0, ly, color, 2.0, dash.is_some());
            svg.text(w - right + 34.0, ly + 4.0, 10.0, "start", name);
        }
        svg.finish()
    }
}
