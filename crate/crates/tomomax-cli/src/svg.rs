//! Minimal SVG emission: lines, circles, polylines, text. No plotting
//! dependency; the CSV outputs are the authoritative data and these files
//! are the figure layer on top.

use std::fmt::Write as _;

pub struct Canvas {
    width: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
}

impl Canvas {
    /// A canvas mapping the data rectangle onto `width x height` pixels
    /// (y axis pointing up).
    pub fn new(width: f64, height: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            width,
            height,
            x_range,
            y_range,
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.height - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.height
    }

    pub fn circle(&mut self, cx: f64, cy: f64, radius_data: f64, stroke: &str, width: f64) {
        let r = radius_data / (self.x_range.1 - self.x_range.0) * self.width;
        let _ = writeln!(
            self.body,
            r#"  <circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            self.px(cx),
            self.py(cy),
            r
        );
    }

    pub fn dot(&mut self, cx: f64, cy: f64, r_px: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"  <circle cx="{:.3}" cy="{:.3}" r="{r_px}" fill="{fill}"/>"#,
            self.px(cx),
            self.py(cy)
        );
    }

    pub fn polyline(&mut self, points: &[[f64; 2]], stroke: &str, width: f64) {
        let mut coords = String::new();
        for p in points {
            let _ = write!(coords, "{:.3},{:.3} ", self.px(p[0]), self.py(p[1]));
        }
        let _ = writeln!(
            self.body,
            r#"  <polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.trim_end()
        );
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        self.polyline(&[a, b], stroke, width);
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"  <text x="{:.3}" y="{:.3}" font-size="{size}" font-family="sans-serif">{escaped}</text>"#,
            self.px(x),
            self.py(y)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}
