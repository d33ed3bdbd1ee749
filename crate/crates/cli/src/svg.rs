//! Minimal self-contained SVG scatter/line plots (inline styling, no
//! external assets). Coordinates are formatted with fixed precision so
//! output bytes are reproducible.

use std::io;
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 56.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct HLine {
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub curves: Vec<Curve>,
    pub hlines: Vec<HLine>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

impl Plot {
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        for c in &self.curves {
            for &(x, y) in &c.points {
                xs.push(x);
                ys.push(y);
            }
        }
        for h in &self.hlines {
            ys.push(h.y);
        }
        let span = |v: &[f64]| -> (f64, f64) {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                return (0.0, 1.0);
            }
            if lo == hi {
                return (lo - 1.0, hi + 1.0);
            }
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        };
        (span(&xs), span(&ys))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let mut out = String::with_capacity(16 * 1024);
        out.push_str(&format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        ));
        out.push('\n');
        out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        out.push('\n');
        out.push_str(&format!(
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            fmt(WIDTH / 2.0),
            self.title
        ));
        out.push('\n');

        // frame
        out.push_str(&format!(
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444" stroke-width="1"/>"##,
            fmt(MARGIN_L),
            fmt(MARGIN_T),
            fmt(plot_w),
            fmt(plot_h)
        ));
        out.push('\n');

        // ticks
        for i in 0..=5 {
            let xt = x0 + (x1 - x0) * i as f64 / 5.0;
            let px = sx(xt);
            out.push_str(&format!(
                r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#444" stroke-width="1"/>"##,
                fmt(px),
                fmt(MARGIN_T + plot_h),
                fmt(MARGIN_T + plot_h + 5.0)
            ));
            out.push_str(&format!(
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                fmt(px),
                fmt(MARGIN_T + plot_h + 18.0),
                fmt_tick(xt)
            ));
            out.push('\n');
            let yt = y0 + (y1 - y0) * i as f64 / 5.0;
            let py = sy(yt);
            out.push_str(&format!(
                r##"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#444" stroke-width="1"/>"##,
                fmt(MARGIN_L - 5.0),
                fmt(MARGIN_L),
                fmt(py)
            ));
            out.push_str(&format!(
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                fmt(MARGIN_L - 8.0),
                fmt(py + 4.0),
                fmt_tick(yt)
            ));
            out.push('\n');
        }

        // axis labels
        out.push_str(&format!(
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            fmt(MARGIN_L + plot_w / 2.0),
            fmt(HEIGHT - 14.0),
            self.x_label
        ));
        out.push('\n');
        out.push_str(&format!(
            r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            fmt(MARGIN_T + plot_h / 2.0),
            fmt(MARGIN_T + plot_h / 2.0),
            self.y_label
        ));
        out.push('\n');

        // dashed horizontal rules
        for h in &self.hlines {
            let py = sy(h.y);
            out.push_str(&format!(
                r##"<line x1="{}" y1="{1}" x2="{2}" y2="{1}" stroke="#333" stroke-width="1.2" stroke-dasharray="6 4"/>"##,
                fmt(MARGIN_L),
                fmt(py),
                fmt(MARGIN_L + plot_w)
            ));
            out.push_str(&format!(
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                fmt(MARGIN_L + plot_w - 4.0),
                fmt(py - 4.0),
                h.label
            ));
            out.push('\n');
        }

        // scatter points
        for s in &self.series {
            for &(x, y) in &s.points {
                out.push_str(&format!(
                    r#"<circle cx="{}" cy="{}" r="3" fill="{}" fill-opacity="0.55"/>"#,
                    fmt(sx(x)),
                    fmt(sy(y)),
                    s.color
                ));
            }
            out.push('\n');
        }

        // curves
        for c in &self.curves {
            let pts: Vec<String> = c
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
                .collect();
            out.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2.2"/>"#,
                pts.join(" "),
                c.color
            ));
            out.push('\n');
        }

        // legend
        let mut entries: Vec<(&str, &str)> = self
            .series
            .iter()
            .map(|s| (s.name.as_str(), s.color.as_str()))
            .collect();
        for c in &self.curves {
            if !entries.iter().any(|(n, _)| *n == c.name) {
                entries.push((c.name.as_str(), c.color.as_str()));
            }
        }
        for (i, (name, color)) in entries.iter().enumerate() {
            let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
            out.push_str(&format!(
                r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/>"#,
                fmt(MARGIN_L + plot_w - 120.0),
                fmt(ly - 10.0),
                color
            ));
            out.push_str(&format!(
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
                fmt(MARGIN_L + plot_w - 103.0),
                fmt(ly),
                name
            ));
            out.push('\n');
        }

        out.push_str("</svg>\n");
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}

pub const FEMALE_COLOR: &str = "#d81b60";
pub const MALE_COLOR: &str = "#1e88e5";
