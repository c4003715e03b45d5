//! Minimal static SVG renderer: line plots with optional segment bands.
//! Plot data always ships alongside as CSV; the SVG is a convenience view.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Draw markers instead of a connected line (scatter).
    pub scatter: bool,
}

/// Background band marking one segment along the x axis.
pub struct Band {
    pub x0: f64,
    pub x1: f64,
    pub color: String,
}

pub struct LinePlot {
    pub title: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    pub width: u32,
    pub height: u32,
}

impl LinePlot {
    pub fn new(title: impl Into<String>) -> Self {
        LinePlot {
            title: title.into(),
            series: Vec::new(),
            bands: Vec::new(),
            width: 900,
            height: 420,
        }
    }

    pub fn render_to(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        self.render(&mut w)
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            x0 = 0.0;
            x1 = 1.0;
            y0 = 0.0;
            y1 = 1.0;
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    fn render(&self, w: &mut impl Write) -> Result<()> {
        const MARGIN: f64 = 50.0;
        let (vw, vh) = (self.width as f64, self.height as f64);
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (vw - 2.0 * MARGIN);
        let py = |y: f64| vh - MARGIN - (y - y0) / (y1 - y0) * (vh - 2.0 * MARGIN);

        writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {vw} {vh}">"#,
            self.width, self.height
        )?;
        writeln!(w, r#"<rect width="{vw}" height="{vh}" fill="white"/>"#)?;

        for band in &self.bands {
            let (bx0, bx1) = (px(band.x0.max(x0)), px(band.x1.min(x1)));
            if bx1 > bx0 {
                writeln!(
                    w,
                    r#"<rect x="{bx0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.25"/>"#,
                    py(y1),
                    bx1 - bx0,
                    py(y0) - py(y1),
                    band.color
                )?;
            }
        }

        // axes
        writeln!(
            w,
            r#"<line x1="{m}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/>"#,
            m = MARGIN,
            b = py(y0),
            r = vw - MARGIN
        )?;
        writeln!(
            w,
            r#"<line x1="{m}" y1="{t:.2}" x2="{m}" y2="{b:.2}" stroke="black"/>"#,
            m = MARGIN,
            t = py(y1),
            b = py(y0)
        )?;
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let xv = x0 + frac * (x1 - x0);
            let yv = y0 + frac * (y1 - y0);
            writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{:.3}</text>"#,
                px(xv),
                vh - MARGIN + 16.0,
                xv
            )?;
            writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{:.3}</text>"#,
                MARGIN - 6.0,
                py(yv) + 4.0,
                yv
            )?;
        }

        for s in &self.series {
            if s.scatter {
                for &(x, y) in &s.points {
                    writeln!(
                        w,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{}"/>"#,
                        px(x),
                        py(y),
                        s.color
                    )?;
                }
            } else {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                writeln!(
                    w,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    pts.join(" "),
                    s.color
                )?;
            }
        }

        writeln!(
            w,
            r#"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
            vw / 2.0,
            xml_escape(&self.title)
        )?;
        let mut legend_y = 40.0;
        for s in &self.series {
            writeln!(
                w,
                r#"<rect x="{:.2}" y="{legend_y:.2}" width="12" height="4" fill="{}"/>"#,
                vw - MARGIN - 140.0,
                s.color
            )?;
            writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                vw - MARGIN - 122.0,
                legend_y + 5.0,
                xml_escape(&s.label)
            )?;
            legend_y += 16.0;
        }
        writeln!(w, "</svg>")?;
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Color cycle for segment bands.
pub fn band_color(i: usize) -> &'static str {
    const COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
    COLORS[i % COLORS.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg_with_bands_and_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let mut plot = LinePlot::new("demo");
        plot.series.push(Series {
            label: "truth".into(),
            points: (0..50).map(|i| (i as f64 * 0.1, (i as f64 * 0.3).sin())).collect(),
            color: "#333333".into(),
            scatter: false,
        });
        plot.series.push(Series {
            label: "pred".into(),
            points: vec![(0.0, 0.0), (1.0, 0.5)],
            color: "#c44e52".into(),
            scatter: true,
        });
        plot.bands.push(Band { x0: 0.0, x1: 2.0, color: band_color(0).into() });
        plot.bands.push(Band { x0: 2.0, x1: 4.9, color: band_color(1).into() });
        plot.render_to(&path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("circle"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_data_does_not_divide_by_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.svg");
        let mut plot = LinePlot::new("flat");
        plot.series.push(Series {
            label: "const".into(),
            points: vec![(1.0, 2.0), (1.0, 2.0)],
            color: "#000".into(),
            scatter: false,
        });
        plot.render_to(&path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(!svg.contains("NaN"));
    }
}
