//! Minimal standalone SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("nothing to plot")]
    EmptyData,
    #[error("non-finite coordinate in plot data")]
    NonFinite,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What to draw: a scatter of points or a connected series.
#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    Points(&'a [(f64, f64)]),
    Series(&'a [(f64, f64)]),
}

impl PlotData<'_> {
    fn data(&self) -> &[(f64, f64)] {
        match self {
            PlotData::Points(d) | PlotData::Series(d) => d,
        }
    }
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo > 0.0 {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the plot as SVG text. Output depends only on the inputs.
pub fn render_svg(plot: PlotData<'_>, title: &str) -> Result<String, SvgError> {
    let data = plot.data();
    if data.is_empty() {
        return Err(SvgError::EmptyData);
    }
    if data.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(SvgError::NonFinite);
    }
    let (x0, x1) = range(data.iter().map(|p| p.0));
    let (y0, y1) = range(data.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    // axes along the bottom and left edges of the plot area
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/></g>"#
    );
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="10"><text x="{left}" y="{}" text-anchor="start">{x0:.4}</text><text x="{right}" y="{}" text-anchor="end">{x1:.4}</text><text x="{}" y="{bottom}" text-anchor="end">{y0:.4}</text><text x="{}" y="{}" text-anchor="end">{y1:.4}</text></g>"#,
        bottom + 14.0,
        bottom + 14.0,
        left - 4.0,
        left - 4.0,
        top + 8.0
    );
    match plot {
        PlotData::Points(_) => {
            let _ = writeln!(s, r#"<g fill="steelblue">"#);
            for &(x, y) in data {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, sx(x), sy(y));
            }
            let _ = writeln!(s, "</g>");
        }
        PlotData::Series(_) => {
            s.push_str(r#"<polyline fill="none" stroke="steelblue" stroke-width="1" points=""#);
            for (i, &(x, y)) in data.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{:.2},{:.2}", sx(x), sy(y));
            }
            s.push_str("\"/>\n");
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes [`render_svg`] output to `path`.
pub fn emit_svg(plot: PlotData<'_>, title: &str, path: &Path) -> Result<(), SvgError> {
    let text = render_svg(plot, title)?;
    std::fs::write(path, text).map_err(|source| SvgError::Io { path: path.display().to_string(), source })
}
