//! Standalone SVG line charts. No external references, inline styling only,
//! coordinates rounded to two decimals so output is byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::NUM_TOKENS;
use crate::telemetry::Snapshot;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; `None` fits the data.
    pub y_range: Option<(f64, f64)>,
}

impl ChartSpec {
    /// A chart of rates on a fixed [0, 1] axis.
    pub fn rate(title: &str, x_label: &str, y_label: &str) -> Self {
        ChartSpec {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            y_range: Some((0.0, 1.0)),
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 && v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Plot rectangle inside an SVG canvas, with a data-to-pixel mapping.
struct Panel {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        self.left + (x - lo) / (hi - lo) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        self.top + self.height - (y - lo) / (hi - lo) * self.height
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str, x_ticks: &[f64]) {
        let bottom = self.top + self.height;
        let right = self.left + self.width;
        let _ = write!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#ffffff" stroke="#333333" stroke-width="1"/>"##,
            fmt2(self.left),
            fmt2(self.top),
            fmt2(self.width),
            fmt2(self.height)
        );
        for i in 0..=4 {
            let v = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / 4.0;
            let y = self.py(v);
            let _ = write!(
                svg,
                r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#dddddd" stroke-width="0.5"/><text x="{t}" y="{ty}" font-family="sans-serif" font-size="10" text-anchor="end">{label}</text>"##,
                l = fmt2(self.left),
                r = fmt2(right),
                y = fmt2(y),
                t = fmt2(self.left - 4.0),
                ty = fmt2(y + 3.0),
                label = tick_label(v)
            );
        }
        for &v in x_ticks {
            let x = self.px(v);
            let _ = write!(
                svg,
                r##"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="#333333" stroke-width="1"/><text x="{x}" y="{ty}" font-family="sans-serif" font-size="10" text-anchor="middle">{label}</text>"##,
                x = fmt2(x),
                b = fmt2(bottom),
                b2 = fmt2(bottom + 4.0),
                ty = fmt2(bottom + 15.0),
                label = tick_label(v)
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            fmt2(self.left + self.width / 2.0),
            fmt2(bottom + 30.0),
            escape(x_label)
        );
        let cx = self.left - 36.0;
        let cy = self.top + self.height / 2.0;
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 {x} {y})">{}</text>"#,
            escape(y_label),
            x = fmt2(cx),
            y = fmt2(cy)
        );
    }

    fn polyline(&self, svg: &mut String, points: &[(f64, f64)], color: &str, width: f64) {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", fmt2(self.px(*x)), fmt2(self.py(*y))))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{}" points="{}"/>"#,
            fmt2(width),
            coords.join(" ")
        );
    }
}

fn x_ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders one or more series on shared axes with a legend.
pub fn line_chart_svg(spec: &ChartSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Input("chart needs at least one series".into()));
    }
    if let Some(s) = series.iter().find(|s| s.points.len() < 2) {
        return Err(Error::Input(format!(
            "series `{}` needs at least two points",
            s.label
        )));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in all {
        x_lo = x_lo.min(*x);
        x_hi = x_hi.max(*x);
        y_lo = y_lo.min(*y);
        y_hi = y_hi.max(*y);
    }
    let (width, height) = (760.0, 420.0);
    let panel = Panel {
        left: 70.0,
        top: 40.0,
        width: 500.0,
        height: 320.0,
        x_range: padded(x_lo, x_hi),
        y_range: spec.y_range.unwrap_or_else(|| padded(y_lo, y_hi)),
    };

    let mut svg = header(width, height);
    let _ = write!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        fmt2(panel.left + panel.width / 2.0),
        escape(&spec.title)
    );
    panel.axes(
        &mut svg,
        &spec.x_label,
        &spec.y_label,
        &x_ticks(panel.x_range.0, panel.x_range.1),
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        panel.polyline(&mut svg, &s.points, color, 1.5);
        let ly = panel.top + 10.0 + 18.0 * i as f64;
        let lx = panel.left + panel.width + 20.0;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            fmt2(lx),
            fmt2(lx + 18.0),
            fmt2(lx + 24.0),
            fmt2(ly + 4.0),
            escape(&s.label),
            y = fmt2(ly)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn header(width: f64, height: f64) -> String {
    format!(
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}"><rect width="100%" height="100%" fill="#ffffff"/>"##,
        w = fmt2(width),
        h = fmt2(height)
    )
}

pub fn render_line_chart(spec: &ChartSpec, series: &[Series], path: &Path) -> Result<String> {
    let svg = line_chart_svg(spec, series)?;
    std::fs::write(path, &svg).map_err(|e| Error::io(path, e))?;
    Ok(svg)
}

/// Splits snapshots into four equal step ranges of a run of `total_steps`.
pub fn quarters(snapshots: &[Snapshot], total_steps: u64) -> [Vec<&Snapshot>; 4] {
    let mut out: [Vec<&Snapshot>; 4] = Default::default();
    let total = total_steps.max(1) as f64;
    for s in snapshots {
        let q = ((s.step as f64 / total) * 4.0).floor().clamp(0.0, 3.0) as usize;
        out[q].push(s);
    }
    out
}

/// Four panels, early to late; each overlays that quarter's distributions as
/// lines over the answers 1..=10.
pub fn distribution_quarters_svg(snapshots: &[Snapshot], total_steps: u64) -> Result<String> {
    if snapshots.len() < 4 {
        return Err(Error::Input(format!(
            "need at least 4 snapshots, got {}",
            snapshots.len()
        )));
    }
    let title = format!("Answer distribution for {}", snapshots[0].problem);
    let (width, height) = (1000.0, 330.0);
    let mut svg = header(width, height);
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        fmt2(width / 2.0),
        escape(&title)
    );
    let names = ["first", "second", "third", "fourth"];
    let ticks: Vec<f64> = (1..=NUM_TOKENS).map(|v| v as f64).collect();
    for (qi, quarter) in quarters(snapshots, total_steps).iter().enumerate() {
        let panel = Panel {
            left: 60.0 + 240.0 * qi as f64,
            top: 50.0,
            width: 190.0,
            height: 220.0,
            x_range: (1.0, NUM_TOKENS as f64),
            y_range: (0.0, 1.0),
        };
        let lo = total_steps * qi as u64 / 4;
        let hi = total_steps * (qi as u64 + 1) / 4;
        let _ = write!(
            svg,
            r#"<g><text x="{}" y="44" font-family="sans-serif" font-size="11" text-anchor="middle">{} quarter, steps {}-{} ({} lines)</text>"#,
            fmt2(panel.left + panel.width / 2.0),
            names[qi],
            lo,
            hi,
            quarter.len()
        );
        panel.axes(&mut svg, "answer", "probability", &ticks);
        let n = quarter.len().max(1);
        for (i, snap) in quarter.iter().enumerate() {
            let points: Vec<(f64, f64)> = snap
                .distribution
                .probs()
                .iter()
                .enumerate()
                .map(|(k, p)| ((k + 1) as f64, *p))
                .collect();
            // earlier lines lighter, later ones darker
            let shade = 200 - (160 * i / n) as u8;
            let color = format!("#{:02x}{:02x}ff", shade, shade);
            panel.polyline(&mut svg, &points, &color, 1.0);
        }
        svg.push_str("</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_distribution_quarters(
    snapshots: &[Snapshot],
    total_steps: u64,
    path: &Path,
) -> Result<String> {
    let svg = distribution_quarters_svg(snapshots, total_steps)?;
    std::fs::write(path, &svg).map_err(|e| Error::io(path, e))?;
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::AnswerDistribution;
    use crate::problem::{Number, Problem};

    fn ramp(n: usize, scale: f64) -> Vec<(f64, f64)> {
        (0..n).map(|i| (i as f64 * 500.0, scale * i as f64 / n as f64)).collect()
    }

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed XML")
    }

    #[test]
    fn one_polyline_per_series() {
        let spec = ChartSpec::rate("usage", "step", "rate");
        let svg = line_chart_svg(
            &spec,
            &[Series::new("a", ramp(100, 1.0)), Series::new("b <&>", ramp(100, 0.5))],
        )
        .unwrap();
        let doc = parse(&svg);
        let polylines = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count();
        assert_eq!(polylines, 2);
        assert!(!svg.contains("href"));
        assert!(svg.contains("b &lt;&amp;&gt;"));
    }

    #[test]
    fn empty_or_short_series_are_rejected() {
        let spec = ChartSpec::rate("t", "x", "y");
        assert!(line_chart_svg(&spec, &[]).is_err());
        assert!(line_chart_svg(&spec, &[Series::new("a", vec![(0.0, 0.0)])]).is_err());
    }

    #[test]
    fn rendering_is_byte_stable() {
        let spec = ChartSpec::rate("t", "x", "y");
        let s = [Series::new("a", ramp(10, 1.0))];
        assert_eq!(line_chart_svg(&spec, &s).unwrap(), line_chart_svg(&spec, &s).unwrap());
    }

    fn snaps(count: usize, total: u64) -> Vec<Snapshot> {
        (0..count)
            .map(|i| Snapshot {
                step: (i as u64 * total) / count as u64,
                problem: Problem::add(3, 4).unwrap(),
                occurrence: 10 * (i as u64 + 1),
                distribution: AnswerDistribution::one_hot(Number::new(7).unwrap()),
            })
            .collect()
    }

    #[test]
    fn quarters_partition_steps() {
        let s = snaps(40, 50_000);
        let q = quarters(&s, 50_000);
        assert_eq!(q.iter().map(Vec::len).collect::<Vec<_>>(), vec![10, 10, 10, 10]);
        let svg = distribution_quarters_svg(&s, 50_000).unwrap();
        let doc = parse(&svg);
        let groups: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("g")).collect();
        assert_eq!(groups.len(), 4);
        for g in groups {
            let lines = g.descendants().filter(|n| n.has_tag_name("polyline")).count();
            assert_eq!(lines, 10);
        }
    }

    #[test]
    fn too_few_snapshots_is_an_error() {
        assert!(distribution_quarters_svg(&snaps(3, 100), 100).is_err());
    }
}
