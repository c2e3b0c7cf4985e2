//! Small deterministic SVG renderers for the standard result figures:
//! line charts with optional confidence whiskers (sweeps, NMSE-vs-ratio
//! curves) and interval charts (per-plane correlation summaries).
//!
//! No external plotting stack: the charts are plain text assembled from
//! the data, so identical inputs render byte-identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 64.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// One plotted point; `band` is an optional `(low, high)` whisker in y.
#[derive(Clone, Copy, Debug)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub band: Option<(f64, f64)>,
}

/// One labelled line.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<PlotPoint>,
}

/// One category of an interval chart.
#[derive(Clone, Debug)]
pub struct IntervalItem {
    pub label: String,
    pub value: f64,
    pub band: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Compact tick labels: engineering suffixes for large magnitudes,
/// trimmed decimals otherwise.
fn format_tick(v: f64) -> String {
    let a = v.abs();
    let (scaled, suffix) = if a >= 1e9 {
        (v / 1e9, "G")
    } else if a >= 1e6 {
        (v / 1e6, "M")
    } else if a >= 1e3 {
        (v / 1e3, "k")
    } else {
        (v, "")
    };
    let mut s = format!("{scaled:.3}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    if s == "-0" {
        s = "0".into();
    }
    format!("{s}{suffix}")
}

/// Legend-friendly frequency label ("20MHz", "180MHz").
pub fn label_hz(hz: f64) -> String {
    format!("{}Hz", format_tick(hz))
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn collect<I: Iterator<Item = f64>>(values: I) -> Option<Range> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo <= hi).then_some(Range { lo, hi })
    }

    fn padded(mut self, frac: f64) -> Range {
        let span = self.hi - self.lo;
        let pad = if span > 0.0 {
            span * frac
        } else {
            self.lo.abs().max(1.0) * frac
        };
        self.lo -= pad;
        self.hi += pad;
        self
    }

    fn to_px(&self, v: f64, px_lo: f64, px_hi: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        px_lo + t * (px_hi - px_lo)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 20 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn y_ticks(s: &mut String, range: &Range) {
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    for i in 0..=4 {
        let v = range.lo + (range.hi - range.lo) * i as f64 / 4.0;
        let py = range.to_px(v, y0, y1);
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT,
            MARGIN_LEFT - 6.0,
            py + 4.0,
            format_tick(v)
        );
    }
}

fn legend(s: &mut String, labels: &[&str]) {
    let lx = WIDTH - MARGIN_RIGHT + 14.0;
    for (i, label) in labels.iter().enumerate() {
        let ly = MARGIN_TOP + 10.0 + i as f64 * 18.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            "<line x1=\"{lx}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(label)
        );
    }
}

/// Renders labelled series as polylines with point markers and optional
/// confidence whiskers. Non-finite y values break the line.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.x));
    let ys = series.iter().flat_map(|s| {
        s.points.iter().flat_map(|p| {
            let (lo, hi) = p.band.unwrap_or((p.y, p.y));
            [p.y, lo, hi]
        })
    });
    let x_range = Range::collect(xs)
        .unwrap_or(Range { lo: 0.0, hi: 1.0 })
        .padded(0.05);
    let y_range = Range::collect(ys)
        .unwrap_or(Range { lo: 0.0, hi: 1.0 })
        .padded(0.08);

    let px0 = MARGIN_LEFT;
    let px1 = WIDTH - MARGIN_RIGHT;
    let py0 = HEIGHT - MARGIN_BOTTOM;
    let py1 = MARGIN_TOP;

    let mut s = header(title);
    y_ticks(&mut s, &y_range);

    // X ticks at the distinct data positions when few, else 5 even steps.
    let mut xt: Vec<f64> = series
        .iter()
        .flat_map(|sr| sr.points.iter().map(|p| p.x))
        .filter(|v| v.is_finite())
        .collect();
    xt.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xt.dedup();
    if xt.len() > 8 {
        xt = (0..=4)
            .map(|i| x_range.lo + (x_range.hi - x_range.lo) * i as f64 / 4.0)
            .collect();
    }
    for &v in &xt {
        let px = x_range.to_px(v, px0, px1);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.1}\" y1=\"{py0}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\
             <text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            py0 + 5.0,
            py0 + 18.0,
            format_tick(v)
        );
    }

    for (si, sr) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    out,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for p in &sr.points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                flush(&mut segment, &mut s);
                continue;
            }
            let px = x_range.to_px(p.x, px0, px1);
            let py = y_range.to_px(p.y, py0, py1);
            segment.push(format!("{px:.1},{py:.1}"));
            if let Some((lo, hi)) = p.band {
                if lo.is_finite() && hi.is_finite() {
                    let plo = y_range.to_px(lo, py0, py1);
                    let phi = y_range.to_px(hi, py0, py1);
                    let _ = writeln!(
                        s,
                        "<line x1=\"{px:.1}\" y1=\"{plo:.1}\" x2=\"{px:.1}\" y2=\"{phi:.1}\" \
                         stroke=\"{color}\" stroke-width=\"1\"/>\
                         <line x1=\"{:.1}\" y1=\"{plo:.1}\" x2=\"{:.1}\" y2=\"{plo:.1}\" \
                         stroke=\"{color}\"/>\
                         <line x1=\"{:.1}\" y1=\"{phi:.1}\" x2=\"{:.1}\" y2=\"{phi:.1}\" \
                         stroke=\"{color}\"/>",
                        px - 4.0,
                        px + 4.0,
                        px - 4.0,
                        px + 4.0,
                    );
                }
            }
            let _ = writeln!(
                s,
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"{color}\"/>"
            );
        }
        flush(&mut segment, &mut s);
    }

    axes(&mut s, x_label, y_label);
    let labels: Vec<&str> = series.iter().map(|sr| sr.label.as_str()).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Renders categories as dots with optional interval whiskers, one column
/// per item.
pub fn interval_chart(title: &str, y_label: &str, items: &[IntervalItem]) -> String {
    let ys = items.iter().flat_map(|it| {
        let (lo, hi) = it.band.unwrap_or((it.value, it.value));
        [it.value, lo, hi]
    });
    let y_range = Range::collect(ys)
        .unwrap_or(Range { lo: 0.0, hi: 1.0 })
        .padded(0.08);

    let px0 = MARGIN_LEFT;
    let px1 = WIDTH - MARGIN_RIGHT;
    let py0 = HEIGHT - MARGIN_BOTTOM;
    let py1 = MARGIN_TOP;

    let mut s = header(title);
    y_ticks(&mut s, &y_range);

    let n = items.len().max(1) as f64;
    for (i, it) in items.iter().enumerate() {
        let px = px0 + (px1 - px0) * (i as f64 + 0.5) / n;
        let color = PALETTE[i % PALETTE.len()];
        if let Some((lo, hi)) = it.band {
            if lo.is_finite() && hi.is_finite() {
                let plo = y_range.to_px(lo, py0, py1);
                let phi = y_range.to_px(hi, py0, py1);
                let _ = writeln!(
                    s,
                    "<line x1=\"{px:.1}\" y1=\"{plo:.1}\" x2=\"{px:.1}\" y2=\"{phi:.1}\" \
                     stroke=\"{color}\" stroke-width=\"1.5\"/>\
                     <line x1=\"{:.1}\" y1=\"{plo:.1}\" x2=\"{:.1}\" y2=\"{plo:.1}\" \
                     stroke=\"{color}\"/>\
                     <line x1=\"{:.1}\" y1=\"{phi:.1}\" x2=\"{:.1}\" y2=\"{phi:.1}\" \
                     stroke=\"{color}\"/>",
                    px - 6.0,
                    px + 6.0,
                    px - 6.0,
                    px + 6.0,
                );
            }
        }
        if it.value.is_finite() {
            let py = y_range.to_px(it.value, py0, py1);
            let _ = writeln!(
                s,
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"4\" fill=\"{color}\"/>"
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            py0 + 18.0,
            escape(&it.label)
        );
    }

    axes(&mut s, "", y_label);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_labels_use_engineering_suffixes() {
        assert_eq!(format_tick(180e6), "180M");
        assert_eq!(format_tick(5.3e9), "5.3G");
        assert_eq!(format_tick(20_000.0), "20k");
        assert_eq!(format_tick(0.125), "0.125");
        assert_eq!(format_tick(0.0), "0");
        assert_eq!(format_tick(-12.5), "-12.5");
    }

    #[test]
    fn line_chart_renders_every_series_and_escapes_labels() {
        let series = vec![
            Series {
                label: "a<b".into(),
                points: vec![
                    PlotPoint { x: 1.0, y: 0.5, band: Some((0.4, 0.6)) },
                    PlotPoint { x: 2.0, y: 0.7, band: None },
                ],
            },
            Series {
                label: "plain".into(),
                points: vec![PlotPoint { x: 1.0, y: 0.2, band: None }],
            },
        ];
        let svg = line_chart("demo", "x", "y", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("plain"));
        assert!(svg.contains("polyline"));
        // Deterministic output.
        assert_eq!(svg, line_chart("demo", "x", "y", &series));
    }

    #[test]
    fn non_finite_points_are_skipped_not_rendered() {
        let series = vec![Series {
            label: "s".into(),
            points: vec![
                PlotPoint { x: 1.0, y: f64::NEG_INFINITY, band: None },
                PlotPoint { x: 2.0, y: 1.0, band: None },
            ],
        }];
        let svg = line_chart("t", "x", "y", &series);
        assert!(!svg.contains("inf"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn interval_chart_places_one_column_per_item() {
        let items = vec![
            IntervalItem { label: "magnitude".into(), value: 0.73, band: Some((0.41, 0.92)) },
            IntervalItem { label: "real".into(), value: 0.03, band: None },
        ];
        let svg = interval_chart("planes", "corr", &items);
        assert!(svg.contains("magnitude"));
        assert!(svg.contains("real"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
