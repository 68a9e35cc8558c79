//! Minimal native SVG emission: line charts and iso-level contour plots as
//! polylines with axes and tick labels. No plotting dependency; plots are
//! artifacts of record, rendered deterministically from the data.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 64.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_extents(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (x, y) in points {
            if x.is_finite() {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
            }
            if y.is_finite() {
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
        if !x_min.is_finite() || x_min == x_max {
            x_min -= 0.5;
            x_max = x_min + 1.0;
        }
        if !y_min.is_finite() || y_min == y_max {
            y_min -= 0.5;
            y_max = y_min + 1.0;
        }
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT
            + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn axes(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    // frame box
    out.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    ));
    let ticks = 5usize;
    for i in 0..=ticks {
        let f = i as f64 / ticks as f64;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let sx = frame.sx(xv);
        let sy = frame.sy(yv);
        out.push_str(&format!(
            "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_BOTTOM,
            HEIGHT - MARGIN_BOTTOM + 6.0
        ));
        out.push_str(&format!(
            "<text x=\"{sx:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 20.0,
            tick_label(xv)
        ));
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{sy:.1}\" x2=\"{:.1}\" y2=\"{sy:.1}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 6.0,
            MARGIN_LEFT
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 9.0,
            sy + 4.0,
            tick_label(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        escape(y_label)
    ));
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, dashed: bool) {
    if points.is_empty() {
        return;
    }
    let coords: Vec<String> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", frame.sx(*x), frame.sy(*y)))
        .collect();
    let dash = if dashed {
        " stroke-dasharray=\"7,4\""
    } else {
        ""
    };
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash}/>\n",
        coords.join(" ")
    ));
}

/// Line chart of one or more series with a simple legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::from_extents(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    axes(&mut out, &frame, title, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        polyline(&mut out, &frame, &s.points, color, s.dashed);
        let ly = MARGIN_TOP + 18.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"{}/>\n",
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 34.0,
            if s.dashed { " stroke-dasharray=\"7,4\"" } else { "" }
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT + 40.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Iso-level to draw, optionally highlighted (the stabilisation threshold).
pub struct ContourLevel {
    pub value: f64,
    pub label: String,
    pub highlight: bool,
}

/// Contour plot of a scalar table `values[i][j]` sampled at (xs[i], ys[j]),
/// via marching squares with linear interpolation along cell edges.
pub fn contour_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
    levels: &[ContourLevel],
) -> String {
    let frame = Frame::from_extents(xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))));
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    axes(&mut out, &frame, title, x_label, y_label);
    for (li, level) in levels.iter().enumerate() {
        let color = if level.highlight {
            "#d62728"
        } else {
            SERIES_COLORS[li % SERIES_COLORS.len()]
        };
        let dash = if level.highlight {
            " stroke-dasharray=\"3,4\""
        } else {
            ""
        };
        for segment in marching_squares(xs, ys, values, level.value) {
            out.push_str(&format!(
                "<polyline points=\"{:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{}\"{dash}/>\n",
                frame.sx(segment.0 .0),
                frame.sy(segment.0 .1),
                frame.sx(segment.1 .0),
                frame.sy(segment.1 .1),
                if level.highlight { 2.2 } else { 1.4 },
            ));
        }
        let ly = MARGIN_TOP + 18.0 + 18.0 * li as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 34.0,
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT + 40.0,
            ly + 4.0,
            escape(&level.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

type Segment = ((f64, f64), (f64, f64));

/// Marching squares: iso-line segments of `values` at `level`, cells visited
/// in row-major order so output is deterministic.
fn marching_squares(xs: &[f64], ys: &[f64], values: &[Vec<f64>], level: f64) -> Vec<Segment> {
    let mut segments = Vec::new();
    if xs.len() < 2 || ys.len() < 2 {
        return segments;
    }
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            // corner order: 0 = (i,j), 1 = (i+1,j), 2 = (i+1,j+1), 3 = (i,j+1)
            let corner_vals = [
                values[i][j],
                values[i + 1][j],
                values[i + 1][j + 1],
                values[i][j + 1],
            ];
            let corner_pts = [
                (xs[i], ys[j]),
                (xs[i + 1], ys[j]),
                (xs[i + 1], ys[j + 1]),
                (xs[i], ys[j + 1]),
            ];
            let mut case = 0usize;
            for (b, v) in corner_vals.iter().enumerate() {
                if *v > level {
                    case |= 1 << b;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // edges: 0 = bottom (0-1), 1 = right (1-2), 2 = top (2-3), 3 = left (3-0)
            let edge_point = |edge: usize| -> (f64, f64) {
                let (a, b) = match edge {
                    0 => (0, 1),
                    1 => (1, 2),
                    2 => (2, 3),
                    _ => (3, 0),
                };
                let (va, vb) = (corner_vals[a], corner_vals[b]);
                let t = if (vb - va).abs() < 1e-300 {
                    0.5
                } else {
                    ((level - va) / (vb - va)).clamp(0.0, 1.0)
                };
                let (pa, pb) = (corner_pts[a], corner_pts[b]);
                (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
            };
            let edge_pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                5 => &[(3, 2), (0, 1)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                10 => &[(3, 0), (1, 2)],
                _ => &[],
            };
            for (ea, eb) in edge_pairs {
                segments.push((edge_point(*ea), edge_point(*eb)));
            }
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny well-formedness check: tags balance and attributes are quoted.
    pub(crate) fn assert_well_formed_xml(text: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            let end = rest.find('>').expect("unterminated tag");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("unmatched </{name}>"));
                assert_eq!(open, name.trim(), "mismatched closing tag");
            } else if tag.ends_with('/') {
                // self-closing
            } else {
                let name = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
            // attribute quotes must be balanced inside the tag
            assert!(
                tag.matches('"').count().is_multiple_of(2),
                "unbalanced quotes in <{tag}>"
            );
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn line_plot_is_well_formed() {
        let series = vec![
            Series {
                label: "log ||z||^2".into(),
                points: (0..50).map(|i| (i as f64 * 0.02, -(i as f64))).collect(),
                dashed: false,
            },
            Series {
                label: "reference slope".into(),
                points: vec![(0.0, 0.0), (1.0, -40.0)],
                dashed: true,
            },
        ];
        let svg = line_plot("decay", "t", "log ||z||^2", &series);
        assert_well_formed_xml(&svg);
        assert!(svg.contains("polyline"));
    }

    #[test]
    fn contour_extracts_circle_like_level() {
        // values = x² + y² on a grid; the level 1 contour must produce
        // segments near the unit circle.
        let xs: Vec<f64> = (0..21).map(|i| -2.0 + i as f64 * 0.2).collect();
        let ys = xs.clone();
        let values: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| ys.iter().map(|y| x * x + y * y).collect())
            .collect();
        let segs = marching_squares(&xs, &ys, &values, 1.0);
        assert!(!segs.is_empty());
        for (a, b) in &segs {
            for p in [a, b] {
                let r = (p.0 * p.0 + p.1 * p.1).sqrt();
                assert!((r - 1.0).abs() < 0.15, "segment point off level: r = {r}");
            }
        }
        let svg = contour_plot(
            "scan",
            "M",
            "lambda",
            &xs,
            &ys,
            &values,
            &[ContourLevel {
                value: 1.0,
                label: "C*".into(),
                highlight: true,
            }],
        );
        assert_well_formed_xml(&svg);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn constant_field_produces_no_contours() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 1.0];
        let values = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(marching_squares(&xs, &ys, &values, 5.0).is_empty());
    }
}
