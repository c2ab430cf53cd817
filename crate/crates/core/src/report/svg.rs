//! Self-contained SVG output with fixed-precision coordinates.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Two-decimal label; never prints `-0.00`.
pub fn format_2dp(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Diverging blue-white-red color for `v` clamped to [-1, 1].
pub fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (lo, hi): ((f64, f64, f64), (f64, f64, f64)) = if t < 0.0 {
        ((255.0, 255.0, 255.0), (33.0, 102.0, 172.0))
    } else {
        ((255.0, 255.0, 255.0), (178.0, 24.0, 43.0))
    };
    let a = t.abs();
    let ch = |l: f64, h: f64| (l + (h - l) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(lo.0, hi.0), ch(lo.1, hi.1), ch(lo.2, hi.2))
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
}

/// Square heatmap; `None` cells are drawn gray and labeled `n/a`.
pub fn heatmap(title: &str, labels: &[String], values: &[Vec<Option<f64>>]) -> String {
    let n = labels.len();
    let cell = 48.0;
    let margin_left = 16.0 + 7.0 * labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
    let margin_top = 40.0;
    let margin_bottom = 24.0 + 7.0 * labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
    let legend = 90.0;
    let width = margin_left + cell * n as f64 + legend;
    let height = margin_top + cell * n as f64 + margin_bottom;

    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        width / 2.0,
        escape(title)
    );
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let x = margin_left + cell * j as f64;
            let y = margin_top + cell * i as f64;
            let (fill, text, ink) = match v {
                Some(v) => (
                    diverging_color(*v),
                    format_2dp(*v),
                    if v.abs() > 0.6 { "#ffffff" } else { "#000000" },
                ),
                None => ("#cccccc".to_string(), "n/a".to_string(), "#000000"),
            };
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{fill}\" stroke=\"#ffffff\"/>"
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" fill=\"{ink}\">{text}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            margin_left - 6.0,
            margin_top + cell * i as f64 + cell / 2.0 + 4.0,
            escape(l)
        );
        let cx = margin_left + cell * i as f64 + cell / 2.0;
        let cy = margin_top + cell * n as f64 + 8.0;
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{cy:.2}\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-60 {cx:.2} {cy:.2})\">{}</text>",
            escape(l)
        );
    }
    // Color scale legend, fixed to [-1, 1].
    let lx = margin_left + cell * n as f64 + 24.0;
    let steps = 20;
    let lh = (cell * n as f64).max(120.0) / steps as f64;
    for s in 0..steps {
        let v = 1.0 - 2.0 * (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>",
            margin_top + lh * s as f64,
            lh + 0.5,
            diverging_color(v)
        );
    }
    for (v, frac) in [(1.0, 0.0), (0.0, 0.5), (-1.0, 1.0)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>",
            lx + 20.0,
            margin_top + lh * steps as f64 * frac + 4.0,
            format_2dp(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One named series of `(x, y)` points; drawn in ascending x order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Maps data coordinates to pixels for [`line_chart`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

const PLOT_LEFT: f64 = 64.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_W: f64 = 480.0;
const PLOT_H: f64 = 300.0;

impl Frame {
    pub fn fit(series: &[Series]) -> Self {
        let pts = series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        if y1 == y0 {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        let pad = (y1 - y0) * 0.05;
        Self {
            x_min: x0,
            x_max: x1,
            y_min: y0 - pad,
            y_max: y1 + pad,
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        PLOT_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * PLOT_W
    }

    pub fn py(&self, y: f64) -> f64 {
        PLOT_TOP + (self.y_max - y) / (self.y_max - self.y_min) * PLOT_H
    }

    /// The `points` attribute of a series' polyline.
    pub fn polyline_points(&self, points: &[(f64, f64)]) -> String {
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series);
    let legend_h = 18.0 * series.len() as f64;
    let width = PLOT_LEFT + PLOT_W + 24.0;
    let height = PLOT_TOP + PLOT_H + 56.0 + legend_h;
    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        PLOT_LEFT + PLOT_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "<rect x=\"{PLOT_LEFT:.2}\" y=\"{PLOT_TOP:.2}\" width=\"{PLOT_W:.2}\" height=\"{PLOT_H:.2}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            frame.px(xv),
            PLOT_TOP + PLOT_H + 14.0,
            format_2dp(xv)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            PLOT_LEFT - 4.0,
            frame.py(yv) + 3.0,
            format_2dp(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        PLOT_LEFT + PLOT_W / 2.0,
        PLOT_TOP + PLOT_H + 32.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{0:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2})\">{1}</text>",
        PLOT_TOP + PLOT_H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<polyline data-series=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            escape(&s.label),
            frame.polyline_points(&s.points)
        );
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(x, y) in &sorted {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                frame.px(x),
                frame.py(y)
            );
        }
        let ly = PLOT_TOP + PLOT_H + 50.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{PLOT_LEFT:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            PLOT_LEFT + 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            PLOT_LEFT + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// `points="..."` attribute of every polyline, in document order.
pub fn polylines(svg: &str) -> Vec<String> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| {
            let start = l.find(" points=\"")? + 9;
            let end = start + l[start..].find('"')?;
            Some(l[start..end].to_string())
        })
        .collect()
}
