//! Minimal hand-written SVG charts for reports.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 4] = ["#4472c4", "#ed7d31", "#70ad47", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

/// Linear map of `[lo, hi]` onto a pixel range, padded so points never sit on the frame.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = if hi > lo { (hi - lo) * 0.05 } else { 0.5 };
        Self {
            lo: lo - pad,
            hi: hi + pad,
            from,
            to,
        }
    }

    fn px(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn frame(s: &mut String, x_label: &str, y_label: &str, xa: Axis, ya: Axis) {
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN / 2.0, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = xa.lo + f * (xa.hi - xa.lo);
        let yv = ya.lo + f * (ya.hi - ya.lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#,
            xa.px(xv),
            bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            left - 6.0,
            ya.px(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

pub struct Scatter<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: &'a [(f64, f64)],
    /// Drawn as a connected line over the points.
    pub line: &'a [(f64, f64)],
    /// Circled in green.
    pub selected: Option<(f64, f64)>,
}

impl Scatter<'_> {
    pub fn render(&self) -> String {
        let mut s = header(self.title);
        let xa = Axis::fit(self.points.iter().chain(self.line).map(|p| p.0), MARGIN, WIDTH - MARGIN / 2.0);
        let ya = Axis::fit(self.points.iter().chain(self.line).map(|p| p.1), HEIGHT - MARGIN, MARGIN);
        frame(&mut s, self.x_label, self.y_label, xa, ya);
        for &(x, y) in self.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.6"/>"#,
                xa.px(x),
                ya.px(y),
                PALETTE[0]
            );
        }
        if !self.line.is_empty() {
            let pts: Vec<String> = self
                .line
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", xa.px(x), ya.px(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                pts.join(" "),
                PALETTE[1]
            );
        }
        if let Some((x, y)) = self.selected {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="9" fill="none" stroke="{}" stroke-width="2"/>"#,
                xa.px(x),
                ya.px(y),
                PALETTE[2]
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Grouped vertical bars: one group per category, one bar per series.
pub struct BarChart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub categories: &'a [String],
    pub series: &'a [(&'a str, &'a [f64])],
}

impl BarChart<'_> {
    pub fn render(&self) -> String {
        let mut s = header(self.title);
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN / 2.0, MARGIN, HEIGHT - MARGIN - 40.0);
        let max = self
            .series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(0.0, f64::max);
        let max = if max > 0.0 { max } else { 1.0 };
        let _ = writeln!(
            s,
            r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let v = max * k as f64 / 4.0;
            let y = bottom - (bottom - top) * k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (top + bottom) / 2.0,
            escape(self.y_label)
        );
        let n_cat = self.categories.len().max(1) as f64;
        let group = (right - left) / n_cat;
        let bar = group * 0.8 / self.series.len().max(1) as f64;
        for (c, name) in self.categories.iter().enumerate() {
            let gx = left + group * c as f64 + group * 0.1;
            for (j, (_, values)) in self.series.iter().enumerate() {
                let v = values.get(c).copied().unwrap_or(0.0).max(0.0);
                let h = (bottom - top) * v / max;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    gx + bar * j as f64,
                    bottom - h,
                    bar,
                    h,
                    PALETTE[j % PALETTE.len()]
                );
            }
            let cx = gx + group * 0.4;
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{0}" text-anchor="end" transform="rotate(-35 {cx:.1} {0})">{1}</text>"#,
                bottom + 14.0,
                escape(name)
            );
        }
        if self.series.len() > 1 {
            for (j, (label, _)) in self.series.iter().enumerate() {
                let y = top + 16.0 * j as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                    right - 120.0,
                    y - 9.0,
                    PALETTE[j % PALETTE.len()],
                    right - 105.0,
                    y,
                    escape(label)
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_well_formed() {
        let pts = [(0.8, 0.1), (0.7, 0.05)];
        let svg = Scatter {
            title: "a < b",
            x_label: "x",
            y_label: "y",
            points: &pts,
            line: &pts,
            selected: Some(pts[1]),
        }
        .render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn bars_per_series() {
        let cats = vec!["f1".to_string(), "f2".to_string()];
        let a = [0.5, 0.25];
        let b = [0.1, 0.9];
        let svg = BarChart {
            title: "t",
            y_label: "importance",
            categories: &cats,
            series: &[("base", &a), ("mitigated", &b)],
        }
        .render();
        // 4 bars plus 2 legend swatches and the background
        assert_eq!(svg.matches("<rect").count(), 7);
    }
}
