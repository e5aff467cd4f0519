//! Standalone SVG line charts with a linear x axis and a log10 y axis.
//!
//! Output depends only on the input series: coordinates are printed with a
//! fixed number of decimals and no timestamps are embedded.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub name: &'a str,
    /// `(x, y)` pairs; points with `y <= 0` or non-finite coordinates are
    /// left out.
    pub points: Vec<(f64, f64)>,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub footer: &'a str,
    pub series: Vec<Series<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round step for about `target` ticks over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let nice = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{v:.0}")
    } else {
        let decimals = (-step.log10().floor()) as usize;
        format!("{v:.decimals$}")
    }
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let kept: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .copied()
                    .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
                    .collect()
            })
            .collect();
        let all = kept.iter().flatten();
        let x_max = all.clone().map(|p| p.0).fold(0.0, f64::max);
        let x_min = all.clone().map(|p| p.0).fold(x_max, f64::min).min(0.0);
        let (x_min, x_max) = if x_max > x_min { (x_min, x_max) } else { (0.0, 1.0) };
        let ly: Vec<f64> = all.map(|p| p.1.log10()).collect();
        let (mut y_lo, mut y_hi) = match (ly.iter().copied().reduce(f64::min), ly.iter().copied().reduce(f64::max)) {
            (Some(lo), Some(hi)) => (lo.floor(), hi.ceil()),
            _ => (-1.0, 0.0),
        };
        if y_hi <= y_lo {
            y_hi = y_lo + 1.0;
        }
        if y_hi - y_lo > 40.0 {
            y_lo = y_hi - 40.0;
        }

        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * pw;
        let sy = |ly: f64| TOP + (y_hi - ly.max(y_lo)) / (y_hi - y_lo) * ph;

        let mut o = String::new();
        let w = &mut o;
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(self.title)
        );

        // grid and ticks
        let step = tick_step(x_max - x_min, 6.0);
        let mut k = (x_min / step).ceil();
        while k * step <= x_max + 1e-9 * step {
            let x = sx(k * step);
            let _ = writeln!(
                w,
                r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
                TOP + ph
            );
            let _ = writeln!(
                w,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 16.0,
                tick_label(k * step, step)
            );
            k += 1.0;
        }
        let decades = (y_hi - y_lo) as usize;
        let stride = decades.div_ceil(10).max(1);
        for e in (0..=decades).step_by(stride) {
            let v = y_lo + e as f64;
            let y = sy(v);
            let _ = writeln!(
                w,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{v:.0}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            w,
            r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            TOP + ph + 36.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(self.y_label)
        );

        for (idx, (s, pts)) in self.series.iter().zip(&kept).enumerate() {
            let colour = PALETTE[idx % PALETTE.len()];
            if !pts.is_empty() {
                let coords: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.log10())))
                    .collect();
                let _ = writeln!(
                    w,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                    coords.join(" "),
                    escape(s.name)
                );
            }
            let ly = TOP + 14.0 + 16.0 * idx as f64;
            let lx = LEFT + pw - 150.0;
            let _ = writeln!(
                w,
                r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0
            );
            let _ = writeln!(w, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(s.name));
        }
        let _ = writeln!(
            w,
            r##"<text x="{LEFT:.2}" y="{:.2}" font-size="11" fill="#444">{}</text>"##,
            HEIGHT - 14.0,
            escape(self.footer)
        );
        o.push_str("</svg>\n");
        o
    }
}
