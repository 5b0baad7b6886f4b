//! Static 800x600 SVG plots of a two-dimensional profile.
//!
//! The plot area carries `data-x-min`, `data-x-max`, `data-y-min` and
//! `data-y-max` attributes so pixel coordinates can be mapped back to pu.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

#[derive(Clone, Debug, Default)]
pub struct ProfilePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Boundary polyline; `None` breaks the line.
    pub boundary: Vec<Option<(f64, f64)>>,
    /// Closed outline of the ellipsoid cross-section.
    pub ellipse: Vec<(f64, f64)>,
    pub forecast: (f64, f64),
    pub scatter: Vec<(f64, f64)>,
    pub manifest_id: String,
}

/// Axis window in data units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let px = LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT);
        let py = HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM);
        (px, py)
    }

    pub fn from_pixel(&self, px: f64, py: f64) -> (f64, f64) {
        let x = self.x_min + (px - LEFT) / (WIDTH - LEFT - RIGHT) * (self.x_max - self.x_min);
        let y = self.y_min + (HEIGHT - BOTTOM - py) / (HEIGHT - TOP - BOTTOM) * (self.y_max - self.y_min);
        (x, y)
    }
}

fn window(plot: &ProfilePlot) -> Window {
    let pts = plot
        .boundary
        .iter()
        .flatten()
        .chain(&plot.ellipse)
        .chain(&plot.scatter)
        .chain(std::iter::once(&plot.forecast));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| {
        let span = (b - a).max(1e-6);
        (a - 0.05 * span, b + 0.05 * span)
    };
    let (x_min, x_max) = pad(x0, x1);
    let (y_min, y_max) = pad(y0, y1);
    Window { x_min, x_max, y_min, y_max }
}

/// Round tick step giving roughly `target` intervals.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ticks(a: f64, b: f64) -> Vec<f64> {
    let s = tick_step(b - a, 6.0);
    let mut t = (a / s).ceil() * s;
    let mut out = Vec::new();
    while t <= b + 1e-12 {
        out.push(if t.abs() < 1e-12 * s.max(1.0) { 0.0 } else { t });
        t += s;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn points(w: &Window, pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|&(x, y)| {
            let (px, py) = w.to_pixel(x, y);
            format!("{px:.3},{py:.3}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render(plot: &ProfilePlot) -> String {
    let w = window(plot);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-manifest="{}">"#,
        escape(&plot.manifest_id)
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g id="plot-area" data-x-min="{:?}" data-x-max="{:?}" data-y-min="{:?}" data-y-max="{:?}">"#,
        w.x_min, w.x_max, w.y_min, w.y_max
    );
    let (ax0, ay0) = w.to_pixel(w.x_min, w.y_min);
    let (ax1, ay1) = w.to_pixel(w.x_max, w.y_max);
    let _ = writeln!(
        s,
        r#"<rect x="{ax0:.3}" y="{ay1:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        ax1 - ax0,
        ay0 - ay1
    );
    for t in ticks(w.x_min, w.x_max) {
        let (px, _) = w.to_pixel(t, w.y_min);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.3}" y1="{ay0:.3}" x2="{px:.3}" y2="{:.3}" stroke="black"/><text x="{px:.3}" y="{:.3}" font-size="12" text-anchor="middle">{}</text>"#,
            ay0 + 5.0,
            ay0 + 20.0,
            fmt_tick(t)
        );
    }
    for t in ticks(w.y_min, w.y_max) {
        let (_, py) = w.to_pixel(w.x_min, t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{py:.3}" x2="{ax0:.3}" y2="{py:.3}" stroke="black"/><text x="{:.3}" y="{:.3}" font-size="12" text-anchor="end">{}</text>"#,
            ax0 - 5.0,
            ax0 - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    if !plot.scatter.is_empty() {
        let _ = writeln!(s, r#"<g id="scenarios" fill="red" fill-opacity="0.5">"#);
        for &(x, y) in &plot.scatter {
            let (px, py) = w.to_pixel(x, y);
            let _ = writeln!(s, r#"<circle cx="{px:.3}" cy="{py:.3}" r="1.5"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    if !plot.ellipse.is_empty() {
        let _ = writeln!(
            s,
            r#"<polygon id="eus" points="{}" fill="green" fill-opacity="0.15" stroke="green" stroke-width="1.5"/>"#,
            points(&w, &plot.ellipse)
        );
    }
    let mut segment: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    let mut flush = |seg: &mut Vec<(f64, f64)>, s: &mut String| {
        if !seg.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline id="boundary-{k}" class="boundary" points="{}" fill="none" stroke="blue" stroke-width="2"/>"#,
                points(&w, seg)
            );
            k += 1;
            seg.clear();
        }
    };
    for p in &plot.boundary {
        match p {
            Some(p) => segment.push(*p),
            None => flush(&mut segment, &mut s),
        }
    }
    flush(&mut segment, &mut s);
    let (fx, fy) = w.to_pixel(plot.forecast.0, plot.forecast.1);
    let _ = writeln!(s, r#"<circle id="forecast" cx="{fx:.3}" cy="{fy:.3}" r="4" fill="black"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">{} (pu)</text>"#,
        (ax0 + ax1) / 2.0,
        HEIGHT - 20.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.3}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.3})">{} (pu)</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(&plot.y_label)
    );
    let _ = writeln!(s, r#"<text x="{:.3}" y="25" font-size="15" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&plot.title));
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Reads the data window back from a rendered plot.
pub fn parse_window(svg: &str) -> Option<Window> {
    let attr = |name: &str| -> Option<f64> {
        let key = format!("{name}=\"");
        let i = svg.find(&key)? + key.len();
        let j = svg[i..].find('"')? + i;
        svg[i..j].parse().ok()
    };
    Some(Window { x_min: attr("data-x-min")?, x_max: attr("data-x-max")?, y_min: attr("data-y-min")?, y_max: attr("data-y-max")? })
}

/// Pixel coordinates of every boundary polyline vertex, in document order.
pub fn boundary_pixels(svg: &str) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for line in svg.lines().filter(|l| l.contains("class=\"boundary\"")) {
        if let Some(i) = line.find("points=\"") {
            let rest = &line[i + 8..];
            let body = &rest[..rest.find('"').unwrap_or(rest.len())];
            for pair in body.split_whitespace() {
                if let Some((x, y)) = pair.split_once(',') {
                    if let (Ok(x), Ok(y)) = (x.parse(), y.parse()) {
                        out.push((x, y));
                    }
                }
            }
        }
    }
    out
}
