//! Minimal SVG writer: polylines in image coordinates, north up.

use std::fmt::Write as _;

/// A polyline broken into runs wherever a point is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub class: String,
    pub runs: Vec<Vec<(f64, f64)>>,
    pub closed: bool,
}

impl Path {
    /// Splits `pts` at `None` entries; runs of a single point are dropped.
    pub fn from_points(class: &str, pts: impl IntoIterator<Item = Option<(f64, f64)>>, closed: bool) -> Path {
        let mut runs = vec![Vec::new()];
        for p in pts {
            match p {
                Some(q) if q.0.is_finite() && q.1.is_finite() => runs.last_mut().expect("nonempty").push(q),
                _ => {
                    if !runs.last().expect("nonempty").is_empty() {
                        runs.push(Vec::new());
                    }
                }
            }
        }
        runs.retain(|r| r.len() > 1);
        Path {
            class: class.into(),
            runs,
            closed,
        }
    }

    fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Svg {
    title: String,
    paths: Vec<Path>,
    legend: Vec<String>,
}

const STYLE: &str = "path{fill:none;stroke-linejoin:round}\
.boundary{stroke:#000;stroke-width:2}\
.graticule{stroke:#999;stroke-width:0.6}\
.net-i{stroke:#b22;stroke-width:0.6}.net-j{stroke:#22b;stroke-width:0.6}\
.rim{stroke:#666;stroke-width:1;stroke-dasharray:4 3}\
text{font-family:sans-serif;fill:#222}";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

impl Svg {
    pub fn new(title: &str) -> Svg {
        Svg {
            title: title.into(),
            ..Svg::default()
        }
    }

    /// Adds a path. Paths with no drawable run are still emitted (empty `d`)
    /// so that every requested line has its element.
    pub fn add(&mut self, p: Path) {
        self.paths.push(p);
    }

    pub fn legend(&mut self, line: impl Into<String>) {
        self.legend.push(line.into());
    }

    fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.paths {
            for &(x, y) in p.runs.iter().flatten() {
                b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
        if !b.0.is_finite() {
            return (-1.0, 1.0, -1.0, 1.0);
        }
        b
    }

    /// Renders the document. Image `y` is negated so north is up, and the
    /// view box is the bounding box of all paths grown by 5% on each side.
    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bbox();
        let size = (x1 - x0).max(y1 - y0).max(1e-9);
        let (w, h) = ((x1 - x0).max(1e-3 * size), (y1 - y0).max(1e-3 * size));
        let (mx, my) = (0.05 * w, 0.05 * h);
        let (vx, vy, vw, vh) = (x0 - mx, -y1 - my, w + 2.0 * mx, h + 2.0 * my);
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vx:.8} {vy:.8} {vw:.8} {vh:.8}" width="800" height="{:.0}">"#,
            800.0 * vh / vw
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(s, "<style>{STYLE}</style>");
        let _ = writeln!(s, "<g>");
        for p in &self.paths {
            let mut d = String::new();
            for run in &p.runs {
                for (k, &(x, y)) in run.iter().enumerate() {
                    let _ = write!(d, "{}{:.8} {:.8} ", if k == 0 { 'M' } else { 'L' }, x, -y);
                }
                if p.closed {
                    d.push('Z');
                }
            }
            let _ = writeln!(
                s,
                r#"<path class="{}" vector-effect="non-scaling-stroke" d="{}"/>"#,
                escape(&p.class),
                d.trim_end()
            );
        }
        let _ = writeln!(s, "</g>");
        if !self.legend.is_empty() {
            let fs = 0.035 * vw.min(vh * 1.5);
            let _ = writeln!(s, r#"<g class="legend" font-size="{fs:.8}">"#);
            for (k, line) in self.legend.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.8}" y="{:.8}">{}</text>"#,
                    vx + 0.5 * fs,
                    vy + (k as f64 + 1.2) * 1.25 * fs,
                    escape(line)
                );
            }
            let _ = writeln!(s, "</g>");
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn path_count(&self, class: &str) -> usize {
        self.paths.iter().filter(|p| p.class == class).count()
    }

    pub fn has_drawable(&self) -> bool {
        self.paths.iter().any(|p| !p.is_empty())
    }
}
