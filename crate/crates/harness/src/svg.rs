//! Plain SVG figures of planar decompositions and paths.

use std::fmt::Write;

use whitney_core::paths::CubePath;
use whitney_core::{AxisBox, DyadicCube, Error, Result, Whitney};

const SIZE: f64 = 800.0;

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Coarsest cubes drawn; finer ones are omitted.
    pub max_cubes: usize,
    pub max_arrows: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { max_cubes: 20_000, max_arrows: 150 }
    }
}

struct Frame {
    view: AxisBox,
    scale: f64,
}

impl Frame {
    fn new(view: AxisBox) -> Self {
        let w = (view.hi[0] - view.lo[0]).max(view.hi[1] - view.lo[1]);
        Frame { scale: SIZE / w, view }
    }

    fn x(&self, v: f64) -> f64 {
        (v - self.view.lo[0]) * self.scale
    }

    // SVG y grows downwards
    fn y(&self, v: f64) -> f64 {
        (self.view.hi[1] - v) * self.scale
    }

    fn rect(&self, out: &mut String, b: &AxisBox, style: &str) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {style}/>"#,
            self.x(b.lo[0]),
            self.y(b.hi[1]),
            (b.hi[0] - b.lo[0]) * self.scale,
            (b.hi[1] - b.lo[1]) * self.scale
        );
    }

    fn dot(&self, out: &mut String, p: &[f64], r: f64, fill: &str) {
        let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="{r}" fill="{fill}"/>"#, self.x(p[0]), self.y(p[1]));
    }

    fn line(&self, out: &mut String, a: &[f64], b: &[f64], style: &str) {
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" {style}/>"#,
            self.x(a[0]),
            self.y(a[1]),
            self.x(b[0]),
            self.y(b[1])
        );
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    out.push_str(
        r##"<defs><marker id="arrow" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#c0392b"/></marker></defs>"##,
    );
    out.push('\n');
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
}

fn require_planar(n: usize) -> Result<()> {
    if n != 2 {
        return Err(Error::Invalid(format!("rendering needs n = 2, got n = {n}")));
    }
    Ok(())
}

/// Cubes as rectangles, sites as dots, anchors as arrows from cube centers.
pub fn render_decomposition(w: &Whitney, opts: &RenderOptions) -> Result<String> {
    require_planar(w.dim())?;
    let frame = Frame::new(w.domain_box());
    let mut out = String::new();
    header(&mut out);
    let mut drawn: Vec<(DyadicCube, u32)> = Vec::new();
    for (q, a) in w.cubes() {
        if drawn.len() >= opts.max_cubes {
            break;
        }
        drawn.push((q, a));
    }
    for (q, _) in &drawn {
        frame.rect(&mut out, &q.to_box(), r##"fill="#eef3fb" stroke="#34495e" stroke-width="0.4""##);
    }
    let stride = drawn.len().div_ceil(opts.max_arrows.max(1)).max(1);
    for (q, a) in drawn.iter().step_by(stride) {
        let c = q.center();
        frame.line(&mut out, &c, w.sites().point(*a as usize), r##"stroke="#c0392b" stroke-width="0.6" marker-end="url(#arrow)""##);
    }
    for p in w.sites().points() {
        frame.dot(&mut out, p, 3.0, "#111");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// The segment from `x` to `x_P` over the chain of cubes.
pub fn render_path(w: &Whitney, path: &CubePath) -> Result<String> {
    require_planar(w.dim())?;
    let mut lo = vec![f64::INFINITY; 2];
    let mut hi = vec![f64::NEG_INFINITY; 2];
    for q in &path.cubes {
        let b = q.to_box();
        for i in 0..2 {
            lo[i] = lo[i].min(b.lo[i]);
            hi[i] = hi[i].max(b.hi[i]);
        }
    }
    for i in 0..2 {
        lo[i] = lo[i].min(path.target[i]);
        hi[i] = hi[i].max(path.target[i]);
        let pad = 0.05 * (hi[i] - lo[i]).max(1e-12);
        lo[i] -= pad;
        hi[i] += pad;
    }
    let frame = Frame::new(AxisBox { lo, hi });
    let mut out = String::new();
    header(&mut out);
    for q in &path.cubes {
        frame.rect(&mut out, &q.to_box(), r##"fill="#fdf2e9" stroke="#a04000" stroke-width="0.8""##);
    }
    frame.line(&mut out, &path.origin, &path.target, r##"stroke="#1f618d" stroke-width="1.2""##);
    frame.dot(&mut out, &path.origin, 3.0, "#1f618d");
    frame.dot(&mut out, &path.target, 4.0, "#111");
    out.push_str("</svg>\n");
    Ok(out)
}
