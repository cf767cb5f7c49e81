//! Plain SVG figures. Coordinates are printed with fixed precision so output
//! is byte-stable.

use std::fmt::Write;

use crate::covering::StripFamily;
use crate::domain::PolygonDecomposition;
use crate::error::Result;
use crate::map::PlanarMap;
use crate::mask::CompactSetMask;
use crate::Point;

const SIZE: f64 = 512.0;

struct Canvas {
    lo: Point,
    hi: Point,
    body: String,
}

impl Canvas {
    fn new(lo: Point, hi: Point) -> Self {
        Self { lo, hi, body: String::new() }
    }

    fn unit() -> Self {
        Self::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
    }

    /// Screen coordinates, y pointing down.
    fn xy(&self, p: Point) -> (f64, f64) {
        let sx = (p.x - self.lo.x) / (self.hi.x - self.lo.x) * SIZE;
        let sy = (self.hi.y - p.y) / (self.hi.y - self.lo.y) * SIZE;
        (sx, sy)
    }

    fn path(&mut self, pts: &[Point], closed: bool, style: &str) {
        if pts.is_empty() {
            return;
        }
        let mut d = String::new();
        for (k, &p) in pts.iter().enumerate() {
            let (x, y) = self.xy(p);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if k == 0 { "M" } else { "L" });
        }
        if closed {
            d.push('Z');
        }
        let _ = writeln!(self.body, r#"<path d="{}" {style}/>"#, d.trim_end());
    }

    fn mask(&mut self, mask: &CompactSetMask, style: &str) {
        for c in mask.cells() {
            let (a, b) = mask.cell_rect(c);
            self.path(&[a, Point::new(b.x, a.y), b, Point::new(a.x, b.y)], true, style);
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
             <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\" stroke=\"black\"/>\n{}</svg>\n",
            self.body
        )
    }
}

/// Mask cells with the strip bands `|y - f_i(x)| < δ` and `|x - g_j(y)| < δ`.
pub fn strips_svg(mask: &CompactSetMask, family: &StripFamily) -> String {
    let mut c = Canvas::unit();
    c.mask(mask, r##"fill="#444" stroke="none""##);
    let d = family.delta;
    for (graphs, horizontal) in [(&family.horizontal, true), (&family.vertical, false)] {
        let style = if horizontal {
            r##"fill="#1f77b4" fill-opacity="0.25" stroke="#1f77b4" stroke-width="0.5""##
        } else {
            r##"fill="#d62728" fill-opacity="0.25" stroke="#d62728" stroke-width="0.5""##
        };
        for g in graphs.iter() {
            let side = |s: f64| -> Vec<Point> {
                g.xs.iter()
                    .zip(&g.ys)
                    .map(|(&t, &v)| if horizontal { Point::new(t, v + s) } else { Point::new(v + s, t) })
                    .collect()
            };
            let mut band = side(d);
            band.extend(side(-d).into_iter().rev());
            c.path(&band, true, style);
        }
    }
    c.finish()
}

/// Images of `lines` horizontal and vertical grid lines of the domain.
pub fn deformed_grid_svg(map: &dyn PlanarMap, lines: usize, mask: Option<&CompactSetMask>) -> Result<String> {
    let (lo, hi) = map.domain().bounding_box().unwrap_or((Point::new(0.0, 0.0), Point::new(1.0, 1.0)));
    let mut c = Canvas::new(lo, hi);
    if let Some(m) = mask {
        let mut img = Vec::new();
        for cell in m.cells() {
            let (a, b) = m.cell_rect(cell);
            let corners = [a, Point::new(b.x, a.y), b, Point::new(a.x, b.y)];
            let mut q = Vec::new();
            for p in corners {
                q.push(map.eval(Point::new(lo.x + (hi.x - lo.x) * p.x, lo.y + (hi.y - lo.y) * p.y))?);
            }
            img.push(q);
        }
        for q in img {
            c.path(&q, true, r##"fill="#f2b134" stroke="none""##);
        }
    }
    let samples = 8 * lines;
    for k in 0..=lines {
        let s = k as f64 / lines as f64;
        let mut row = Vec::new();
        let mut col = Vec::new();
        for t in 0..=samples {
            let u = t as f64 / samples as f64;
            row.push(map.eval(Point::new(lo.x + (hi.x - lo.x) * u, lo.y + (hi.y - lo.y) * s))?);
            col.push(map.eval(Point::new(lo.x + (hi.x - lo.x) * s, lo.y + (hi.y - lo.y) * u))?);
        }
        c.path(&row, false, r#"fill="none" stroke="black" stroke-width="0.6""#);
        c.path(&col, false, r#"fill="none" stroke="black" stroke-width="0.6""#);
    }
    Ok(c.finish())
}

/// Triangles of a decomposition with the quadrilaterals covering them.
pub fn decomposition_svg(decomp: &PolygonDecomposition) -> String {
    let pts = decomp.polygon.outer.iter().map(|p| Point::new(p[0], p[1]));
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in pts {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = 0.05 * (hi.x - lo.x).max(hi.y - lo.y);
    let side = (hi.x - lo.x).max(hi.y - lo.y) + 2.0 * pad;
    let lo = Point::new(lo.x - pad, lo.y - pad);
    let mut c = Canvas::new(lo, Point::new(lo.x + side, lo.y + side));
    for q in decomp.quads() {
        c.path(&q.z, true, r##"fill="#2ca02c" fill-opacity="0.15" stroke="#2ca02c" stroke-width="0.8""##);
    }
    for t in &decomp.triangles {
        c.path(t, true, r#"fill="none" stroke="black" stroke-width="1""#);
    }
    c.finish()
}

/// The sets `M_i` of an iteration, later sets drawn darker.
pub fn mask_evolution_svg(masks: &[CompactSetMask]) -> String {
    let mut c = Canvas::unit();
    let n = masks.len().max(1);
    for (k, m) in masks.iter().enumerate() {
        let shade = 200 - (160 * k / n) as u32;
        c.mask(m, &format!(r#"fill="rgb({shade},{shade},255)" stroke="none""#));
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::cover_mask;
    use crate::map::{Identity, Region};
    use crate::mask::DyadicLevel;

    #[test]
    fn figures_are_well_formed_and_stable() {
        let l = DyadicLevel::new(4).unwrap();
        let m = CompactSetMask::from_cells(l, [(3, 4), (9, 2)]).unwrap();
        let fam = cover_mask(&m, 0.5).unwrap();
        let a = strips_svg(&m, &fam);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a, strips_svg(&m, &fam));
        let g = deformed_grid_svg(&Identity::on(Region::unit_square()), 4, Some(&m)).unwrap();
        assert_eq!(g.matches("<path").count(), 2 + 10);
        assert_eq!(mask_evolution_svg(&[m.clone(), m]).matches("<path").count(), 4);
    }
}
