//! Transport of the unit-square construction to quadrilateral pieces and
//! assembly into one map on a polygon.

use std::sync::Arc;

use rayon::prelude::*;

use super::polygon::PolygonDecomposition;
use super::quad::{BilinearQuadMap, ConvexQuad};
use crate::boundary::BoundaryCorrectedMap;
use crate::error::{Error, Result};
use crate::map::{check_domain, Conjugated, Identity, MapKind, PlanarMap, Region, DOMAIN_TOL};
use crate::mask::{Cell, CompactSetMask, DyadicLevel, MAX_LEVEL};
use crate::{Mat2, Point, Vec2};

/// A dyadic mask on the square `origin + size·[0,1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramedMask {
    pub origin: Point,
    pub size: f64,
    pub mask: CompactSetMask,
}

impl FramedMask {
    pub fn new(origin: Point, size: f64, mask: CompactSetMask) -> Self {
        Self { origin, size, mask }
    }

    /// Cells whose centers satisfy `pred`.
    pub fn from_fn(origin: Point, size: f64, level: DyadicLevel, pred: impl Fn(Point) -> bool) -> Self {
        let mut mask = CompactSetMask::empty(level);
        let n = level.side();
        for j in 0..n {
            for i in 0..n {
                let c = mask.cell_center((i, j));
                if pred(origin + c.coords * size) {
                    mask.insert((i, j));
                }
            }
        }
        Self { origin, size, mask }
    }

    pub fn measure(&self) -> f64 {
        self.mask.measure() * self.size * self.size
    }

    pub fn cell_rect(&self, c: Cell) -> (Point, Point) {
        let (a, b) = self.mask.cell_rect(c);
        (self.origin + a.coords * self.size, self.origin + b.coords * self.size)
    }

    pub fn contains_point(&self, p: Point) -> bool {
        self.mask.contains_point(Point::from((p - self.origin) / self.size))
    }
}

/// Separating-axis test for positive-area overlap of a convex polygon and
/// an axis-aligned rectangle.
fn overlaps(poly: &[Point], lo: Point, hi: Point) -> bool {
    let tol = 1e-12 * (hi.x - lo.x).max(hi.y - lo.y);
    let rect = [lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    let mut axes = vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
    for k in 0..poly.len() {
        let e = poly[(k + 1) % poly.len()] - poly[k];
        axes.push(Vec2::new(-e.y, e.x));
    }
    axes.iter().all(|ax| {
        let proj = |ps: &[Point]| {
            ps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                let v = ax.dot(&p.coords);
                (a.min(v), b.max(v))
            })
        };
        let (a0, a1) = proj(poly);
        let (b0, b1) = proj(&rect);
        a1.min(b1) - a0.max(b0) > tol * ax.norm()
    })
}

/// Chart cells at `level` whose image overlaps some mask cell.
/// Bilinear images of axis-parallel cells are convex quadrilaterals.
pub fn pull_back_mask(chart: &BilinearQuadMap, m: &FramedMask, level: DyadicLevel) -> CompactSetMask {
    let n = level.side();
    let frame_n = m.mask.level().side() as f64;
    let frame_side = m.mask.level().side() as i64;
    let cells: Vec<Cell> = (0..n * n)
        .into_par_iter()
        .filter_map(|k| {
            let (i, j) = (k % n, k / n);
            let probe = CompactSetMask::empty(level);
            let (a, b) = probe.cell_rect((i, j));
            let img: Vec<Point> = [a, Point::new(b.x, a.y), b, Point::new(a.x, b.y)]
                .iter()
                .map(|&u| chart.eval(u).unwrap())
                .collect();
            let lo = img.iter().fold(img[0], |s, p| Point::new(s.x.min(p.x), s.y.min(p.y)));
            let hi = img.iter().fold(img[0], |s, p| Point::new(s.x.max(p.x), s.y.max(p.y)));
            let idx = |v: f64| ((v * frame_n).floor() as i64).clamp(0, frame_side - 1) as u32;
            let (u0, u1) = ((lo - m.origin) / m.size, (hi - m.origin) / m.size);
            if u1.x < 0.0 || u1.y < 0.0 || u0.x > 1.0 || u0.y > 1.0 {
                return None;
            }
            for fj in idx(u0.y)..=idx(u1.y) {
                for fi in idx(u0.x)..=idx(u1.x) {
                    if m.mask.contains_cell((fi, fj)) {
                        let (rl, rh) = m.cell_rect((fi, fj));
                        if overlaps(&img, rl, rh) {
                            return Some((i, j));
                        }
                    }
                }
            }
            None
        })
        .collect();
    CompactSetMask::from_cells(level, cells).expect("cells in range")
}

/// `max(σ_max, 1/σ_min)` of `∇ψ` over a 64×64 grid and the corners.
pub fn chart_bilipschitz(chart: &BilinearQuadMap) -> f64 {
    let n = 64;
    let mut pts: Vec<Point> = (0..n * n)
        .map(|k| Point::new(((k % n) as f64 + 0.5) / n as f64, ((k / n) as f64 + 0.5) / n as f64))
        .collect();
    pts.extend([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)]);
    pts.iter()
        .map(|&u| {
            let sv = chart.jacobian(u).unwrap().singular_values();
            let (mx, mn) = (sv.max(), sv.min());
            mx.max(1.0 / mn)
        })
        .fold(1.0, f64::max)
}

/// One piece of a conjugated construction.
#[derive(Clone, Debug)]
pub struct ConjugatedPiece {
    pub quad: ConvexQuad,
    pub map: Arc<dyn PlanarMap>,
    /// Mask in chart coordinates.
    pub pulled: CompactSetMask,
    pub chart_lipschitz: f64,
    /// Guaranteed lower bound of `det ∇ψ(φ̃(u)) / det ∇ψ(u)`.
    pub distortion_ratio: f64,
}

/// `ψ ∘ φ̃ ∘ ψ⁻¹` with `φ̃` the boundary-corrected map for the pulled-back
/// mask at `2τ`. Since `det ∇ψ` is affine, `det ∇φ ≥ (1+2τ)·r` on the mask
/// with `r` the bound above; the piece is rejected unless `r ≥ (1+τ)/(1+2τ)`.
pub fn conjugate_stretch(chart: &BilinearQuadMap, mask: &FramedMask, tau: f64) -> Result<ConjugatedPiece> {
    let quad = *chart.quad();
    let lip = chart_bilipschitz(chart);
    let smax = (0..4)
        .map(|k| chart.jacobian(quad_corner(k)).unwrap().norm())
        .fold(0.0, f64::max);
    let extra = (smax / mask.size).log2().ceil().max(0.0) as u32 + 1;
    let level = DyadicLevel::new((mask.mask.level().get() + extra).clamp(2, 10.min(MAX_LEVEL)))?;
    let pulled = pull_back_mask(chart, mask, level);
    if pulled.is_empty() {
        return Ok(ConjugatedPiece {
            quad,
            map: Arc::new(Identity::on(quad.region())),
            pulled,
            chart_lipschitz: lip,
            distortion_ratio: 1.0,
        });
    }
    let inner = BoundaryCorrectedMap::build(&pulled, 2.0 * tau)?;
    let disp = inner.displacement_bound() / 2.0;
    let r = 1.0 - chart.det_lipschitz() * disp / chart.min_det();
    let need = (1.0 + tau) / (1.0 + 2.0 * tau);
    if r < need {
        return Err(Error::DistortionTooLarge(format!(
            "determinant ratio of the chart only bounded below by {r}, need {need}"
        )));
    }
    let map = Conjugated { chart: Arc::new(chart.clone()), inner: Arc::new(inner.on_unit_square()) };
    Ok(ConjugatedPiece { quad, map: Arc::new(map), pulled, chart_lipschitz: lip, distortion_ratio: r })
}

fn quad_corner(k: usize) -> Point {
    [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)][k]
}

/// Map defined piecewise on quadrilaterals that agree (as the identity) on
/// shared edges.
#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    pieces: Vec<(ConvexQuad, Arc<dyn PlanarMap>)>,
    bbox: Region,
}

impl PiecewiseMap {
    pub fn new(pieces: Vec<(ConvexQuad, Arc<dyn PlanarMap>)>) -> Self {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (q, _) in &pieces {
            for z in q.z {
                lo = Point::new(lo.x.min(z.x), lo.y.min(z.y));
                hi = Point::new(hi.x.max(z.x), hi.y.max(z.y));
            }
        }
        Self { pieces, bbox: Region::Rect { min: lo, max: hi } }
    }

    pub fn pieces(&self) -> &[(ConvexQuad, Arc<dyn PlanarMap>)] {
        &self.pieces
    }

    /// The piece containing `p`, preferring the one where `p` is deepest.
    fn locate(&self, p: Point) -> Option<&(ConvexQuad, Arc<dyn PlanarMap>)> {
        self.pieces
            .iter()
            .filter(|(q, _)| q.contains(p, DOMAIN_TOL))
            .max_by(|a, b| a.0.dist_to_boundary(p).total_cmp(&b.0.dist_to_boundary(p)))
    }
}

impl PlanarMap for PiecewiseMap {
    fn kind(&self) -> MapKind {
        MapKind::Piecewise
    }
    fn domain(&self) -> Region {
        self.bbox
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.bbox, p)?;
        let (_, m) = self.locate(p).ok_or(Error::PointOutsideDomain(p.x, p.y))?;
        m.eval(p)
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.bbox, p)?;
        let (q, m) = self.locate(p).ok_or(Error::PointOutsideDomain(p.x, p.y))?;
        if q.dist_to_boundary(p) < crate::map::KINK_TOL && m.kind() != MapKind::Identity {
            return Err(Error::KinkLineSingularity(p.x, p.y));
        }
        m.jacobian(p)
    }
    fn near_kink(&self, p: Point, margin: f64) -> bool {
        match self.locate(p) {
            None => false,
            Some((q, m)) => q.dist_to_boundary(p) < margin || m.near_kink(p, margin),
        }
    }
}

/// Conjugated pieces for every quadrilateral of a decomposition.
pub fn assemble(decomp: &PolygonDecomposition, mask: &FramedMask, tau: f64) -> Result<(PiecewiseMap, Vec<ConjugatedPiece>)> {
    let pieces = decomp
        .pieces
        .par_iter()
        .map(|chart| conjugate_stretch(chart, mask, tau))
        .collect::<Result<Vec<_>>>()?;
    let map = PiecewiseMap::new(pieces.iter().map(|p| (p.quad, p.map.clone())).collect());
    Ok((map, pieces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::boundary_report;
    use approx::assert_abs_diff_eq;

    fn unit_chart() -> BilinearQuadMap {
        BilinearQuadMap::new(
            ConvexQuad::new([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)])
                .unwrap(),
        )
    }

    #[test]
    fn empty_mask_gives_identity() {
        let fm = FramedMask::new(Point::origin(), 1.0, CompactSetMask::empty(DyadicLevel::new(4).unwrap()));
        let piece = conjugate_stretch(&unit_chart(), &fm, 0.1).unwrap();
        assert_eq!(piece.map.kind(), MapKind::Identity);
    }

    #[test]
    fn unit_chart_pulls_back_exactly() {
        let l = DyadicLevel::new(5).unwrap();
        let m = CompactSetMask::from_cells(l, [(3, 4), (20, 20)]).unwrap();
        let fm = FramedMask::new(Point::origin(), 1.0, m.clone());
        let pulled = pull_back_mask(&unit_chart(), &fm, l);
        assert_eq!(pulled, m);
    }

    #[test]
    fn identity_chart_reduces_to_boundary_map() {
        let l = DyadicLevel::new(7).unwrap();
        let m = CompactSetMask::from_cells(l, [(60, 60), (61, 60)]).unwrap();
        let fm = FramedMask::new(Point::origin(), 1.0, m);
        let piece = conjugate_stretch(&unit_chart(), &fm, 0.05).unwrap();
        let direct = BoundaryCorrectedMap::build(&piece.pulled, 0.1).unwrap();
        let r = boundary_report(&direct, &piece.pulled, 64);
        assert!(r.min_det_on_mask >= 1.2 - 1e-9);
        let direct = direct.on_unit_square();
        for k in 0..50 {
            let p = Point::new(0.013 + 0.019 * k as f64, 0.47 + 0.001 * k as f64);
            assert_abs_diff_eq!(piece.map.eval(p).unwrap(), direct.eval(p).unwrap(), epsilon = 1e-14);
        }
    }
}
