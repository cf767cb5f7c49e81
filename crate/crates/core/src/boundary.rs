//! Boundary correction on `[-1, 1]²`: a scaled stretch on the central square
//! `S = (-1+s, 1-s)²`, `s = √|M|`, glued to the identity on `∂[-1,1]²`
//! through four quadrilaterals.
//!
//! In the left quadrilateral, with `c = -1 + s`, `t = c y / x` and
//! `h(t) = φ₂(-1+s, t)` the trace of the central map,
//!
//! ```text
//! φ₁ = -1 + (1+2τ)(1+x)
//! φ₂ = (1-s+x)/(x s) · y + (1+x)/s · h(t)
//! ```
//!
//! The other three are conjugates by the reflections `(x,y) ↦ (-x,y)`,
//! `(x,y) ↦ (y,x)` and `(x,y) ↦ (-y,-x)`, each an involution.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{check_domain, Affine, Conjugated, MapKind, PlanarMap, Region, KINK_TOL};
use crate::mask::{CompactSetMask, DyadicLevel, MAX_LEVEL};
use crate::stretch::{stretch_mask, Edge, StretchMap};
use crate::{Mat2, Point, Vec2};

/// `(1 - s(1+2τ)) / (1 - s)`.
pub fn scale_factor(measure_native: f64, tau: f64) -> f64 {
    let s = measure_native.sqrt();
    (1.0 - s * (1.0 + 2.0 * tau)) / (1.0 - s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    Central,
    Left,
    Right,
    Down,
    Up,
}

impl Piece {
    pub const QUADS: [Piece; 4] = [Piece::Left, Piece::Right, Piece::Down, Piece::Up];

    /// The reflection taking this quadrilateral onto the left one.
    fn reflect(self, p: Point) -> Point {
        match self {
            Piece::Central | Piece::Left => p,
            Piece::Right => Point::new(-p.x, p.y),
            Piece::Down => Point::new(p.y, p.x),
            Piece::Up => Point::new(-p.y, -p.x),
        }
    }

    fn reflect_matrix(self) -> Mat2 {
        match self {
            Piece::Central | Piece::Left => Mat2::identity(),
            Piece::Right => Mat2::new(-1.0, 0.0, 0.0, 1.0),
            Piece::Down => Mat2::new(0.0, 1.0, 1.0, 0.0),
            Piece::Up => Mat2::new(0.0, -1.0, -1.0, 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryCorrectedMap {
    tau: f64,
    s: f64,
    scale: f64,
    measure_native: f64,
    /// Stretch on the unit square, conjugated onto `S`; `None` for empty masks.
    inner: Option<StretchMap>,
    inner_mask: CompactSetMask,
}

/// Cells of `M ∩ S`, rescaled so that `S` becomes the unit square, at `level`.
/// Every rescaled cell is covered by the raster cells it touches.
pub fn rasterize_into_subsquare(mask: &CompactSetMask, s: f64, level: DyadicLevel) -> CompactSetMask {
    let mut out = CompactSetMask::empty(level);
    let n = level.side() as f64;
    let side = level.side() as i64;
    let lo = -1.0 + s;
    let hi = 1.0 - s;
    let w = 2.0 * (1.0 - s);
    for c in mask.cells() {
        let (a, b) = mask.cell_rect(c);
        let (ax, ay) = (2.0 * a.x - 1.0, 2.0 * a.y - 1.0);
        let (bx, by) = (2.0 * b.x - 1.0, 2.0 * b.y - 1.0);
        let (x0, x1) = (ax.max(lo), bx.min(hi));
        let (y0, y1) = (ay.max(lo), by.min(hi));
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        let to_idx = |v0: f64, v1: f64| {
            let u0 = (v0 - lo) / w * n;
            let u1 = (v1 - lo) / w * n;
            let i0 = ((u0 + 1e-9).floor() as i64).clamp(0, side - 1);
            let i1 = ((u1 - 1e-9).ceil() as i64 - 1).clamp(0, side - 1);
            (i0 as u32, i1.max(i0) as u32)
        };
        let (i0, i1) = to_idx(x0, x1);
        let (j0, j1) = to_idx(y0, y1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.insert((i, j));
            }
        }
    }
    out
}

impl BoundaryCorrectedMap {
    /// `mask` indexes `[0,1]²`, identified with `[-1,1]²` by `u ↦ 2u - 1`,
    /// so `|M| = 4·measure(mask)`.
    pub fn build(mask: &CompactSetMask, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        let measure_native = 4.0 * mask.measure();
        let s = measure_native.sqrt();
        if mask.is_empty() {
            return Ok(Self {
                tau,
                s: 0.0,
                scale: 1.0,
                measure_native: 0.0,
                inner: None,
                inner_mask: CompactSetMask::empty(mask.level()),
            });
        }
        if s > 0.5 {
            return Err(Error::SmallnessViolated(format!("sqrt|M| = {s} exceeds 1/2")));
        }
        let scale = scale_factor(measure_native, tau);
        if scale <= 0.0 {
            return Err(Error::SmallnessViolated(format!("scale factor {scale} is not positive")));
        }
        let level = DyadicLevel::new((mask.level().get() + 1).min(MAX_LEVEL))?;
        let inner_mask = rasterize_into_subsquare(mask, s, level);
        let inner = if inner_mask.is_empty() { None } else { Some(stretch_mask(&inner_mask, 2.0 * tau)?) };
        let map = Self { tau, s, scale, measure_native, inner, inner_mask };

        let need = 1.0 + tau;
        let central = map.central_det_lower_bound();
        if central < need - 1e-12 {
            return Err(Error::SmallnessViolated(format!(
                "det on M inside S only guaranteed >= {central}, need {need}"
            )));
        }
        let quad = map.quad_det_lower_bound();
        if quad < need - 1e-12 {
            return Err(Error::SmallnessViolated(format!(
                "det in the boundary quadrilaterals only guaranteed >= {quad}, need {need}"
            )));
        }
        Ok(map)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `√|M|`, the width of the boundary layer.
    pub fn layer_width(&self) -> f64 {
        self.s
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn measure_native(&self) -> f64 {
        self.measure_native
    }

    pub fn inner(&self) -> Option<&StretchMap> {
        self.inner.as_ref()
    }

    /// The rescaled `M ∩ S` the inner stretch was built for.
    pub fn inner_mask(&self) -> &CompactSetMask {
        &self.inner_mask
    }

    /// Lower bound of `det ∇φ` on the stretched part of `S`.
    pub fn central_det_lower_bound(&self) -> f64 {
        let lb = self.inner.as_ref().map_or(1.0, |m| m.strip_det_lower_bound());
        self.scale * self.scale * lb
    }

    /// Smallest slope of the four boundary traces of the central map.
    pub fn min_trace_slope(&self) -> f64 {
        let (ah, av) = self.inner.as_ref().map_or((1.0, 1.0), |m| m.coefficients());
        self.scale * ah.min(av).min(1.0)
    }

    /// `∂yφ₂` in a quadrilateral is a convex combination of 1 and the trace
    /// slope, so `det ≥ (1+2τ)·min(1, h')`.
    pub fn quad_det_lower_bound(&self) -> f64 {
        (1.0 + 2.0 * self.tau) * self.min_trace_slope().min(1.0)
    }

    /// Upper bound on `sup |φ - id|` in native coordinates. In a quadrilateral
    /// `φ₂ - y = (1+x)/s · (h(t) - t)`, so the transverse displacement never
    /// exceeds that of the central map, while `|φ₁ - x| ≤ 2τs`.
    pub fn displacement_bound(&self) -> f64 {
        let inner = self.inner.as_ref().map_or(0.0, |m| {
            let (a, b) = crate::stretch::sup_displacement(m, 256);
            a.hypot(b)
        });
        let central = self.scale * 2.0 * (1.0 - self.s) * inner + (1.0 - self.scale) * 2f64.sqrt();
        central.hypot(2.0 * self.tau * self.s)
    }

    /// Wraps the map as a self-map of the unit square.
    pub fn on_unit_square(self) -> Conjugated {
        let chart = Affine::new(Mat2::identity() * 0.5, Vec2::new(0.5, 0.5), Region::centered_square());
        Conjugated { chart: Arc::new(chart), inner: Arc::new(self) }
    }

    fn to_unit(&self, v: f64) -> f64 {
        ((v + 1.0 - self.s) / (2.0 * (1.0 - self.s))).clamp(0.0, 1.0)
    }

    fn from_unit(&self, u: f64) -> f64 {
        -1.0 + self.s + 2.0 * (1.0 - self.s) * u
    }

    pub fn piece_of(&self, p: Point) -> Piece {
        let e = 1.0 - self.s;
        if self.s == 0.0 || (p.x.abs() <= e && p.y.abs() <= e) {
            Piece::Central
        } else if p.x.abs() >= p.y.abs() {
            if p.x < 0.0 {
                Piece::Left
            } else {
                Piece::Right
            }
        } else if p.y < 0.0 {
            Piece::Down
        } else {
            Piece::Up
        }
    }

    fn central(&self, p: Point) -> Point {
        match &self.inner {
            None => p * self.scale,
            Some(m) => {
                let (u, v) = (self.to_unit(p.x), self.to_unit(p.y));
                Point::new(self.from_unit(m.phi1(u, v)), self.from_unit(m.phi2(u, v))) * self.scale
            }
        }
    }

    /// Trace `h` of the central map used by a quadrilateral, in the
    /// coordinates of the left one.
    fn trace(&self, piece: Piece, t: f64) -> f64 {
        let e = 1.0 - self.s;
        match piece {
            Piece::Left | Piece::Central => self.central(Point::new(-e, t)).y,
            Piece::Right => self.central(Point::new(e, t)).y,
            Piece::Down => self.central(Point::new(t, -e)).x,
            Piece::Up => -self.central(Point::new(-t, e)).x,
        }
    }

    fn trace_slope(&self, piece: Piece, t: f64) -> f64 {
        let Some(m) = &self.inner else { return self.scale };
        let d = match piece {
            Piece::Left | Piece::Central => m.dphi2_dy(0.0, self.to_unit(t)),
            Piece::Right => m.dphi2_dy(1.0, self.to_unit(t)),
            Piece::Down => m.dphi1_dx(self.to_unit(t), 0.0),
            Piece::Up => m.dphi1_dx(self.to_unit(-t), 1.0),
        };
        self.scale * d
    }

    fn trace_near_kink(&self, piece: Piece, t: f64, margin: f64) -> bool {
        let Some(m) = &self.inner else { return false };
        let mu = margin / (2.0 * (1.0 - self.s));
        match piece {
            Piece::Left | Piece::Central => m.trace_near_kink(Edge::Left, self.to_unit(t), mu),
            Piece::Right => m.trace_near_kink(Edge::Right, self.to_unit(t), mu),
            Piece::Down => m.trace_near_kink(Edge::Bottom, self.to_unit(t), mu),
            Piece::Up => m.trace_near_kink(Edge::Top, self.to_unit(-t), mu),
        }
    }

    /// Formula of the given piece at `p`, whether or not `p` belongs to it.
    /// Used for interface continuity checks.
    pub fn eval_piece(&self, piece: Piece, p: Point) -> Point {
        if piece == Piece::Central {
            return self.central(p);
        }
        let q = piece.reflect(p);
        let (x, y) = (q.x, q.y);
        let s = self.s;
        let c = -1.0 + s;
        let a = (1.0 - s + x) / (x * s);
        let b = (1.0 + x) / s;
        let h = self.trace(piece, c * y / x);
        let r = Point::new(-1.0 + (1.0 + 2.0 * self.tau) * (1.0 + x), a * y + b * h);
        piece.reflect(r)
    }

    fn jacobian_piece(&self, piece: Piece, p: Point) -> Mat2 {
        if piece == Piece::Central {
            return match &self.inner {
                None => Mat2::identity() * self.scale,
                Some(m) => {
                    let u = Point::new(self.to_unit(p.x), self.to_unit(p.y));
                    m.jacobian(u).unwrap_or_else(|_| crate::map::fd_jacobian(m, u, 1e-9).unwrap()) * self.scale
                }
            };
        }
        let q = piece.reflect(p);
        let (x, y) = (q.x, q.y);
        let s = self.s;
        let c = -1.0 + s;
        let t = c * y / x;
        let h = self.trace(piece, t);
        let hp = self.trace_slope(piece, t);
        let dy = (1.0 - s + x) / (x * s) + (1.0 + x) * c / (x * s) * hp;
        let dx = c * y / (x * x * s) * (1.0 - (1.0 + x) * hp) + h / s;
        let jl = Mat2::new(1.0 + 2.0 * self.tau, 0.0, dx, dy);
        let r = piece.reflect_matrix();
        r * jl * r
    }
}

impl PlanarMap for BoundaryCorrectedMap {
    fn kind(&self) -> MapKind {
        MapKind::BoundaryCorrected
    }
    fn domain(&self) -> Region {
        Region::centered_square()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.domain(), p)?;
        let p = Point::new(p.x.clamp(-1.0, 1.0), p.y.clamp(-1.0, 1.0));
        Ok(self.eval_piece(self.piece_of(p), p))
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.domain(), p)?;
        if self.near_kink(p, KINK_TOL) {
            return Err(Error::KinkLineSingularity(p.x, p.y));
        }
        Ok(self.jacobian_piece(self.piece_of(p), p))
    }
    fn near_kink(&self, p: Point, margin: f64) -> bool {
        if self.s == 0.0 {
            return false;
        }
        let e = 1.0 - self.s;
        let linf = p.x.abs().max(p.y.abs());
        if (linf - e).abs() < margin {
            return true;
        }
        match self.piece_of(p) {
            Piece::Central => self.inner.as_ref().is_some_and(|m| {
                m.near_kink(Point::new(self.to_unit(p.x), self.to_unit(p.y)), margin / (2.0 * e))
            }),
            piece => {
                if (p.x.abs() - p.y.abs()).abs() < margin {
                    return true;
                }
                let q = piece.reflect(p);
                self.trace_near_kink(piece, -e * q.y / q.x, margin)
            }
        }
    }
}

/// Checks specific to the boundary-corrected map, in native coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundaryReport {
    pub boundary_max_err: f64,
    pub interface_max_jump: f64,
    pub min_det_on_mask: f64,
    pub min_det_quads: f64,
    pub min_det_global: f64,
    /// `max |∂xφ - (1,0)| / τ` over quadrilateral samples.
    pub dx_constant: f64,
    pub scale: f64,
    pub layer_width: f64,
    pub tau_used: f64,
    pub samples: usize,
    pub kink_exclusions: usize,
}

fn native_samples_of_cell(mask: &CompactSetMask, c: (u32, u32)) -> impl Iterator<Item = Point> {
    crate::stretch::cell_samples(mask, c).map(|u| Point::new(2.0 * u.x - 1.0, 2.0 * u.y - 1.0))
}

/// Boundary samples: `per_edge` points on each edge, corners included.
pub fn boundary_samples(per_edge: usize) -> Vec<Point> {
    let mut v = Vec::with_capacity(4 * per_edge);
    for k in 0..per_edge {
        let t = -1.0 + 2.0 * k as f64 / (per_edge - 1) as f64;
        v.push(Point::new(t, -1.0));
        v.push(Point::new(1.0, t));
        v.push(Point::new(-t, 1.0));
        v.push(Point::new(-1.0, -t));
    }
    v
}

pub fn boundary_report(map: &BoundaryCorrectedMap, mask: &CompactSetMask, grid_n: usize) -> BoundaryReport {
    let margin = 1e-9;
    let boundary_max_err = boundary_samples(1000)
        .par_iter()
        .map(|&p| (map.eval(p).unwrap() - p).norm())
        .reduce(|| 0.0, f64::max);

    let mut jump: f64 = 0.0;
    if map.s > 0.0 {
        let e = 1.0 - map.s;
        for k in 0..=400 {
            let t = -e + 2.0 * e * k as f64 / 400.0;
            for (piece, p) in [
                (Piece::Left, Point::new(-e, t)),
                (Piece::Right, Point::new(e, t)),
                (Piece::Down, Point::new(t, -e)),
                (Piece::Up, Point::new(t, e)),
            ] {
                jump = jump.max((map.eval_piece(piece, p) - map.eval_piece(Piece::Central, p)).norm());
            }
            let th = map.s * k as f64 / 400.0;
            let r = 1.0 - th;
            for (a, b, p) in [
                (Piece::Left, Piece::Down, Point::new(-r, -r)),
                (Piece::Down, Piece::Right, Point::new(r, -r)),
                (Piece::Right, Piece::Up, Point::new(r, r)),
                (Piece::Up, Piece::Left, Point::new(-r, r)),
            ] {
                jump = jump.max((map.eval_piece(a, p) - map.eval_piece(b, p)).norm());
            }
        }
    }

    let cells: Vec<_> = mask.cells().collect();
    let (min_mask, ex_m, n_m) = cells
        .par_iter()
        .map(|&c| {
            let mut mn = f64::INFINITY;
            let (mut ex, mut n) = (0, 0);
            for p in native_samples_of_cell(mask, c) {
                if map.near_kink(p, margin) {
                    ex += 1;
                    continue;
                }
                n += 1;
                mn = mn.min(map.jacobian(p).unwrap().determinant());
            }
            (mn, ex, n)
        })
        .reduce(|| (f64::INFINITY, 0, 0), |a, b| (a.0.min(b.0), a.1 + b.1, a.2 + b.2));

    let h = 2.0 / grid_n as f64;
    let (min_g, min_q, dxc, ex_g, n_g) = (0..grid_n)
        .into_par_iter()
        .map(|j| {
            let (mut mg, mut mq, mut dc) = (f64::INFINITY, f64::INFINITY, 0.0f64);
            let (mut ex, mut n) = (0, 0);
            for i in 0..grid_n {
                let p = Point::new(-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h);
                if map.near_kink(p, margin) {
                    ex += 1;
                    continue;
                }
                n += 1;
                let jac = map.jacobian(p).unwrap();
                let d = jac.determinant();
                mg = mg.min(d);
                let piece = map.piece_of(p);
                if piece != Piece::Central {
                    mq = mq.min(d);
                    let col = piece.reflect_matrix() * jac * piece.reflect_matrix();
                    let dev = ((col[(0, 0)] - 1.0).powi(2) + col[(1, 0)].powi(2)).sqrt();
                    dc = dc.max(dev / map.tau);
                }
            }
            (mg, mq, dc, ex, n)
        })
        .reduce(
            || (f64::INFINITY, f64::INFINITY, 0.0, 0, 0),
            |a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3 + b.3, a.4 + b.4),
        );

    BoundaryReport {
        boundary_max_err,
        interface_max_jump: jump,
        min_det_on_mask: min_mask,
        min_det_quads: min_q,
        min_det_global: min_g,
        dx_constant: dxc,
        scale: map.scale,
        layer_width: map.s,
        tau_used: map.tau,
        samples: n_m + n_g,
        kink_exclusions: ex_m + ex_g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fd_jacobian;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_mask() -> CompactSetMask {
        let l = DyadicLevel::new(7).unwrap();
        // two cells in the middle and one touching the boundary layer
        CompactSetMask::from_cells(l, [(60, 70), (61, 70), (1, 64)]).unwrap()
    }

    #[test]
    fn scale_arithmetic() {
        assert_abs_diff_eq!(scale_factor(0.04, 0.1), 0.95, epsilon = 1e-15);
        assert_eq!(scale_factor(0.0, 0.7), 1.0);
    }

    #[test]
    fn empty_mask_is_identity() {
        let m = BoundaryCorrectedMap::build(&CompactSetMask::empty(DyadicLevel::new(3).unwrap()), 0.1).unwrap();
        let p = Point::new(-0.3, 0.9);
        assert_eq!(m.eval(p).unwrap(), p);
        assert_eq!(m.jacobian(p).unwrap(), Mat2::identity());
    }

    #[test]
    fn lower_left_diagonal() {
        let m = BoundaryCorrectedMap::build(&small_mask(), 0.1).unwrap();
        let s = m.layer_width();
        for k in 0..=20 {
            let th = s * k as f64 / 20.0;
            let v = m.eval(Point::new(-1.0 + th, -1.0 + th)).unwrap();
            let want = -1.0 + 1.2 * th;
            assert_abs_diff_eq!(v.x, want, epsilon = 1e-12);
            assert_abs_diff_eq!(v.y, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn report_meets_targets() {
        let mask = small_mask();
        let m = BoundaryCorrectedMap::build(&mask, 0.1).unwrap();
        let r = boundary_report(&m, &mask, 200);
        assert!(r.boundary_max_err <= 1e-12, "{r:?}");
        assert!(r.interface_max_jump <= 1e-9, "{r:?}");
        assert!(r.min_det_on_mask >= 1.1 - 1e-9, "{r:?}");
        assert!(r.min_det_quads >= 1.1 - 1e-9, "{r:?}");
        assert!(r.min_det_global > 0.5, "{r:?}");
    }

    #[test]
    fn exact_jacobian_matches_fd() {
        let m = BoundaryCorrectedMap::build(&small_mask(), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut n = 0;
        let mut layer = 0;
        while n < 400 {
            let p = Point::new(rng.gen_range(-0.999..0.999), rng.gen_range(-0.999..0.999));
            if m.near_kink(p, 1e-3) {
                continue;
            }
            let ex = m.jacobian(p).unwrap();
            let fd = fd_jacobian(&m, p, 1e-5).unwrap();
            assert!((ex - fd).abs().max() < 1e-5, "{p:?} {ex} {fd}");
            if m.piece_of(p) != Piece::Central {
                layer += 1;
            }
            n += 1;
        }
        assert!(layer > 10);
    }

    #[test]
    fn too_large_tau_is_rejected() {
        let l = DyadicLevel::new(4).unwrap();
        let mask = CompactSetMask::from_cells(l, [(8, 8)]).unwrap();
        assert!(matches!(BoundaryCorrectedMap::build(&mask, 5.0), Err(Error::SmallnessViolated(_))));
    }

    #[test]
    fn unit_square_conjugate_fixes_edges() {
        let m = BoundaryCorrectedMap::build(&small_mask(), 0.1).unwrap().on_unit_square();
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            for p in [Point::new(t, 0.0), Point::new(0.0, t), Point::new(1.0, t), Point::new(t, 1.0)] {
                assert!((m.eval(p).unwrap() - p).norm() < 1e-12);
            }
        }
    }
}
