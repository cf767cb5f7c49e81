//! Convex quadrilaterals and their bilinear charts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{check_domain, InvertibleMap, MapKind, PlanarMap, Region};
use crate::{Mat2, Point, Vec2};

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Corners `z₁..z₄` in counterclockwise order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexQuad {
    pub z: [Point; 4],
}

impl ConvexQuad {
    pub fn new(z: [Point; 4]) -> Result<Self> {
        let scale = (0..4).map(|k| (z[(k + 1) % 4] - z[k]).norm()).fold(0.0, f64::max);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::NonConvexQuad);
        }
        for k in 0..4 {
            let e0 = z[(k + 1) % 4] - z[k];
            let e1 = z[(k + 2) % 4] - z[(k + 1) % 4];
            if cross(e0, e1) <= 1e-12 * scale * scale {
                return Err(Error::NonConvexQuad);
            }
        }
        let q = Self { z };
        let (a, b) = q.alpha_beta();
        if !(a > 0.0 && b > 0.0 && a + b > 1.0) {
            return Err(Error::NonConvexQuad);
        }
        Ok(q)
    }

    /// `[z₂ - z₁, z₄ - z₁]`, the linear part of the normalization.
    pub fn frame(&self) -> Mat2 {
        Mat2::from_columns(&[self.z[1] - self.z[0], self.z[3] - self.z[0]])
    }

    fn normalize(&self, p: Point) -> Vec2 {
        let e = self.frame();
        let det = e.determinant();
        let d = p - self.z[0];
        Vec2::new(cross(d, e.column(1).into()) / det, cross(e.column(0).into(), d) / det)
    }

    /// Image of `z₃` once `z₁, z₂, z₄` are sent to `(0,0), (1,0), (0,1)`.
    pub fn alpha_beta(&self) -> (f64, f64) {
        let v = self.normalize(self.z[2]);
        (v.x, v.y)
    }

    pub fn area(&self) -> f64 {
        let z = &self.z;
        0.5 * (0..4).map(|k| z[k].x * z[(k + 1) % 4].y - z[(k + 1) % 4].x * z[k].y).sum::<f64>()
    }

    pub fn region(&self) -> Region {
        Region::Quad(self.z)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.region().contains(p, tol)
    }

    /// Distance from `p` to the nearest edge.
    pub fn dist_to_boundary(&self, p: Point) -> f64 {
        (0..4)
            .map(|k| {
                let a = self.z[k];
                let b = self.z[(k + 1) % 4];
                let e = b - a;
                let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                (p - (a + e * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Bilinear chart `[0,1]² → q` with corners `(0,0), (1,0), (1,1), (0,1)`
/// sent to `z₁, z₂, z₃, z₄`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearQuadMap {
    quad: ConvexQuad,
    twist: Vec2,
    alpha: f64,
    beta: f64,
}

impl BilinearQuadMap {
    pub fn new(quad: ConvexQuad) -> Self {
        let z = quad.z;
        let twist = (z[2] - z[1]) - (z[3] - z[0]);
        let (alpha, beta) = quad.alpha_beta();
        Self { quad, twist, alpha, beta }
    }

    pub fn quad(&self) -> &ConvexQuad {
        &self.quad
    }

    pub fn alpha_beta(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    fn apply(&self, u: Point) -> Point {
        let z = &self.quad.z;
        z[0] + (z[1] - z[0]) * u.x + (z[3] - z[0]) * u.y + self.twist * (u.x * u.y)
    }

    fn jac(&self, u: Point) -> Mat2 {
        let z = &self.quad.z;
        Mat2::from_columns(&[(z[1] - z[0]) + self.twist * u.y, (z[3] - z[0]) + self.twist * u.x])
    }

    /// `det ∇ψ(x, y) = det E · (1 + (β-1)x + (α-1)y)`, affine in `(x, y)`.
    pub fn det_at(&self, u: Point) -> f64 {
        self.quad.frame().determinant() * (1.0 + (self.beta - 1.0) * u.x + (self.alpha - 1.0) * u.y)
    }

    /// Minimum of `det ∇ψ` over the unit square (attained at a corner).
    pub fn min_det(&self) -> f64 {
        let e = self.quad.frame().determinant();
        e * 1f64.min(self.alpha).min(self.beta).min(self.alpha + self.beta - 1.0)
    }

    /// Lipschitz constant of `det ∇ψ` in the max norm.
    pub fn det_lipschitz(&self) -> f64 {
        self.quad.frame().determinant() * ((self.alpha - 1.0).abs() + (self.beta - 1.0).abs())
    }
}

impl PlanarMap for BilinearQuadMap {
    fn kind(&self) -> MapKind {
        MapKind::BilinearQuad
    }
    fn domain(&self) -> Region {
        Region::unit_square()
    }
    fn codomain(&self) -> Region {
        self.quad.region()
    }
    fn eval(&self, u: Point) -> Result<Point> {
        check_domain(&self.domain(), u)?;
        Ok(self.apply(u))
    }
    fn jacobian(&self, u: Point) -> Result<Mat2> {
        check_domain(&self.domain(), u)?;
        Ok(self.jac(u))
    }
}

impl InvertibleMap for BilinearQuadMap {
    /// In normalized coordinates `(a, b)` the equations are
    /// `x + Axy = a`, `y + Bxy = b` with `A = α-1`, `B = β-1`; eliminating `x`
    /// leaves `A y² + (1 + Ba - Ab) y - b = 0`.
    fn eval_inverse(&self, p: Point) -> Result<Point> {
        if !self.quad.contains(p, 1e-12) {
            return Err(Error::PointOutsideQuad(p.x, p.y));
        }
        let n = self.quad.normalize(p);
        let (a, b) = (n.x, n.y);
        let ca = self.alpha - 1.0;
        let cb = self.beta - 1.0;
        let q = 1.0 + cb * a - ca * b;
        let mut y = if ca.abs() < 1e-14 {
            if q.abs() < 1e-300 {
                return Err(Error::NumericalDegeneracy("linear fallback with vanishing slope".into()));
            }
            b / q
        } else {
            let disc = q * q + 4.0 * ca * b;
            if disc < -1e-14 {
                return Err(Error::NumericalDegeneracy(format!("negative discriminant {disc}")));
            }
            let r = disc.max(0.0).sqrt();
            if q >= 0.0 {
                2.0 * b / (q + r)
            } else {
                (-q + r) / (2.0 * ca)
            }
        };
        let mut x = a / (1.0 + ca * y);
        // Newton polish against the chart itself
        for _ in 0..3 {
            let u = Point::new(x, y);
            let res = self.apply(u) - p;
            if res.norm() == 0.0 {
                break;
            }
            let Some(inv) = self.jac(u).try_inverse() else { break };
            let d = inv * res;
            x -= d.x;
            y -= d.y;
        }
        let tol = 1e-9;
        if !(x > -tol && x < 1.0 + tol && y > -tol && y < 1.0 + tol) {
            return Err(Error::PointOutsideQuad(p.x, p.y));
        }
        Ok(Point::new(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)))
    }
}

/// Three convex quadrilaterals from the edge midpoints and the centroid.
pub fn cover_triangle(t: [Point; 3]) -> Result<[ConvexQuad; 3]> {
    let [a, mut b, mut c] = t;
    let area2 = cross(b - a, c - a);
    let scale = (b - a).norm().max((c - a).norm()).max((c - b).norm());
    if !(area2.abs() > 1e-12 * scale * scale) {
        return Err(Error::DegenerateTriangle);
    }
    if area2 < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }
    let mid = |p: Point, q: Point| Point::from((p.coords + q.coords) * 0.5);
    let (mab, mbc, mca) = (mid(a, b), mid(b, c), mid(c, a));
    let g = Point::from((a.coords + b.coords + c.coords) / 3.0);
    Ok([
        ConvexQuad::new([a, mab, g, mca])?,
        ConvexQuad::new([b, mbc, g, mab])?,
        ConvexQuad::new([c, mca, g, mbc])?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn kite() -> BilinearQuadMap {
        BilinearQuadMap::new(ConvexQuad::new([p(0.0, 0.0), p(1.0, 0.0), p(2.0, 2.0), p(0.0, 1.0)]).unwrap())
    }

    #[test]
    fn alpha_beta_two() {
        let m = kite();
        assert_eq!(m.alpha_beta(), (2.0, 2.0));
        assert_eq!(m.eval(p(1.0, 1.0)).unwrap(), p(2.0, 2.0));
        let j = m.jacobian(p(0.5, 0.5)).unwrap();
        assert_abs_diff_eq!(j, Mat2::new(1.5, 0.5, 0.5, 1.5), epsilon = 1e-15);
        assert_abs_diff_eq!(j.determinant(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.det_at(p(0.5, 0.5)), 2.0, epsilon = 1e-15);
        assert_eq!(m.eval_inverse(p(2.0, 2.0)).unwrap(), p(1.0, 1.0));
    }

    #[test]
    fn unit_square_chart_is_identity() {
        let m = BilinearQuadMap::new(
            ConvexQuad::new([p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap(),
        );
        let u = p(0.3, 0.7);
        assert_eq!(m.eval(u).unwrap(), u);
        assert_eq!(m.eval_inverse(u).unwrap(), u);
        assert_eq!(m.jacobian(u).unwrap(), Mat2::identity());
    }

    #[test]
    fn rejects_nonconvex_and_clockwise() {
        let dart = [p(0.0, 0.0), p(1.0, 0.0), p(0.3, 0.3), p(0.0, 1.0)];
        assert_eq!(ConvexQuad::new(dart), Err(Error::NonConvexQuad));
        let cw = [p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(1.0, 0.0)];
        assert_eq!(ConvexQuad::new(cw), Err(Error::NonConvexQuad));
    }

    #[test]
    fn round_trip_random() {
        let m = BilinearQuadMap::new(
            ConvexQuad::new([p(0.1, -0.2), p(1.3, 0.1), p(0.9, 1.6), p(-0.4, 0.8)]).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = p(rng.gen(), rng.gen());
            let back = m.eval_inverse(m.eval(u).unwrap()).unwrap();
            assert!((back - u).norm() < 1e-10);
        }
        assert!(matches!(m.eval_inverse(p(5.0, 5.0)), Err(Error::PointOutsideQuad(..))));
    }

    #[test]
    fn triangle_cover() {
        let qs = cover_triangle([p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(qs.iter().map(|q| q.area()).sum::<f64>(), 0.5, epsilon = 1e-12);
        let h = 3f64.sqrt() / 2.0;
        let eq = cover_triangle([p(0.0, 0.0), p(0.0, 0.0) + Vec2::new(0.5, h), p(1.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(eq[0].area(), eq[1].area(), epsilon = 1e-12);
        assert_abs_diff_eq!(eq[1].area(), eq[2].area(), epsilon = 1e-12);
        assert_eq!(cover_triangle([p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)]), Err(Error::DegenerateTriangle));
    }
}
