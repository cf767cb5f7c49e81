//! Evaluable planar maps, their Jacobians, and lazy composition.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::{Mat2, Point, Vec2};

/// Absolute tolerance for region membership tests.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Distance below which an exact Jacobian refuses to pick a side of a kink.
pub const KINK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Plane,
    Rect { min: Point, max: Point },
    /// Convex quadrilateral, corners counterclockwise.
    Quad([Point; 4]),
}

impl Region {
    pub fn unit_square() -> Self {
        Region::Rect { min: Point::new(0.0, 0.0), max: Point::new(1.0, 1.0) }
    }

    /// `[-1, 1]²`.
    pub fn centered_square() -> Self {
        Region::Rect { min: Point::new(-1.0, -1.0), max: Point::new(1.0, 1.0) }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        match self {
            Region::Plane => p.x.is_finite() && p.y.is_finite(),
            Region::Rect { min, max } => {
                p.x >= min.x - tol && p.x <= max.x + tol && p.y >= min.y - tol && p.y <= max.y + tol
            }
            Region::Quad(z) => (0..4).all(|k| {
                let a = z[k];
                let b = z[(k + 1) % 4];
                let e = b - a;
                let cross = e.x * (p.y - a.y) - e.y * (p.x - a.x);
                cross >= -tol * e.norm()
            }),
        }
    }

    pub fn corners(&self) -> Option<Vec<Point>> {
        match self {
            Region::Plane => None,
            Region::Rect { min, max } => Some(vec![
                *min,
                Point::new(max.x, min.y),
                *max,
                Point::new(min.x, max.y),
            ]),
            Region::Quad(z) => Some(z.to_vec()),
        }
    }

    /// Whether `other` is contained in `self` (both convex).
    pub fn contains_region(&self, other: &Region, tol: f64) -> bool {
        match (self, other.corners()) {
            (Region::Plane, _) => true,
            (_, None) => false,
            (_, Some(c)) => c.iter().all(|&p| self.contains(p, tol)),
        }
    }

    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let c = self.corners()?;
        let mut lo = c[0];
        let mut hi = c[0];
        for p in &c[1..] {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Some((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Identity,
    Affine,
    BilinearQuad,
    StripStretch,
    BoundaryCorrected,
    MoserFlow,
    Composition,
    Piecewise,
}

pub trait PlanarMap: Send + Sync + Debug {
    fn kind(&self) -> MapKind;

    fn domain(&self) -> Region;

    fn codomain(&self) -> Region {
        self.domain()
    }

    fn eval(&self, p: Point) -> Result<Point>;

    fn jacobian(&self, p: Point) -> Result<Mat2>;

    /// Whether `p` lies within `margin` of a registered kink line.
    fn near_kink(&self, _p: Point, _margin: f64) -> bool {
        false
    }

    fn has_exact_jacobian(&self) -> bool {
        true
    }

    fn as_composition(&self) -> Option<&Composition> {
        None
    }
}

pub trait InvertibleMap: PlanarMap {
    fn eval_inverse(&self, q: Point) -> Result<Point>;
}

pub fn check_domain(region: &Region, p: Point) -> Result<()> {
    if region.contains(p, DOMAIN_TOL) {
        Ok(())
    } else {
        Err(Error::PointOutsideDomain(p.x, p.y))
    }
}

pub fn adjugate(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Central differences, falling back to one-sided ones at the domain edge.
pub fn fd_jacobian(map: &dyn PlanarMap, p: Point, h: f64) -> Result<Mat2> {
    let dom = map.domain();
    let mut cols = [Vec2::zeros(); 2];
    for (axis, col) in cols.iter_mut().enumerate() {
        let mut e = Vec2::zeros();
        e[axis] = h;
        let fwd = dom.contains(p + e, DOMAIN_TOL);
        let bwd = dom.contains(p - e, DOMAIN_TOL);
        *col = match (fwd, bwd) {
            (true, true) => (map.eval(p + e)? - map.eval(p - e)?) / (2.0 * h),
            (true, false) => (map.eval(p + e)? - map.eval(p)?) / h,
            (false, true) => (map.eval(p)? - map.eval(p - e)?) / h,
            (false, false) => return Err(Error::PointOutsideDomain(p.x, p.y)),
        };
    }
    Ok(Mat2::from_columns(&cols))
}

/// Jacobian "almost everywhere": if `p` sits exactly on a kink, a nearby
/// point is used instead.
pub fn jacobian_ae(map: &dyn PlanarMap, p: Point) -> Result<Mat2> {
    match map.jacobian(p) {
        Err(Error::KinkLineSingularity(..)) => {}
        other => return other,
    }
    let dom = map.domain();
    for scale in [1e-9, 1e-8, 1e-7, 1e-6] {
        for (dx, dy) in [(1.0, 0.618), (-0.618, 1.0), (-1.0, -0.618), (0.618, -1.0)] {
            let q = Point::new(p.x + scale * dx, p.y + scale * dy);
            if !dom.contains(q, 0.0) {
                continue;
            }
            if let Ok(j) = map.jacobian(q) {
                return Ok(j);
            }
        }
    }
    Err(Error::KinkLineSingularity(p.x, p.y))
}

#[derive(Clone, Debug)]
pub struct Identity {
    pub region: Region,
}

impl Identity {
    pub fn on(region: Region) -> Self {
        Self { region }
    }
}

impl PlanarMap for Identity {
    fn kind(&self) -> MapKind {
        MapKind::Identity
    }
    fn domain(&self) -> Region {
        self.region
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.region, p)?;
        Ok(p)
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.region, p)?;
        Ok(Mat2::identity())
    }
}

impl InvertibleMap for Identity {
    fn eval_inverse(&self, q: Point) -> Result<Point> {
        self.eval(q)
    }
}

/// `p ↦ A p + b`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub matrix: Mat2,
    pub offset: Vec2,
    pub region: Region,
}

impl Affine {
    pub fn new(matrix: Mat2, offset: Vec2, region: Region) -> Self {
        Self { matrix, offset, region }
    }

    pub fn translation(v: Vec2) -> Self {
        Self::new(Mat2::identity(), v, Region::Plane)
    }

    pub fn scaling(s: f64) -> Self {
        Self::new(Mat2::identity() * s, Vec2::zeros(), Region::Plane)
    }

    pub fn linear(matrix: Mat2) -> Self {
        Self::new(matrix, Vec2::zeros(), Region::Plane)
    }

    /// `[0,1]² → [-1,1]²`, `u ↦ 2u - 1`.
    pub fn unit_to_centered() -> Self {
        Self::new(Mat2::identity() * 2.0, Vec2::new(-1.0, -1.0), Region::unit_square())
    }

    fn apply(&self, p: Point) -> Point {
        Point::from(self.matrix * p.coords + self.offset)
    }
}

impl PlanarMap for Affine {
    fn kind(&self) -> MapKind {
        MapKind::Affine
    }
    fn domain(&self) -> Region {
        self.region
    }
    fn codomain(&self) -> Region {
        match self.region.corners() {
            None => Region::Plane,
            Some(c) => {
                let img: Vec<Point> = c.iter().map(|&p| self.apply(p)).collect();
                let lo = img.iter().fold(img[0], |a, p| Point::new(a.x.min(p.x), a.y.min(p.y)));
                let hi = img.iter().fold(img[0], |a, p| Point::new(a.x.max(p.x), a.y.max(p.y)));
                Region::Rect { min: lo, max: hi }
            }
        }
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.region, p)?;
        Ok(self.apply(p))
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.region, p)?;
        Ok(self.matrix)
    }
}

impl InvertibleMap for Affine {
    fn eval_inverse(&self, q: Point) -> Result<Point> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or_else(|| Error::NumericalDegeneracy("singular affine map".into()))?;
        let p = Point::from(inv * (q.coords - self.offset));
        check_domain(&self.region, p)?;
        Ok(p)
    }
}

/// Lazy composition; `factors[0]` is applied first.
#[derive(Clone, Debug)]
pub struct Composition {
    factors: Vec<Arc<dyn PlanarMap>>,
}

impl Composition {
    pub fn new(first: Arc<dyn PlanarMap>) -> Self {
        Self { factors: vec![first] }
    }

    pub fn factors(&self) -> &[Arc<dyn PlanarMap>] {
        &self.factors
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Appends `outer`, so the result evaluates `outer ∘ self`.
    pub fn then(mut self, outer: Arc<dyn PlanarMap>) -> Result<Self> {
        let last = self.factors.last().expect("nonempty composition");
        let tol = 1e-9;
        if !outer.domain().contains_region(&last.codomain(), tol) {
            return Err(Error::DomainMismatch(format!(
                "codomain {:?} of inner map not inside domain {:?} of outer map",
                last.codomain(),
                outer.domain()
            )));
        }
        match outer.as_composition() {
            Some(c) => self.factors.extend(c.factors.iter().cloned()),
            None => self.factors.push(outer),
        }
        Ok(self)
    }
}

/// `outer ∘ inner`.
pub fn compose(outer: Arc<dyn PlanarMap>, inner: Arc<dyn PlanarMap>) -> Result<Composition> {
    let base = match inner.as_composition() {
        Some(c) => c.clone(),
        None => Composition::new(inner),
    };
    base.then(outer)
}

impl PlanarMap for Composition {
    fn kind(&self) -> MapKind {
        MapKind::Composition
    }
    fn domain(&self) -> Region {
        self.factors[0].domain()
    }
    fn codomain(&self) -> Region {
        self.factors.last().unwrap().codomain()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        self.factors.iter().try_fold(p, |q, f| f.eval(q))
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        let mut q = p;
        let mut j = Mat2::identity();
        for f in &self.factors {
            j = f.jacobian(q)? * j;
            q = f.eval(q)?;
        }
        Ok(j)
    }
    fn near_kink(&self, p: Point, margin: f64) -> bool {
        let mut q = p;
        for f in &self.factors {
            if f.near_kink(q, margin) {
                return true;
            }
            match f.eval(q) {
                Ok(r) => q = r,
                Err(_) => return false,
            }
        }
        false
    }
    fn has_exact_jacobian(&self) -> bool {
        self.factors.iter().all(|f| f.has_exact_jacobian())
    }
    fn as_composition(&self) -> Option<&Composition> {
        Some(self)
    }
}

/// `chart ∘ inner ∘ chart⁻¹`, the transport of a map through a chart.
#[derive(Clone, Debug)]
pub struct Conjugated {
    pub chart: Arc<dyn InvertibleMap>,
    pub inner: Arc<dyn PlanarMap>,
}

impl PlanarMap for Conjugated {
    fn kind(&self) -> MapKind {
        self.inner.kind()
    }
    fn domain(&self) -> Region {
        self.chart.codomain()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        let u = self.chart.eval_inverse(p)?;
        self.chart.eval(self.inner.eval(u)?)
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        let u = self.chart.eval_inverse(p)?;
        let v = self.inner.eval(u)?;
        let ju_inv = self
            .chart
            .jacobian(u)?
            .try_inverse()
            .ok_or_else(|| Error::NumericalDegeneracy("singular chart".into()))?;
        Ok(self.chart.jacobian(v)? * self.inner.jacobian(u)? * ju_inv)
    }
    fn near_kink(&self, p: Point, margin: f64) -> bool {
        self.chart.eval_inverse(p).is_ok_and(|u| self.inner.near_kink(u, margin))
    }
    fn has_exact_jacobian(&self) -> bool {
        self.inner.has_exact_jacobian()
    }
}

/// Replaces the Jacobian of `inner` by central finite differences.
#[derive(Clone, Debug)]
pub struct FiniteDifference {
    pub inner: Arc<dyn PlanarMap>,
    pub h: f64,
}

impl PlanarMap for FiniteDifference {
    fn kind(&self) -> MapKind {
        self.inner.kind()
    }
    fn domain(&self) -> Region {
        self.inner.domain()
    }
    fn codomain(&self) -> Region {
        self.inner.codomain()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        self.inner.eval(p)
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        fd_jacobian(self.inner.as_ref(), p, self.h)
    }
    fn has_exact_jacobian(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot(theta: f64) -> Mat2 {
        Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos())
    }

    #[test]
    fn identity_is_bit_exact() {
        let id = Identity::on(Region::unit_square());
        let p = Point::new(0.3, 0.7);
        assert_eq!(id.eval(p).unwrap(), p);
        assert_eq!(id.jacobian(p).unwrap(), Mat2::identity());
        assert_eq!(id.eval(Point::new(1.5, 0.0)), Err(Error::PointOutsideDomain(1.5, 0.0)));
    }

    #[test]
    fn translations_compose() {
        let v = Vec2::new(0.25, -0.5);
        let t: Arc<dyn PlanarMap> = Arc::new(Affine::translation(v));
        let mut c = Composition::new(t.clone());
        for _ in 0..4 {
            c = c.then(t.clone()).unwrap();
        }
        let p = Point::new(0.1, 0.2);
        assert_abs_diff_eq!(c.eval(p).unwrap(), p + 5.0 * v, epsilon = 1e-15);
        assert_eq!(c.depth(), 5);
    }

    #[test]
    fn compose_with_identity_matches() {
        let a: Arc<dyn PlanarMap> = Arc::new(Affine::linear(Mat2::new(1.2, 0.3, -0.1, 0.9)));
        let c = compose(Arc::new(Identity::on(Region::Plane)), a.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = Point::new(rng.gen(), rng.gen());
            assert_eq!(c.eval(p).unwrap(), a.eval(p).unwrap());
        }
    }

    #[test]
    fn domain_mismatch_detected() {
        let grow: Arc<dyn PlanarMap> =
            Arc::new(Affine::new(Mat2::identity() * 2.0, Vec2::zeros(), Region::unit_square()));
        let sq: Arc<dyn PlanarMap> = Arc::new(Identity::on(Region::unit_square()));
        assert!(matches!(compose(sq, grow), Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn chain_rule_and_det_multiplicativity() {
        let a: Arc<dyn PlanarMap> = Arc::new(Affine::linear(rot(0.4) * 1.5));
        let b: Arc<dyn PlanarMap> = Arc::new(Affine::new(
            Mat2::new(1.0, 0.5, 0.0, 2.0),
            Vec2::new(1.0, 0.0),
            Region::Plane,
        ));
        let c = compose(b.clone(), a.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = Point::new(rng.gen(), rng.gen());
            let j = c.jacobian(p).unwrap();
            let jb = b.jacobian(a.eval(p).unwrap()).unwrap();
            let ja = a.jacobian(p).unwrap();
            assert!((j - jb * ja).abs().max() <= 1e-12);
            assert!((j.determinant() - jb.determinant() * ja.determinant()).abs() <= 1e-10);
        }
    }

    #[test]
    fn associativity() {
        let m: Vec<Arc<dyn PlanarMap>> = vec![
            Arc::new(Affine::linear(rot(0.3))),
            Arc::new(Affine::translation(Vec2::new(0.1, 0.2))),
            Arc::new(Affine::linear(Mat2::new(1.0, 0.2, 0.1, 1.1))),
        ];
        let left: Arc<dyn PlanarMap> = Arc::new(compose(m[1].clone(), m[0].clone()).unwrap());
        let lhs = compose(m[2].clone(), left).unwrap();
        let right: Arc<dyn PlanarMap> = Arc::new(compose(m[2].clone(), m[1].clone()).unwrap());
        let rhs = compose(right, m[0].clone()).unwrap();
        let p = Point::new(0.3, 0.9);
        assert!((lhs.eval(p).unwrap() - rhs.eval(p).unwrap()).norm() <= 1e-12);
    }

    #[test]
    fn adjugate_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = Mat2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let r = adjugate(&m) * m - Mat2::identity() * m.determinant();
            assert!(r.abs().max() <= 1e-12);
        }
    }

    #[test]
    fn fd_is_exact_for_affine() {
        let a = Affine::new(Mat2::new(1.0, 2.0, 3.0, 4.0), Vec2::zeros(), Region::unit_square());
        let j = fd_jacobian(&a, Point::new(0.0, 0.5), 1e-4).unwrap();
        assert!((j - a.matrix).abs().max() < 1e-9);
    }
}
