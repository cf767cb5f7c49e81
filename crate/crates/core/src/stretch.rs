//! The explicit strip-stretching map on the unit square.
//!
//! With `a_h = 1 - 4δNτ`, `a_v = 1 - 4δMτ` and `c(s) = clamp(s + δ, 0, 2δ)`:
//!
//! ```text
//! φ₁(x, y) = a_v x + 2τ Σ_j c(x - g_j(y))
//! φ₂(x, y) = a_h y + 2τ Σ_i c(y - f_i(x))
//! ```
//!
//! Each strip is dilated by `1 + 2τ/a` transversally while the complement
//! contracts slightly, so edges map onto themselves.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{cover_mask, disjointify, StripFamily};
use crate::error::{Error, Result};
use crate::map::{check_domain, MapKind, PlanarMap, Region, KINK_TOL};
use crate::mask::CompactSetMask;
use crate::pl::Pl1d;
use crate::{Mat2, Point};

/// Upper bound on `|K|` accepted by the builder.
pub const MAX_MEASURE: f64 = 0.25;
/// Upper bound on `τ√|K|`.
pub const MAX_TAU_ROOT: f64 = 1.0 / 32.0;

/// Edges of the unit square, used for boundary traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug)]
pub struct StretchMap {
    family: StripFamily,
    tau: f64,
    measure_k: f64,
    a_h: f64,
    a_v: f64,
}

#[inline]
fn ramp(s: f64, delta: f64) -> f64 {
    (s + delta).clamp(0.0, 2.0 * delta)
}

impl StretchMap {
    /// The map without any smallness gate; callers own the consequences.
    pub fn new_unchecked(family: StripFamily, tau: f64, measure_k: f64) -> Self {
        let d = family.delta;
        let a_h = 1.0 - 4.0 * d * family.n() as f64 * tau;
        let a_v = 1.0 - 4.0 * d * family.m() as f64 * tau;
        Self { family, tau, measure_k, a_h, a_v }
    }

    /// Builds the map after checking `|K| ≤ 1/4`, `τ√|K| ≤ 1/32`, the
    /// family invariants, and that `det ∇φ ≥ 1 + τ` holds a.e. on the strips.
    pub fn build(family: StripFamily, tau: f64, measure_k: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        if measure_k > MAX_MEASURE {
            return Err(Error::SmallnessViolated(format!("|K| = {measure_k} exceeds {MAX_MEASURE}")));
        }
        let root = measure_k.sqrt();
        if tau * root > MAX_TAU_ROOT {
            return Err(Error::SmallnessViolated(format!(
                "tau*sqrt|K| = {} exceeds the gate tau*|K|^(1/2) <= 1/32",
                tau * root
            )));
        }
        let bad = family.invariant_violations();
        if !bad.is_empty() {
            return Err(Error::SmallnessViolated(format!("strip family not admissible: {}", bad[0])));
        }
        let map = Self::new_unchecked(family, tau, measure_k);
        let lb = map.strip_det_lower_bound();
        if lb < 1.0 + tau - 1e-12 {
            return Err(Error::SmallnessViolated(format!(
                "det on strips only guaranteed >= {lb}, need 1 + tau = {} (delta(N+M) = {})",
                1.0 + tau,
                map.family.delta * (map.family.n() + map.family.m()) as f64
            )));
        }
        Ok(map)
    }

    pub fn family(&self) -> &StripFamily {
        &self.family
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn measure_k(&self) -> f64 {
        self.measure_k
    }

    /// The coefficients `(1 - 4δNτ, 1 - 4δMτ)`.
    pub fn coefficients(&self) -> (f64, f64) {
        (self.a_h, self.a_v)
    }

    /// `1 + 2τ[1 - 2δ(M+N) - 8τδ(M+N)]`, the closed-form bound on the strips.
    pub fn closed_form_strip_bound(&self) -> f64 {
        let s = self.family.delta * (self.family.n() + self.family.m()) as f64;
        1.0 + 2.0 * self.tau * (1.0 - 2.0 * s - 8.0 * self.tau * s)
    }

    /// Exact minimum of the determinant over the possible strip regions
    /// (one horizontal strip, one vertical strip, or a crossing with the
    /// worst slope product). Never below the closed-form bound.
    pub fn strip_det_lower_bound(&self) -> f64 {
        let t2 = 2.0 * self.tau;
        let (n, m) = (self.family.n(), self.family.m());
        let mut lb = f64::INFINITY;
        if n > 0 {
            lb = lb.min(self.a_v * (self.a_h + t2));
        }
        if m > 0 {
            lb = lb.min((self.a_v + t2) * self.a_h);
        }
        if n > 0 && m > 0 {
            lb = lb.min((self.a_v + t2) * (self.a_h + t2) - t2 * t2);
        }
        lb
    }

    pub fn phi1(&self, x: f64, y: f64) -> f64 {
        let d = self.family.delta;
        let s: f64 = self.family.vertical.iter().map(|g| ramp(x - g.eval(y), d)).sum();
        self.a_v * x + 2.0 * self.tau * s
    }

    pub fn phi2(&self, x: f64, y: f64) -> f64 {
        let d = self.family.delta;
        let s: f64 = self.family.horizontal.iter().map(|f| ramp(y - f.eval(x), d)).sum();
        self.a_h * y + 2.0 * self.tau * s
    }

    fn inside(s: f64, d: f64) -> bool {
        s.abs() < d
    }

    pub fn dphi2_dy(&self, x: f64, y: f64) -> f64 {
        let d = self.family.delta;
        let k = self.family.horizontal.iter().filter(|f| Self::inside(y - f.eval(x), d)).count();
        self.a_h + 2.0 * self.tau * k as f64
    }

    pub fn dphi1_dx(&self, x: f64, y: f64) -> f64 {
        let d = self.family.delta;
        let k = self.family.vertical.iter().filter(|g| Self::inside(x - g.eval(y), d)).count();
        self.a_v + 2.0 * self.tau * k as f64
    }

    fn jacobian_unchecked(&self, p: Point) -> Mat2 {
        let d = self.family.delta;
        let t2 = 2.0 * self.tau;
        let (mut hx, mut hy) = (0.0, 0.0);
        for f in &self.family.horizontal {
            if Self::inside(p.y - f.eval(p.x), d) {
                hy += 1.0;
                hx += f.slope(p.x);
            }
        }
        let (mut vx, mut vy) = (0.0, 0.0);
        for g in &self.family.vertical {
            if Self::inside(p.x - g.eval(p.y), d) {
                vx += 1.0;
                vy += g.slope(p.y);
            }
        }
        Mat2::new(self.a_v + t2 * vx, -t2 * vy, -t2 * hx, self.a_h + t2 * hy)
    }

    /// Whether `p` hits a kink of one of the boundary traces; `u` is the
    /// coordinate along `edge`.
    pub fn trace_near_kink(&self, edge: Edge, u: f64, margin: f64) -> bool {
        let d = self.family.delta;
        let (graphs, at) = match edge {
            Edge::Left => (&self.family.horizontal, 0.0),
            Edge::Right => (&self.family.horizontal, 1.0),
            Edge::Bottom => (&self.family.vertical, 0.0),
            Edge::Top => (&self.family.vertical, 1.0),
        };
        graphs.iter().any(|g| {
            let s = (u - g.eval(at)).abs();
            (s - d).abs() < margin
        })
    }

    /// Whether `p` lies inside some open strip.
    pub fn in_strips(&self, p: Point) -> bool {
        let (h, v) = self.family.overlap_counts(p);
        h + v > 0
    }
}

fn graph_near_kink(g: &Pl1d, along: f64, across: f64, d: f64, margin: f64) -> bool {
    let s = (across - g.eval(along)).abs();
    (s - d).abs() < margin || (s < d + margin && g.dist_to_breakpoint(along) < margin)
}

impl PlanarMap for StretchMap {
    fn kind(&self) -> MapKind {
        MapKind::StripStretch
    }
    fn domain(&self) -> Region {
        Region::unit_square()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.domain(), p)?;
        Ok(Point::new(self.phi1(p.x, p.y), self.phi2(p.x, p.y)))
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.domain(), p)?;
        if self.near_kink(p, KINK_TOL) {
            return Err(Error::KinkLineSingularity(p.x, p.y));
        }
        Ok(self.jacobian_unchecked(p))
    }
    fn near_kink(&self, p: Point, margin: f64) -> bool {
        let d = self.family.delta;
        self.family.horizontal.iter().any(|f| graph_near_kink(f, p.x, p.y, d, margin))
            || self.family.vertical.iter().any(|g| graph_near_kink(g, p.y, p.x, d, margin))
    }
}

/// Cover, disjointify and build for a mask, using `ε = √|K|` so that
/// `δN, δM ≤ 2√|K|`. Refines the mask up to twice if the determinant
/// bound on the strips fails at the current level.
pub fn stretch_mask(mask: &CompactSetMask, tau: f64) -> Result<StretchMap> {
    let measure = mask.measure();
    let mut m = mask.clone();
    let mut last_err = None;
    for _ in 0..3 {
        let fam = disjointify(&cover_mask(&m, measure.sqrt())?);
        match StretchMap::build(fam, tau, measure) {
            Ok(s) => return Ok(s),
            Err(Error::SmallnessViolated(msg)) if msg.starts_with("det on strips") => {
                last_err = Some(Error::SmallnessViolated(msg));
                match m.refine(1) {
                    Ok(r) => m = r,
                    Err(_) => break,
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Measured constants of a stretch map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StretchReport {
    pub sup_disp: f64,
    pub sup_phi1: f64,
    pub sup_phi2: f64,
    pub lp_dx_phi2: BTreeMap<String, f64>,
    pub lp_dy_phi2_minus1: BTreeMap<String, f64>,
    pub min_det_on_k: f64,
    pub min_det_global: f64,
    /// `max |∇φ|_F / det ∇φ` over samples outside the strips.
    pub max_grad_over_det_off_strips: f64,
    pub tau_used: f64,
    pub delta_used: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub samples: usize,
    pub kink_exclusions: usize,
}

/// `max |φ₂ - y|` and `max |φ₁ - x|`. For a disjoint family the extremes sit
/// on strip boundaries above graph breakpoints, which are evaluated
/// directly; a grid sweep covers any other family.
pub fn sup_displacement(map: &StretchMap, grid_n: usize) -> (f64, f64) {
    let d = map.family.delta;
    let mut s1: f64 = 0.0;
    let mut s2: f64 = 0.0;
    for f in &map.family.horizontal {
        for &x in &f.xs {
            for y in [f.eval(x) - d, f.eval(x) + d] {
                let y = y.clamp(0.0, 1.0);
                s2 = s2.max((map.phi2(x, y) - y).abs());
            }
        }
    }
    for g in &map.family.vertical {
        for &y in &g.xs {
            for x in [g.eval(y) - d, g.eval(y) + d] {
                let x = x.clamp(0.0, 1.0);
                s1 = s1.max((map.phi1(x, y) - x).abs());
            }
        }
    }
    let h = 1.0 / grid_n as f64;
    let (g1, g2) = (0..=grid_n)
        .into_par_iter()
        .map(|j| {
            let y = j as f64 * h;
            let mut a: f64 = 0.0;
            let mut b: f64 = 0.0;
            for i in 0..=grid_n {
                let x = i as f64 * h;
                a = a.max((map.phi1(x, y) - x).abs());
                b = b.max((map.phi2(x, y) - y).abs());
            }
            (a, b)
        })
        .reduce(|| (0.0, 0.0), |u, v| (u.0.max(v.0), u.1.max(v.1)));
    (s1.max(g1), s2.max(g2))
}

/// Exact Lᵖ norms of `∂xφ₂` and `∂yφ₂ - 1`, which are piecewise constant
/// on a disjoint family: `-2τ f_i'` resp. `2τ - 4δNτ` inside strip `i`
/// (area `2δ` each), `0` resp. `-4δNτ` elsewhere.
pub fn exact_lp_norms(map: &StretchMap, p: f64) -> (f64, f64) {
    let d = map.family.delta;
    let t2 = 2.0 * map.tau;
    let n = map.family.n() as f64;
    let out = 4.0 * d * n * map.tau;
    let ins = (t2 - out).abs();
    let area_in = 2.0 * d * n;
    if p.is_infinite() {
        let dx = map
            .family
            .horizontal
            .iter()
            .map(|f| t2 * f.lipschitz_constant())
            .fold(0.0, f64::max);
        let dy = if n > 0.0 { out.max(ins) } else { 0.0 };
        return (dx, dy);
    }
    let mut sx = 0.0;
    for f in &map.family.horizontal {
        for k in 0..f.xs.len() - 1 {
            let w = f.xs[k + 1] - f.xs[k];
            sx += (t2 * f.slope_of_segment(k).abs()).powf(p) * w * 2.0 * d;
        }
    }
    let sy = (1.0 - area_in) * out.powf(p) + area_in * ins.powf(p);
    (sx.powf(1.0 / p), sy.powf(1.0 / p))
}

/// Sample points for a mask cell: the center and eight points offset by a
/// quarter cell.
pub fn cell_samples(mask: &CompactSetMask, c: (u32, u32)) -> impl Iterator<Item = Point> {
    let ctr = mask.cell_center(c);
    let q = mask.delta() / 4.0;
    (-1..=1).flat_map(move |a| (-1..=1).map(move |b| Point::new(ctr.x + a as f64 * q, ctr.y + b as f64 * q)))
}

pub fn stretch_estimates(map: &StretchMap, k: &CompactSetMask, grid_n: usize) -> StretchReport {
    let margin = 1e-9;
    let (sup1, sup2) = sup_displacement(map, grid_n);
    let mut lp_dx = BTreeMap::new();
    let mut lp_dy = BTreeMap::new();
    for (key, p) in [("1", 1.0), ("2", 2.0), ("inf", f64::INFINITY)] {
        let (a, b) = exact_lp_norms(map, p);
        lp_dx.insert(key.to_string(), a);
        lp_dy.insert(key.to_string(), b);
    }

    let cells: Vec<_> = k.cells().collect();
    let (min_k, excl_k, n_k) = cells
        .par_iter()
        .map(|&c| {
            let mut mn = f64::INFINITY;
            let (mut ex, mut cnt) = (0, 0);
            for p in cell_samples(k, c) {
                if map.near_kink(p, margin) {
                    ex += 1;
                    continue;
                }
                cnt += 1;
                mn = mn.min(map.jacobian_unchecked(p).determinant());
            }
            (mn, ex, cnt)
        })
        .reduce(|| (f64::INFINITY, 0, 0), |a, b| (a.0.min(b.0), a.1 + b.1, a.2 + b.2));

    let h = 1.0 / grid_n as f64;
    let (min_g, ratio, excl_g, n_g) = (0..grid_n)
        .into_par_iter()
        .map(|j| {
            let mut mn = f64::INFINITY;
            let mut r: f64 = 0.0;
            let (mut ex, mut cnt) = (0, 0);
            for i in 0..grid_n {
                let p = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if map.near_kink(p, margin) {
                    ex += 1;
                    continue;
                }
                cnt += 1;
                let jac = map.jacobian_unchecked(p);
                let det = jac.determinant();
                mn = mn.min(det);
                if !map.in_strips(p) {
                    r = r.max(jac.norm() / det);
                }
            }
            (mn, r, ex, cnt)
        })
        .reduce(
            || (f64::INFINITY, 0.0, 0, 0),
            |a, b| (a.0.min(b.0), a.1.max(b.1), a.2 + b.2, a.3 + b.3),
        );

    StretchReport {
        sup_disp: sup1.max(sup2),
        sup_phi1: sup1,
        sup_phi2: sup2,
        lp_dx_phi2: lp_dx,
        lp_dy_phi2_minus1: lp_dy,
        min_det_on_k: min_k,
        min_det_global: min_g,
        max_grad_over_det_off_strips: ratio,
        tau_used: map.tau,
        delta_used: map.family.delta,
        n: map.family.n(),
        m: map.family.m(),
        samples: n_k + n_g,
        kink_exclusions: excl_k + excl_g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fd_jacobian;
    use crate::mask::DyadicLevel;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_s1() -> StretchMap {
        let fam = StripFamily { delta: 0.25, horizontal: vec![Pl1d::constant(0.5)], vertical: vec![] };
        StretchMap::new_unchecked(fam, 0.1, 0.0)
    }

    fn sample_family() -> StripFamily {
        StripFamily {
            delta: 1.0 / 64.0,
            horizontal: vec![
                Pl1d::through_points(&[(0.2, 0.7), (0.4, 0.75), (0.6, 0.7)]),
                Pl1d::through_points(&[(0.1, 0.3), (0.5, 0.2), (0.8, 0.35)]),
            ],
            vertical: vec![Pl1d::through_points(&[(0.3, 0.5), (0.6, 0.6)])],
        }
    }

    #[test]
    fn empty_family_is_identity() {
        let s = StretchMap::new_unchecked(StripFamily::empty(0.125), 0.3, 0.0);
        let p = Point::new(0.37, 0.81);
        assert_eq!(s.eval(p).unwrap(), p);
        assert_eq!(s.jacobian(p).unwrap(), Mat2::identity());
    }

    #[test]
    fn example_s1_values() {
        let s = example_s1();
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            assert_abs_diff_eq!(s.phi2(x, 0.0), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.phi2(x, 1.0), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.phi2(x, 0.5), 0.5, epsilon = 1e-15);
        }
        let p = s.eval(Point::new(0.5, 0.5)).unwrap();
        assert_abs_diff_eq!(p.x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.5, epsilon = 1e-15);
        let j = s.jacobian(Point::new(0.3, 0.6)).unwrap();
        assert_abs_diff_eq!(j[(1, 1)], 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(j.determinant(), 1.1, epsilon = 1e-12);
    }

    #[test]
    fn outside_and_single_strip_dets() {
        let s = StretchMap::new_unchecked(sample_family(), 0.1, 0.01);
        let (ah, av) = s.coefficients();
        let out = s.jacobian(Point::new(0.9, 0.5)).unwrap();
        assert_abs_diff_eq!(out, Mat2::new(av, 0.0, 0.0, ah), epsilon = 1e-15);
        assert!(out.determinant() >= 1.0 - 16.0 * 0.1 * 0.1);
        // flat part of the lower graph: x beyond its last breakpoint
        let inside = s.jacobian(Point::new(0.9, 0.355)).unwrap();
        assert_abs_diff_eq!(inside.determinant(), av * (ah + 0.2), epsilon = 1e-12);
    }

    #[test]
    fn boundary_identities() {
        let s = StretchMap::new_unchecked(sample_family(), 0.1, 0.01);
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            assert_eq!(s.phi1(0.0, t), 0.0);
            assert_abs_diff_eq!(s.phi1(1.0, t), 1.0, epsilon = 1e-15);
            assert_eq!(s.phi2(t, 0.0), 0.0);
            assert_abs_diff_eq!(s.phi2(t, 1.0), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn exact_jacobian_matches_fd_with_second_order() {
        let s = StretchMap::new_unchecked(sample_family(), 0.1, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 200 {
            let p = Point::new(rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
            if s.near_kink(p, 2e-3) {
                continue;
            }
            let ex = s.jacobian(p).unwrap();
            let e3 = (fd_jacobian(&s, p, 1e-3).unwrap() - ex).abs().max();
            let e4 = (fd_jacobian(&s, p, 1e-4).unwrap() - ex).abs().max();
            // piecewise linear away from kinks: FD is exact up to rounding
            assert!(e3 < 1e-9 && e4 < 1e-9, "{e3} {e4}");
            checked += 1;
        }
    }

    #[test]
    fn on_kink_is_an_error() {
        let s = example_s1();
        assert!(matches!(s.jacobian(Point::new(0.4, 0.75)), Err(Error::KinkLineSingularity(..))));
    }

    #[test]
    fn exact_norms_agree_with_quadrature() {
        let fam = disjointify(&sample_family());
        let s = StretchMap::new_unchecked(fam, 0.1, 0.01);
        let n = 1024;
        let h = 1.0 / n as f64;
        let (mut ax, mut ay) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let p = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let jac = s.jacobian_unchecked(p);
                ax += jac[(1, 0)].powi(2) * h * h;
                ay += (jac[(1, 1)] - 1.0).powi(2) * h * h;
            }
        }
        let (ex, ey) = exact_lp_norms(&s, 2.0);
        assert_abs_diff_eq!(ax.sqrt(), ex, epsilon = 5e-3);
        assert_abs_diff_eq!(ay.sqrt(), ey, epsilon = 5e-3);
    }

    #[test]
    fn monotone_in_each_variable() {
        let s = StretchMap::new_unchecked(disjointify(&sample_family()), 0.1, 0.01);
        for k in 0..20 {
            let x = k as f64 / 19.0;
            let mut prev = -1.0;
            for j in 0..=400 {
                let y = j as f64 / 400.0;
                let v = s.phi2(x, y);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn gate_rejects_large_tau() {
        let l = DyadicLevel::new(5).unwrap();
        let m = CompactSetMask::from_cells(l, (0..16).map(|i| (i, i))).unwrap();
        let err = stretch_mask(&m, 1.0).unwrap_err();
        assert!(matches!(err, Error::SmallnessViolated(ref s) if s.contains("1/32")), "{err}");
    }

    #[test]
    fn small_mask_builds_and_stretches() {
        let l = DyadicLevel::new(6).unwrap();
        let m = CompactSetMask::from_cells(l, [(10, 10), (11, 10), (40, 50), (41, 51)]).unwrap();
        let s = stretch_mask(&m, 0.1).unwrap();
        let r = stretch_estimates(&s, &m, 64);
        assert!(r.min_det_on_k >= 1.1 - 1e-9, "{r:?}");
        assert!(r.sup_phi2 <= 16.0 * 0.1 * m.measure().sqrt());
    }
}
