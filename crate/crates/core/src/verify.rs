//! Sampled verification of planar maps: determinant bounds, gradient norms,
//! the distributional Jacobian, bi-Lipschitz ratios and measure transport.
//!
//! Sums are accumulated sequentially over collected samples so reports are
//! bit-identical across runs and thread counts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::map::{jacobian_ae, PlanarMap, Region};
use crate::mask::CompactSetMask;
use crate::{Mat2, Point, Vec2};

pub const REPORT_SCHEMA: u32 = 1;

/// Samples closer than this to a registered kink are treated as on it.
pub const KINK_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JacobianReport {
    pub schema: u32,
    pub min_det_on_mask: f64,
    pub min_det_global: f64,
    pub sup_displacement: f64,
    /// `‖∇φ - I‖_{Lᵖ}` with the Frobenius norm, keyed by `p`.
    pub lp_norms: BTreeMap<String, f64>,
    pub bi_lip_lower: f64,
    pub bi_lip_upper: f64,
    /// `𝒥_φ[η] - ∫ η det ∇φ` for the fixed bump suite.
    pub distributional_residuals: Vec<f64>,
    pub sample_count: usize,
    pub kink_exclusions: usize,
}

fn rect_of(region: &Region) -> (Point, Point) {
    region.bounding_box().unwrap_or((Point::new(0.0, 0.0), Point::new(1.0, 1.0)))
}

fn lerp(lo: Point, hi: Point, u: Point) -> Point {
    Point::new(lo.x + (hi.x - lo.x) * u.x, lo.y + (hi.y - lo.y) * u.y)
}

/// Midpoints of an `n × n` grid over `[lo, hi]`, row-major from the bottom.
pub fn grid_points(lo: Point, hi: Point, n: usize) -> Vec<Point> {
    (0..n * n)
        .map(|k| lerp(lo, hi, Point::new(((k % n) as f64 + 0.5) / n as f64, ((k / n) as f64 + 0.5) / n as f64)))
        .collect()
}

/// Tensor bump `∏ exp(1 - 1/(1 - s²))`, `s = (x - c)/r`, with peak value 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: [f64; 2],
    pub radius: f64,
}

fn bump1(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - s * s;
    let v = (1.0 - 1.0 / d).exp();
    (v, v * (-2.0 * s / (d * d)))
}

impl TestBump {
    pub fn value_grad(&self, p: Point) -> (f64, Vec2) {
        let r = self.radius;
        let (a, da) = bump1((p.x - self.center[0]) / r);
        let (b, db) = bump1((p.y - self.center[1]) / r);
        (a * b, Vec2::new(da * b / r, a * db / r))
    }

    fn inside(&self, lo: Point, hi: Point) -> bool {
        let (c, r) = (self.center, self.radius);
        c[0] - r > lo.x && c[0] + r < hi.x && c[1] - r > lo.y && c[1] + r < hi.y
    }
}

/// The fixed suite on the unit square.
pub fn bump_suite() -> [TestBump; 5] {
    [
        TestBump { center: [0.5, 0.5], radius: 0.3 },
        TestBump { center: [0.3, 0.3], radius: 0.2 },
        TestBump { center: [0.7, 0.3], radius: 0.2 },
        TestBump { center: [0.3, 0.7], radius: 0.2 },
        TestBump { center: [0.7, 0.7], radius: 0.25 },
    ]
}

/// Quadrature samples of `(φ, ∇φ)` on the midpoint grid of the domain.
pub struct Samples {
    pub h2: f64,
    pub points: Vec<Point>,
    pub values: Vec<Point>,
    pub jacobians: Vec<Mat2>,
    pub kink_exclusions: usize,
}

pub fn sample_map(map: &dyn PlanarMap, n: usize) -> Result<Samples> {
    let (lo, hi) = rect_of(&map.domain());
    let points = grid_points(lo, hi, n);
    let res: Vec<(Point, Mat2, bool)> = points
        .par_iter()
        .map(|&p| {
            let near = map.near_kink(p, KINK_MARGIN);
            Ok((map.eval(p)?, jacobian_ae(map, p)?, near))
        })
        .collect::<Result<_>>()?;
    let kink_exclusions = res.iter().filter(|r| r.2).count();
    let h2 = (hi.x - lo.x) * (hi.y - lo.y) / (n * n) as f64;
    Ok(Samples {
        h2,
        values: res.iter().map(|r| r.0).collect(),
        jacobians: res.iter().map(|r| r.1).collect(),
        points,
        kink_exclusions,
    })
}

/// `-(1/2) ∫ ⟨adj ∇φ · φ, ∇η⟩` by midpoint quadrature.
pub fn distributional_jacobian_bump(s: &Samples, eta: &TestBump) -> f64 {
    let mut acc = 0.0;
    for ((p, v), j) in s.points.iter().zip(&s.values).zip(&s.jacobians) {
        let (_, g) = eta.value_grad(*p);
        if g.x == 0.0 && g.y == 0.0 {
            continue;
        }
        let adj = crate::map::adjugate(j);
        acc += (adj * v.coords).dot(&g);
    }
    -0.5 * acc * s.h2
}

/// `∫ η w` against per-sample weights.
pub fn integrate_against(s: &Samples, eta: &TestBump, w: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for (k, p) in s.points.iter().enumerate() {
        let (e, _) = eta.value_grad(*p);
        if e != 0.0 {
            acc += e * w(k);
        }
    }
    acc * s.h2
}

/// Distributional Jacobian against a grid field on the unit square, with
/// `∇η` by central differences; `η` must vanish on the outermost cells.
pub fn distributional_jacobian(map: &dyn PlanarMap, eta: &ScalarField) -> Result<f64> {
    let n = eta.n();
    if (0..n).any(|k| eta.get(k, 0) != 0.0 || eta.get(k, n - 1) != 0.0 || eta.get(0, k) != 0.0 || eta.get(n - 1, k) != 0.0) {
        return Err(Error::EtaSupportViolation);
    }
    let h = eta.h();
    let terms: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                return Ok(0.0);
            }
            let g = Vec2::new(
                (eta.get(i + 1, j) - eta.get(i - 1, j)) / (2.0 * h),
                (eta.get(i, j + 1) - eta.get(i, j - 1)) / (2.0 * h),
            );
            if g.x == 0.0 && g.y == 0.0 {
                return Ok(0.0);
            }
            let p = eta.center(i, j);
            let adj = crate::map::adjugate(&jacobian_ae(map, p)?);
            Ok((adj * map.eval(p)?.coords).dot(&g))
        })
        .collect::<Result<_>>()?;
    Ok(-0.5 * terms.iter().sum::<f64>() * h * h)
}

/// Weak-form comparison for one bump: `(𝒥_φ[η], ∫ f η, ‖η‖∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeakCheck {
    pub bump: TestBump,
    pub weak_jacobian: f64,
    pub f_integral: f64,
    pub eta_sup: f64,
}

impl WeakCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.weak_jacobian >= self.f_integral - tol * self.eta_sup
    }
}

/// `𝒥_φ[η] ≥ ∫ f η` for the bump suite, on an `n × n` quadrature grid over the
/// unit square; `f` is evaluated piecewise constant.
pub fn weak_form_checks(map: &dyn PlanarMap, f: &ScalarField, n: usize) -> Result<Vec<WeakCheck>> {
    let s = sample_map(map, n)?;
    let fv: Vec<f64> = s.points.iter().map(|&p| f.value_at(p)).collect();
    let (lo, hi) = rect_of(&map.domain());
    let mut out = Vec::new();
    for b in bump_suite() {
        if !b.inside(lo, hi) {
            return Err(Error::EtaSupportViolation);
        }
        out.push(WeakCheck {
            bump: b,
            weak_jacobian: distributional_jacobian_bump(&s, &b),
            f_integral: integrate_against(&s, &b, |k| fv[k]),
            eta_sup: 1.0,
        });
    }
    Ok(out)
}

/// Extremes of `|φ(x) - φ(y)| / |x - y|` over seeded random pairs: half
/// uniform, half at distance about `near`.
pub fn bilipschitz_estimate(map: &dyn PlanarMap, pair_count: usize, near: f64, seed: u64) -> Result<(f64, f64)> {
    let (lo, hi) = rect_of(&map.domain());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(pair_count);
    let draw = |rng: &mut ChaCha8Rng| lerp(lo, hi, Point::new(rng.gen(), rng.gen()));
    while pairs.len() < pair_count {
        let a = draw(&mut rng);
        let b = if pairs.len() % 2 == 0 {
            draw(&mut rng)
        } else {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = near * rng.gen_range(0.5..1.5);
            let scale = (hi.x - lo.x).max(hi.y - lo.y);
            Point::new(a.x + r * scale * t.cos(), a.y + r * scale * t.sin())
        };
        if b.x < lo.x || b.x > hi.x || b.y < lo.y || b.y > hi.y || (a - b).norm() < 1e-12 {
            continue;
        }
        pairs.push((a, b));
    }
    let ratios: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| Ok((map.eval(a)? - map.eval(b)?).norm() / (a - b).norm()))
        .collect::<Result<_>>()?;
    Ok((ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max)))
}

/// Smallest `det ∇φ` over the 3×3 interior samples of each mask cell, with
/// the mask laid over `[lo, hi]`. Returns `(min, kink exclusions, samples)`.
pub fn min_det_on_mask(map: &dyn PlanarMap, mask: &CompactSetMask, lo: Point, hi: Point) -> (f64, usize, usize) {
    let cells: Vec<_> = mask.cells().collect();
    let per_cell: Vec<(f64, usize, usize)> = cells
        .par_iter()
        .map(|&c| {
            let mut mn = f64::INFINITY;
            let (mut ex, mut n) = (0, 0);
            for u in crate::stretch::cell_samples(mask, c) {
                let p = lerp(lo, hi, u);
                if map.near_kink(p, KINK_MARGIN) {
                    ex += 1;
                    continue;
                }
                if let Ok(j) = map.jacobian(p) {
                    n += 1;
                    mn = mn.min(j.determinant());
                } else {
                    ex += 1;
                }
            }
            (mn, ex, n)
        })
        .collect();
    (
        per_cell.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        per_cell.iter().map(|r| r.1).sum(),
        per_cell.iter().map(|r| r.2).sum(),
    )
}

/// Fraction of cells of `f` whose center determinant is at least `f - tol`,
/// and the smallest margin `det - f`.
pub fn cell_det_check(map: &dyn PlanarMap, f: &ScalarField, tol: f64) -> Result<(f64, f64)> {
    let n = f.n();
    let margins: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            Ok(jacobian_ae(map, f.center(i, j))?.determinant() - f.get(i, j))
        })
        .collect::<Result<_>>()?;
    let ok = margins.iter().filter(|&&m| m >= -tol).count();
    Ok((ok as f64 / (n * n) as f64, margins.iter().copied().fold(f64::INFINITY, f64::min)))
}

pub fn jacobian_report(map: &dyn PlanarMap, mask: &CompactSetMask, grid_n: usize, q: f64) -> Result<JacobianReport> {
    let (lo, hi) = rect_of(&map.domain());
    let s = sample_map(map, grid_n)?;
    let dets: Vec<f64> = s.jacobians.iter().map(|j| j.determinant()).collect();
    let mut min_global = f64::INFINITY;
    for (d, p) in dets.iter().zip(&s.points) {
        if !map.near_kink(*p, KINK_MARGIN) {
            min_global = min_global.min(*d);
        }
    }
    let sup = s.points.iter().zip(&s.values).map(|(p, v)| (v - p).norm()).fold(0.0, f64::max);
    let dev: Vec<f64> = s.jacobians.iter().map(|j| (j - Mat2::identity()).norm()).collect();
    let mut lp = BTreeMap::new();
    for (key, p) in [("1".to_string(), 1.0), ("2".to_string(), 2.0), (format!("{q}"), q)] {
        let sum: f64 = dev.iter().map(|d| d.powf(p)).sum();
        lp.insert(key, (sum * s.h2).powf(1.0 / p));
    }
    lp.insert("inf".into(), dev.iter().copied().fold(0.0, f64::max));

    let (min_mask, mask_ex, mask_n) = min_det_on_mask(map, mask, lo, hi);

    let mut residuals = Vec::new();
    let unit = |b: TestBump| TestBump {
        center: [lo.x + (hi.x - lo.x) * b.center[0], lo.y + (hi.y - lo.y) * b.center[1]],
        radius: b.radius * (hi.x - lo.x).min(hi.y - lo.y),
    };
    for b in bump_suite().map(unit) {
        let weak = distributional_jacobian_bump(&s, &b);
        let strong = integrate_against(&s, &b, |k| dets[k]);
        residuals.push(weak - strong);
    }
    let near = 1.0 / grid_n as f64;
    let (bl, bu) = bilipschitz_estimate(map, 2000, near, 0x5eed)?;
    Ok(JacobianReport {
        schema: REPORT_SCHEMA,
        min_det_on_mask: min_mask,
        min_det_global: min_global,
        sup_displacement: sup,
        lp_norms: lp,
        bi_lip_lower: bl,
        bi_lip_upper: bu,
        distributional_residuals: residuals,
        sample_count: s.points.len() + mask_n,
        kink_exclusions: s.kink_exclusions + mask_ex,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PushforwardReport {
    /// Area of the rasterized image at level `l + 2`.
    pub raster: f64,
    /// `∫_mask det ∇φ`.
    pub quadrature: f64,
    /// Allowed disagreement: three raster cells per boundary edge of the mask.
    pub tolerance: f64,
}

impl PushforwardReport {
    pub fn consistent(&self) -> bool {
        (self.raster - self.quadrature).abs() <= self.tolerance
    }
}

/// Newton solve `φ(x) = y` from `x₀ = y`, or `None` when it leaves the domain
/// or stalls.
pub fn newton_inverse(map: &dyn PlanarMap, y: Point, start: Point) -> Option<Point> {
    let dom = map.domain();
    let mut x = start;
    for _ in 0..40 {
        if !dom.contains(x, 1e-12) {
            let (lo, hi) = rect_of(&dom);
            x = Point::new(x.x.clamp(lo.x, hi.x), x.y.clamp(lo.y, hi.y));
        }
        let r = map.eval(x).ok()? - y;
        if r.norm() < 1e-13 {
            return Some(x);
        }
        let j = jacobian_ae(map, x).ok()?;
        let step = j.try_inverse()? * r;
        x -= step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    let r = map.eval(x).ok()? - y;
    (r.norm() < 1e-9).then_some(x)
}

/// Image area of a unit-square mask under `map`.
pub fn pushforward_measure(map: &dyn PlanarMap, mask: &CompactSetMask) -> Result<PushforwardReport> {
    let d = mask.delta();
    let quad_terms: Vec<f64> = mask
        .cells()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&c| {
            let v: Vec<f64> = crate::stretch::cell_samples(mask, c)
                .map(|p| jacobian_ae(map, p).map(|j| j.determinant()))
                .collect::<Result<_>>()?;
            Ok(v.iter().sum::<f64>() / v.len() as f64 * d * d)
        })
        .collect::<Result<_>>()?;
    let quadrature: f64 = quad_terms.iter().sum();
    if mask.is_empty() {
        return Ok(PushforwardReport { raster: 0.0, quadrature, tolerance: 0.0 });
    }

    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in mask.cells() {
        let (a, b) = mask.cell_rect(c);
        for p in [a, b, Point::new(a.x, b.y), Point::new(b.x, a.y)] {
            let q = map.eval(p)?;
            lo = Point::new(lo.x.min(q.x), lo.y.min(q.y));
            hi = Point::new(hi.x.max(q.x), hi.y.max(q.y));
        }
    }
    let cell = d / 4.0;
    let pad = 2.0 * cell;
    let (x0, y0) = (lo.x - pad, lo.y - pad);
    let nx = ((hi.x - lo.x + 2.0 * pad) / cell).ceil() as usize;
    let ny = ((hi.y - lo.y + 2.0 * pad) / cell).ceil() as usize;
    let hits: Vec<bool> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let y = Point::new(x0 + ((k % nx) as f64 + 0.5) * cell, y0 + ((k / nx) as f64 + 0.5) * cell);
            newton_inverse(map, y, y).is_some_and(|x| mask.contains_point(x))
        })
        .collect();
    let raster = hits.iter().filter(|&&h| h).count() as f64 * cell * cell;
    let tolerance = 3.0 * mask.boundary_edges() as f64 * cell * cell;
    Ok(PushforwardReport { raster, quadrature, tolerance })
}

/// Per-cell determinant at the centers of an `n × n` grid, top row first.
pub fn det_csv(map: &dyn PlanarMap, n: usize) -> Result<String> {
    let (lo, hi) = rect_of(&map.domain());
    let pts = grid_points(lo, hi, n);
    let dets: Vec<f64> =
        pts.par_iter().map(|&p| jacobian_ae(map, p).map(|j| j.determinant())).collect::<Result<_>>()?;
    let mut s = String::new();
    for j in (0..n).rev() {
        let row: Vec<String> = (0..n).map(|i| format!("{}", dets[j * n + i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::StripFamily;
    use crate::map::{Affine, Identity};
    use crate::mask::DyadicLevel;
    use crate::pl::Pl1d;
    use crate::stretch::StretchMap;
    use approx::assert_abs_diff_eq;

    fn s1() -> StretchMap {
        let fam = StripFamily { delta: 0.25, horizontal: vec![Pl1d::constant(0.5)], vertical: vec![] };
        StretchMap::new_unchecked(fam, 0.1, 0.0)
    }

    #[test]
    fn identity_report() {
        let id = Identity::on(Region::unit_square());
        let l = DyadicLevel::new(3).unwrap();
        let m = CompactSetMask::from_cells(l, [(2, 3)]).unwrap();
        let r = jacobian_report(&id, &m, 64, 1.5).unwrap();
        assert_eq!(r.min_det_on_mask, 1.0);
        assert_eq!(r.min_det_global, 1.0);
        assert!(r.lp_norms.values().all(|&v| v == 0.0));
        assert_abs_diff_eq!(r.bi_lip_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bi_lip_upper, 1.0, epsilon = 1e-12);
        let again = jacobian_report(&id, &m, 64, 1.5).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn stretch_report_on_strip() {
        let l = DyadicLevel::new(3).unwrap();
        let m = CompactSetMask::from_cells(l, [(1, 4), (5, 3)]).unwrap();
        let r = jacobian_report(&s1(), &m, 64, 2.0).unwrap();
        assert_abs_diff_eq!(r.min_det_on_mask, 1.1, epsilon = 1e-12);
        assert!(r.bi_lip_upper <= 1.0 + 16.0 * 0.1);
    }

    #[test]
    fn weak_jacobian_of_identity_and_linear() {
        let b = bump_suite()[0];
        let id = Identity::on(Region::unit_square());
        let s = sample_map(&id, 256).unwrap();
        let int_eta = integrate_against(&s, &b, |_| 1.0);
        assert_abs_diff_eq!(distributional_jacobian_bump(&s, &b), int_eta, epsilon = 1e-6);
        let a = Affine::new(Mat2::new(1.2, 0.3, -0.1, 0.9), Vec2::new(0.1, 0.0), Region::unit_square());
        let s = sample_map(&a, 256).unwrap();
        let det = 1.2 * 0.9 + 0.03;
        assert_abs_diff_eq!(distributional_jacobian_bump(&s, &b), det * int_eta, epsilon = 1e-6);
    }

    #[test]
    fn weak_matches_strong_for_stretch() {
        let s = sample_map(&s1(), 512).unwrap();
        let dets: Vec<f64> = s.jacobians.iter().map(|j| j.determinant()).collect();
        for b in bump_suite() {
            let weak = distributional_jacobian_bump(&s, &b);
            let strong = integrate_against(&s, &b, |k| dets[k]);
            assert!((weak - strong).abs() < 1e-3, "{weak} {strong}");
        }
    }

    #[test]
    fn field_eta_support() {
        let id = Identity::on(Region::unit_square());
        let full = ScalarField::constant(8, 1.0).unwrap();
        assert_eq!(distributional_jacobian(&id, &full), Err(Error::EtaSupportViolation));
        let b = bump_suite()[0];
        let eta = ScalarField::from_fn(128, |p| b.value_grad(p).0).unwrap();
        let v = distributional_jacobian(&id, &eta).unwrap();
        assert_abs_diff_eq!(v, eta.integral(), epsilon = 1e-4);
    }

    #[test]
    fn scaling_bilipschitz_and_pushforward() {
        let sc = Affine::scaling(2.0);
        let (lo, hi) = bilipschitz_estimate(&Affine::new(sc.matrix, sc.offset, Region::unit_square()), 1000, 0.01, 1)
            .unwrap();
        assert_abs_diff_eq!(lo, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-12);
        let l = DyadicLevel::new(4).unwrap();
        let m = CompactSetMask::from_cells(l, [(3, 3), (3, 4), (8, 9)]).unwrap();
        let r = pushforward_measure(&Affine::scaling(2.0), &m).unwrap();
        assert!((r.raster - 4.0 * m.measure()).abs() <= 0.02 * 4.0 * m.measure(), "{r:?}");
        assert!(r.consistent());
        let id = pushforward_measure(&Identity::on(Region::unit_square()), &m).unwrap();
        assert_abs_diff_eq!(id.raster, m.measure(), epsilon = 1e-12);
    }
}
