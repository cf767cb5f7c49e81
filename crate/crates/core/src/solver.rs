//! The two assembly pipelines: the iterated stretching for small `Lᵖ` data,
//! its extension to general `Lᵖ` data through a Moser flow, and the `L∞`
//! construction. Also the grid-scale obstruction to `C¹` solutions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryCorrectedMap;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::map::{jacobian_ae, Composition, Identity, InvertibleMap, PlanarMap, Region};
use crate::mask::{CompactSetMask, DyadicLevel};
use crate::moser::{convolve, mollify_and_lift, superlevel_defect_set, MoserMap, MoserReport};
use crate::verify::{self, cell_det_check};
use crate::{Mat2, Point};

/// Constant of the stretch estimates used in the `τ₀` and `ε₀` conditions.
pub const STRETCH_C: f64 = 16.0;
/// Smallness constant of the stretch estimates.
pub const STRETCH_SMALL_C: f64 = 1.0 / 32.0;
pub const MOSER_STEPS: usize = 64;

/// `λ` and the smallest `τ₀ ≥ 1` with `C^{1/(q-1)}(1 + Cτ₀) ≤ (1+τ₀)^{1+λ}`.
pub fn choose_tau0(p: f64, q: f64, c: f64) -> Result<(f64, f64)> {
    let infeasible = || Error::InfeasibleExponents { p, q };
    if !(q > 1.0 && q < (p + 1.0) / 2.0 && c > 0.0) {
        return Err(infeasible());
    }
    let room = (p - 1.0) / (2.0 * (q - 1.0)) - 1.0;
    if !(room > 0.0) {
        return Err(infeasible());
    }
    // the admissible range is 0 < λ < min(room, 1)
    let lambda = room.min(1.0) / 2.0;
    let ok = |t: f64| (1.0 + lambda) * (1.0 + t).ln() >= c.ln() / (q - 1.0) + (1.0 + c * t).ln();
    if ok(1.0) {
        return Ok((lambda, 1.0));
    }
    let mut hi = 2.0;
    while !ok(hi) {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(infeasible());
        }
    }
    let mut lo = (hi / 2.0).max(1.0);
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lambda, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LpConfig {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    /// The certified `τ₀`, reported but not executed.
    pub tau0: f64,
    /// The `τ` each iterate is built with.
    pub tau_exec: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub max_iter: usize,
    pub measure_tol: f64,
    /// `|M_{i+1}|/|M_i|` above this for three iterations in a row is a stall.
    pub stall_ratio: f64,
    /// Side of the sample grid for global determinant and increment sweeps.
    pub grid_n: usize,
    /// Optional bound on `‖f‖_{Lᵖ}`; the smallness gates of each iterate
    /// apply regardless.
    pub norm_gate: Option<f64>,
}

impl LpConfig {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let (lambda, tau0) = choose_tau0(p, q, STRETCH_C)?;
        Ok(Self {
            p,
            q,
            lambda,
            tau0,
            tau_exec: 1.0,
            c: STRETCH_C,
            max_iter: 30,
            measure_tol: 1e-4,
            stall_ratio: 1.0,
            grid_n: 128,
            norm_gate: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q, l) = (self.p, self.q, self.lambda);
        if !(q > 1.0 && q < (p + 1.0) / 2.0) || !(l > 0.0 && 2.0 * (1.0 + l) * (q - 1.0) < p - 1.0) {
            return Err(Error::InfeasibleExponents { p, q });
        }
        let c = self.c;
        if !(self.tau0 >= 1.0)
            || c.ln() / (q - 1.0) + (1.0 + c * self.tau0).ln() > (1.0 + l) * (1.0 + self.tau0).ln() + 1e-12
        {
            return Err(Error::InvalidInput(format!("tau0 = {} does not satisfy the largeness condition", self.tau0)));
        }
        if !(self.tau_exec > 0.0) || self.max_iter == 0 || self.grid_n < 8 || !(self.measure_tol >= 0.0) {
            return Err(Error::InvalidInput("tau_exec, max_iter, grid_n or measure_tol out of range".into()));
        }
        Ok(())
    }
}

/// Cells where `f / det ≥ 1/2` at the centers.
pub fn superlevel_mask(f: &ScalarField, det: &ScalarField) -> Result<CompactSetMask> {
    f.same_grid(det)?;
    let level = f.require_level()?;
    let n = f.n();
    let cells = (0..n * n)
        .filter(|&k| {
            let (a, d) = (f.samples()[k], det.samples()[k]);
            a > 0.0 && 2.0 * a >= d
        })
        .map(|k| ((k % n) as u32, (k / n) as u32));
    CompactSetMask::from_cells(level, cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationRecord {
    pub i: usize,
    pub measure_mi: f64,
    /// Smallest sampled `det ∇φ_i` on `M_i`.
    pub min_det_on_mi: f64,
    /// Smallest sampled `det ∇(φ_i ∘ ⋯ ∘ φ_1)`.
    pub min_det_global: f64,
    /// `‖∇(φ_i ∘ ⋯ ∘ φ_1) - ∇(φ_{i-1} ∘ ⋯ ∘ φ_1)‖_{L^q}`.
    pub w1q_increment: f64,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub certified_tau0: f64,
    pub tau_used: f64,
    pub stop_reason: String,
    /// Measure of the last `A_i` left untreated.
    pub residual_measure: f64,
    /// `|M_i|` for every set formed, including the one that stopped the loop.
    pub measures: Vec<f64>,
    #[serde(skip)]
    pub masks: Vec<CompactSetMask>,
}

impl IterationTrace {
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    /// `|M_{i+1}| / |M_i|` over consecutive sets.
    pub fn decay_ratios(&self) -> Vec<f64> {
        self.measures.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// A cell of `A_i`, followed through the running composition.
struct Tracked {
    fval: f64,
    det: f64,
    center: Point,
    subs: Vec<Point>,
}

fn sub_centers(mask: &CompactSetMask, c: (u32, u32)) -> Vec<Point> {
    let (lo, _) = mask.cell_rect(c);
    let d = mask.delta() / 4.0;
    (0..16).map(|k| Point::new(lo.x + ((k % 4) as f64 + 0.5) * d, lo.y + ((k / 4) as f64 + 0.5) * d)).collect()
}

/// Cells at `level` hit by any of `points`.
fn rasterize(level: DyadicLevel, points: impl Iterator<Item = Point>) -> CompactSetMask {
    let mut m = CompactSetMask::empty(level);
    for p in points {
        let q = Point::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0));
        if let Some(c) = CompactSetMask::cell_of(level, q) {
            m.insert(c);
        }
    }
    m
}

fn gate(i: usize, measure: f64, e: Error) -> Error {
    if e.is_gate() {
        Error::GateViolated(format!("iteration {i} with |M_i| = {measure:e}: {e}"))
    } else {
        e
    }
}

fn compose_all(factors: Vec<Arc<dyn PlanarMap>>) -> Result<Arc<dyn PlanarMap>> {
    let mut it = factors.into_iter();
    let Some(first) = it.next() else {
        return Ok(Arc::new(Identity::on(Region::unit_square())));
    };
    let mut c = Composition::new(first);
    for f in it {
        c = c.then(f)?;
    }
    Ok(if c.depth() == 1 { c.factors()[0].clone() } else { Arc::new(c) })
}

/// Iterated stretching of the sets `M_i`, truncated once `|M_i|` drops below
/// `measure_tol` or after `max_iter` iterates.
pub fn solve_lp_small(f: &ScalarField, cfg: &LpConfig) -> Result<(Arc<dyn PlanarMap>, IterationTrace)> {
    cfg.validate()?;
    let level = f.require_level()?;
    if let Some(g) = cfg.norm_gate {
        let norm = f.lp_norm(cfg.p);
        if norm > g {
            return Err(Error::GateViolated(format!("|f|_Lp = {norm} exceeds the configured gate {g}")));
        }
    }
    let n = f.n();
    let a1 = superlevel_mask(f, &ScalarField::constant(n, 1.0)?)?;
    let mut alive: Vec<Tracked> = a1
        .cells()
        .map(|c| Tracked {
            fval: f.get(c.0 as usize, c.1 as usize),
            det: 1.0,
            center: a1.cell_center(c),
            subs: sub_centers(&a1, c),
        })
        .collect();

    let gn = cfg.grid_n;
    let h2 = 1.0 / (gn * gn) as f64;
    let mut grid: Vec<(Point, Mat2)> =
        verify::grid_points(Point::new(0.0, 0.0), Point::new(1.0, 1.0), gn).into_iter().map(|p| (p, Mat2::identity())).collect();

    let mut factors: Vec<Arc<dyn PlanarMap>> = Vec::new();
    let mut trace = IterationTrace {
        records: Vec::new(),
        certified_tau0: cfg.tau0,
        tau_used: cfg.tau_exec,
        stop_reason: "maxIter reached".into(),
        residual_measure: 0.0,
        measures: Vec::new(),
        masks: Vec::new(),
    };
    let mut stalled = 0;
    for i in 1..=cfg.max_iter {
        if alive.is_empty() {
            trace.stop_reason = "A_i empty".into();
            break;
        }
        let mi = if i == 1 { a1.clone() } else { rasterize(level, alive.iter().flat_map(|t| t.subs.iter().copied())) };
        let measure = mi.measure();
        trace.measures.push(measure);
        trace.residual_measure = alive.len() as f64 / (n * n) as f64;
        if measure < cfg.measure_tol {
            trace.stop_reason = "|M_i| below measureTol".into();
            break;
        }
        if let Some(prev) = trace.records.last() {
            if measure / prev.measure_mi > cfg.stall_ratio {
                stalled += 1;
                if stalled >= 3 {
                    return Err(Error::DecayStalled(i));
                }
            } else {
                stalled = 0;
            }
        }
        let bmap = BoundaryCorrectedMap::build(&mi, cfg.tau_exec).map_err(|e| gate(i, measure, e))?;
        let phi: Arc<dyn PlanarMap> = Arc::new(bmap.on_unit_square());
        let (min_on_mi, _, _) = verify::min_det_on_mask(&*phi, &mi, Point::new(0.0, 0.0), Point::new(1.0, 1.0));

        let stepped: Vec<((Point, Mat2), f64)> = grid
            .par_iter()
            .map(|&(p, j)| {
                let jn = jacobian_ae(&*phi, p)? * j;
                Ok(((phi.eval(p)?, jn), (jn - j).norm().powf(cfg.q)))
            })
            .collect::<Result<_>>()?;
        let incr = (stepped.iter().map(|s| s.1).sum::<f64>() * h2).powf(1.0 / cfg.q);
        grid = stepped.into_iter().map(|s| s.0).collect();
        let min_global = grid.iter().map(|g| g.1.determinant()).fold(f64::INFINITY, f64::min);

        alive.par_iter_mut().try_for_each(|t| -> Result<()> {
            t.det *= jacobian_ae(&*phi, t.center)?.determinant();
            t.center = phi.eval(t.center)?;
            for s in t.subs.iter_mut() {
                *s = phi.eval(*s)?;
            }
            Ok(())
        })?;
        alive.retain(|t| 2.0 * t.fval >= t.det);

        factors.push(phi);
        trace.records.push(IterationRecord {
            i,
            measure_mi: measure,
            min_det_on_mi: min_on_mi,
            min_det_global: min_global,
            w1q_increment: incr,
            depth: factors.len(),
        });
        trace.masks.push(mi);
        trace.residual_measure = alive.len() as f64 / (n * n) as f64;
    }
    if alive.is_empty() && trace.stop_reason == "maxIter reached" {
        trace.stop_reason = "A_i empty".into();
    }
    Ok((compose_all(factors)?, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub mode: String,
    pub tau0: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    /// `|A_ε|` in the `Lᵖ` pipeline, `|A|` in the `L∞` pipeline.
    pub defect_measure: f64,
    pub iterations: usize,
    /// Fraction of cells with `det ∇φ ≥ f - 1e-9` at the center.
    pub cell_fraction: f64,
    pub min_margin: f64,
    pub moser: Option<MoserReport>,
}

pub struct Solution {
    pub map: Arc<dyn PlanarMap>,
    pub trace: IterationTrace,
    pub report: SolveReport,
}

const CELL_TOL: f64 = 1e-9;

fn check_integral(f: &ScalarField) -> Result<()> {
    let integral = f.integral();
    if !(integral < 1.0) {
        return Err(Error::IntegralCondition { integral, area: 1.0 });
    }
    Ok(())
}

/// Mollifier widths tried, from four cells down to sub-cell (no smoothing).
fn widths(n: usize) -> [f64; 4] {
    let h = 1.0 / n as f64;
    [4.0 * h, 2.0 * h, h, 0.5 * h]
}

/// `φ_ε ∘ ψ_ε`: a Moser flow for the mollified `f_ε`, followed by the small-data
/// iteration on the transported defect `f/f_ε · χ_{A_ε}` pulled back by `ψ_ε`.
/// The width is halved until the iteration's gates pass.
pub fn solve_lp(f: &ScalarField, p: f64, q: f64, delta: f64) -> Result<Solution> {
    check_integral(f)?;
    let cfg = LpConfig::new(p, q)?;
    let n = f.n();
    let mut last_err = None;
    for eps in widths(n) {
        let mf = mollify_and_lift(f, delta, eps)?;
        let a_eps = superlevel_defect_set(f, &mf.result, delta)?;
        let candidate = CompactSetMask::from_cells(
            a_eps.level(),
            a_eps.cells().filter(|&(i, j)| 2.0 * f.get(i as usize, j as usize) >= mf.result.get(i as usize, j as usize)),
        )?;
        if !candidate.is_empty() {
            if let Err(e) = BoundaryCorrectedMap::build(&candidate, cfg.tau_exec) {
                last_err = Some(e);
                continue;
            }
        }
        let psi = MoserMap::build(&mf.result, MOSER_STEPS)?;
        let g = if candidate.is_empty() {
            ScalarField::constant(n, 0.0)?
        } else {
            let vals: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|k| {
                    let x = psi.eval_inverse(f.center(k % n, k / n))?;
                    let (i, j) = f.cell_of(x);
                    Ok(if a_eps.contains_cell((i as u32, j as u32)) { f.get(i, j) / mf.result.get(i, j) } else { 0.0 })
                })
                .collect::<Result<_>>()?;
            ScalarField::new(n, vals)?
        };
        let (small, trace) = match solve_lp_small(&g, &cfg) {
            Ok(r) => r,
            Err(e) if e.is_gate() => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let moser_rep = psi.report(&mf.result);
        let psi: Arc<dyn PlanarMap> = Arc::new(psi);
        let map: Arc<dyn PlanarMap> =
            if trace.records.is_empty() { psi } else { Arc::new(Composition::new(psi).then(small)?) };
        let (cell_fraction, min_margin) = cell_det_check(&*map, f, CELL_TOL)?;
        let report = SolveReport {
            mode: "lp".into(),
            tau0: cfg.tau_exec,
            epsilon: eps,
            delta: Some(delta),
            defect_measure: a_eps.measure(),
            iterations: trace.records.len(),
            cell_fraction,
            min_margin,
            moser: Some(moser_rep),
        };
        return Ok(Solution { map, trace, report });
    }
    Err(last_err.unwrap_or_else(|| Error::GateViolated("no mollifier width passed the gates".into())))
}

/// Constants of the `L∞` construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinfConstants {
    pub beta: f64,
    pub tau0: f64,
    pub eps0: f64,
    pub f_sup: f64,
}

/// `β`, `τ₀ = max{1, 2‖f‖∞/β - 1}` and the largest `ε₀` with
/// `(1 - Cτ₀√((F+1)ε₀))(β/2 + y) ≥ y` on `[0, F]` and the volume smallness
/// conditions, confirmed on a grid of `y`.
pub fn linf_constants(f: &ScalarField) -> Result<LinfConstants> {
    check_integral(f)?;
    let f_sup = f.max();
    let beta = 1.0 - f.integral();
    let tau0 = (2.0 * f_sup / beta - 1.0).max(1.0);
    let (c, small) = (STRETCH_C, STRETCH_SMALL_C);
    // the condition is affine in y, so y = F is the binding case
    let root = (beta / 2.0) / ((beta / 2.0 + f_sup) * c * tau0);
    let root = root.min(small / tau0).min(small.sqrt());
    let eps0 = root * root / (f_sup + 1.0);
    let lhs = 1.0 - c * tau0 * ((f_sup + 1.0) * eps0).sqrt();
    for k in 0..=1000 {
        let y = f_sup * k as f64 / 1000.0;
        if lhs * (beta / 2.0 + y) < y * (1.0 - 1e-12) {
            return Err(Error::EpsilonSearchFailed(format!("eps0 = {eps0:e} fails at y = {y}")));
        }
    }
    Ok(LinfConstants { beta, tau0, eps0, f_sup })
}

/// Mollification of `f` extended by 1, shifted to unit mass.
fn f_nu(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    let n = f.n();
    let conv = convolve(f, eps);
    let ones = convolve(&ScalarField::constant(n, 1.0)?, eps);
    let ext: Vec<f64> = conv.samples().iter().zip(ones.samples()).map(|(a, b)| a + (1.0 - b)).collect();
    let mass: f64 = ext.iter().sum::<f64>() / (n * n) as f64;
    ScalarField::new(n, ext.iter().map(|v| v + 1.0 - mass).collect())
}

/// `ψ ∘ φ` with `det ∇φ = f_ν` from a Moser flow and `ψ` stretching `φ(A)`
/// by `1 + τ₀`, where `A = {f_ν < β/2 + f}`.
pub fn solve_linf(f: &ScalarField) -> Result<Solution> {
    let k = linf_constants(f)?;
    let n = f.n();
    let level = f.require_level()?;
    let mut chosen = None;
    for eps in widths(n) {
        let fnu = f_nu(f, eps)?;
        if fnu.min() < k.beta / 2.0 - 1e-12 || fnu.max() > k.f_sup + 1.0 + 1e-12 {
            continue;
        }
        let defect = CompactSetMask::from_cells(
            level,
            (0..n * n)
                .filter(|&c| fnu.samples()[c] < k.beta / 2.0 + f.samples()[c])
                .map(|c| ((c % n) as u32, (c / n) as u32)),
        )?;
        if defect.measure() <= k.eps0 {
            chosen = Some((eps, fnu, defect));
            break;
        }
    }
    let (eps, fnu, defect) = chosen.ok_or_else(|| {
        Error::EpsilonSearchFailed(format!("no mollifier width leaves |A| <= eps0 = {:e}", k.eps0))
    })?;
    let phi = MoserMap::build(&fnu, MOSER_STEPS)?;
    let moser_rep = phi.report(&fnu);
    let phi: Arc<dyn PlanarMap> = Arc::new(phi);
    let mut trace = IterationTrace {
        records: Vec::new(),
        certified_tau0: k.tau0,
        tau_used: k.tau0,
        stop_reason: "single stretch".into(),
        residual_measure: 0.0,
        measures: Vec::new(),
        masks: Vec::new(),
    };
    let map: Arc<dyn PlanarMap> = if defect.is_empty() {
        trace.stop_reason = "A empty".into();
        phi
    } else {
        let mut pts = Vec::new();
        for c in defect.cells() {
            for s in sub_centers(&defect, c) {
                pts.push(phi.eval(s)?);
            }
        }
        let m = rasterize(level, pts.into_iter());
        let psi = BoundaryCorrectedMap::build(&m, k.tau0).map_err(|e| gate(1, m.measure(), e))?;
        let psi: Arc<dyn PlanarMap> = Arc::new(psi.on_unit_square());
        let (min_on, _, _) = verify::min_det_on_mask(&*psi, &m, Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        trace.measures.push(m.measure());
        trace.records.push(IterationRecord {
            i: 1,
            measure_mi: m.measure(),
            min_det_on_mi: min_on,
            min_det_global: f64::NAN,
            w1q_increment: f64::NAN,
            depth: 2,
        });
        trace.masks.push(m);
        Arc::new(Composition::new(phi).then(psi)?)
    };
    let (cell_fraction, min_margin) = cell_det_check(&*map, f, CELL_TOL)?;
    let report = SolveReport {
        mode: "linf".into(),
        tau0: k.tau0,
        epsilon: eps,
        delta: None,
        defect_measure: defect.measure(),
        iterations: trace.records.len(),
        cell_fraction,
        min_margin,
        moser: Some(moser_rep),
    };
    Ok(Solution { map, trace, report })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SharpnessReport {
    pub net_points: usize,
    pub mask_measure: f64,
    /// Largest distance from a sample to the net.
    pub eps_net: f64,
    /// Lipschitz constant assumed for a continuous determinant.
    pub lambda: f64,
    /// `∫ max(2 - Λ dist(x, net), 0)`.
    pub envelope_integral: f64,
    pub contradiction: bool,
}

/// A continuous `det ∇φ` with `det ≥ 2` on the cell centers of `mask` and
/// modulus `Λ = 1/(2ε_net)` must dominate `2 - Λ dist(·, net)`; its integral
/// exceeds `|Ω| = 1`, which no self-map fixing the boundary can have.
pub fn c1_sharpness_demo(mask: &CompactSetMask, sample_n: usize) -> SharpnessReport {
    let side = mask.level().side() as i64;
    let d = mask.delta();
    let pts = verify::grid_points(Point::new(0.0, 0.0), Point::new(1.0, 1.0), sample_n);
    let nearest = |p: Point| -> f64 {
        let ci = ((p.x / d).floor() as i64).clamp(0, side - 1);
        let cj = ((p.y / d).floor() as i64).clamp(0, side - 1);
        let mut best = f64::INFINITY;
        let mut r = 0i64;
        // once a hit at distance `best` is known, rings beyond best/d + 1 cannot improve it
        while r <= side && (r as f64 - 1.0) * d <= best {
            for i in (ci - r)..=(ci + r) {
                for j in (cj - r)..=(cj + r) {
                    if (i - ci).abs().max((j - cj).abs()) != r || i < 0 || j < 0 || i >= side || j >= side {
                        continue;
                    }
                    if mask.contains_cell((i as u32, j as u32)) {
                        best = best.min((mask.cell_center((i as u32, j as u32)) - p).norm());
                    }
                }
            }
            r += 1;
        }
        best
    };
    let dists: Vec<f64> = pts.par_iter().map(|&p| nearest(p)).collect();
    let eps_net = dists.iter().copied().fold(0.0, f64::max);
    let lambda = 1.0 / (2.0 * eps_net);
    let h2 = 1.0 / (sample_n * sample_n) as f64;
    let envelope_integral = dists.iter().map(|&r| (2.0 - lambda * r).max(0.0)).sum::<f64>() * h2;
    SharpnessReport {
        net_points: mask.len(),
        mask_measure: mask.measure(),
        eps_net,
        lambda,
        envelope_integral,
        contradiction: envelope_integral > 1.0,
    }
}
