//! Mollification and an approximate Moser-flow solver for `det ∇ψ = f`.
//!
//! With `ρ_t = (1-t) f + t` and `div w = f - 1`, the flow of
//! `v_t = w / ρ_t` started at the identity satisfies
//! `ρ_t(Φ_t) det ∇Φ_t = f`, hence `det ∇Φ₁ = f`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::map::{check_domain, InvertibleMap, MapKind, PlanarMap, Region};
use crate::mask::CompactSetMask;
use crate::{Mat2, Point, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub struct MollifiedField {
    pub base: ScalarField,
    pub delta: f64,
    pub epsilon: f64,
    pub l_eps: f64,
    pub result: ScalarField,
}

/// Normalized 1-D bump weights of radius `r` cells; `r < 1` gives `[1]`.
fn bump_weights(r: f64) -> Vec<f64> {
    if r < 1.0 {
        return vec![1.0];
    }
    let k = r.floor() as i64;
    let mut w: Vec<f64> = (-k..=k)
        .map(|i| {
            let s = i as f64 / r;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Convolution with the tensor bump of half-width `eps`, `f` extended by 0.
pub fn convolve(f: &ScalarField, eps: f64) -> ScalarField {
    let n = f.n();
    let w = bump_weights(eps * n as f64);
    let k = (w.len() / 2) as i64;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (t, wt) in w.iter().enumerate() {
                    let d = t as i64 - k;
                    let (ii, jj) = if horizontal { (i as i64 + d, j as i64) } else { (i as i64, j as i64 + d) };
                    if ii >= 0 && jj >= 0 && (ii as usize) < n && (jj as usize) < n {
                        acc += wt * src[jj as usize * n + ii as usize];
                    }
                }
                *o = acc;
            }
        });
        out
    };
    let h = pass(f.samples(), true);
    ScalarField::new(n, pass(&h, false)).expect("convolution keeps samples nonnegative")
}

/// `f_ε = (1+δ) ρ_ε∗f + l_ε` with `l_ε` fixing `∫ f_ε = 1`.
pub fn mollify_and_lift(f: &ScalarField, delta: f64, eps: f64) -> Result<MollifiedField> {
    let lhs = (1.0 + delta) * f.integral();
    let rhs = 1.0 - delta;
    if !(delta > 0.0) || lhs >= rhs {
        return Err(Error::DeltaInfeasible { lhs, rhs });
    }
    let conv = convolve(f, eps);
    let l_eps = 1.0 - (1.0 + delta) * conv.integral();
    let result = conv.map(|v| (1.0 + delta) * v + l_eps)?;
    Ok(MollifiedField { base: f.clone(), delta, epsilon: eps, l_eps, result })
}

/// Cells where `f_ε ≤ (1+δ) f` at the center.
pub fn superlevel_defect_set(f: &ScalarField, f_eps: &ScalarField, delta: f64) -> Result<CompactSetMask> {
    f.same_grid(f_eps)?;
    let level = f.require_level()?;
    let n = f.n();
    let cells = (0..n * n)
        .filter(|&k| f_eps.samples()[k] <= (1.0 + delta) * f.samples()[k])
        .map(|k| ((k % n) as u32, (k / n) as u32));
    CompactSetMask::from_cells(level, cells)
}

/// Values on the `(m+1)²` nodes `(i/m, j/m)`, bilinearly interpolated.
#[derive(Clone, Debug)]
struct NodeGrid {
    m: usize,
    vals: Vec<f64>,
}

impl NodeGrid {
    fn locate(&self, p: Point) -> (usize, usize, f64, f64) {
        let m = self.m as f64;
        let sx = (p.x.clamp(0.0, 1.0) * m).min(m - 1e-9);
        let sy = (p.y.clamp(0.0, 1.0) * m).min(m - 1e-9);
        let (i, j) = (sx.floor() as usize, sy.floor() as usize);
        (i, j, sx - i as f64, sy - j as f64)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.vals[j * (self.m + 1) + i]
    }

    fn interp(&self, p: Point) -> f64 {
        let (i, j, a, b) = self.locate(p);
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - b) * ((1.0 - a) * v00 + a * v10) + b * ((1.0 - a) * v01 + a * v11)
    }

    fn interp_grad(&self, p: Point) -> Vec2 {
        let (i, j, a, b) = self.locate(p);
        let m = self.m as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Vec2::new(
            ((1.0 - b) * (v10 - v00) + b * (v11 - v01)) * m,
            ((1.0 - a) * (v01 - v00) + a * (v11 - v10)) * m,
        )
    }
}

/// `Σ_kl B[l·n+k] X_k(x_p) Y_l(y_q)` on a tensor grid; `xt[k]` and `yt[l]`
/// hold the basis values at the sample abscissae.
fn synthesize(b: &[f64], n: usize, xt: &[Vec<f64>], yt: &[Vec<f64>]) -> Vec<f64> {
    let px = xt[0].len();
    let py = yt[0].len();
    let r: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut row = vec![0.0; px];
            for k in 0..n {
                let c = b[l * n + k];
                if c != 0.0 {
                    for (o, x) in row.iter_mut().zip(&xt[k]) {
                        *o += c * x;
                    }
                }
            }
            row
        })
        .collect();
    let mut out = vec![0.0; px * py];
    out.par_chunks_mut(px).enumerate().for_each(|(q, row)| {
        for l in 0..n {
            let y = yt[l][q];
            if y != 0.0 {
                for (o, rv) in row.iter_mut().zip(&r[l]) {
                    *o += y * rv;
                }
            }
        }
    });
    out
}

fn table(n: usize, xs: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<Vec<f64>> {
    (0..n).map(|k| xs.iter().map(|&x| f(PI * k as f64 * x)).collect()).collect()
}

/// Time-1 map of the Moser flow for a positive density with unit mass.
#[derive(Clone, Debug)]
pub struct MoserMap {
    grid_n: usize,
    steps: usize,
    wx: NodeGrid,
    wy: NodeGrid,
    /// `∂x wx, ∂y wx, ∂x wy, ∂y wy`
    dw: [NodeGrid; 4],
    f: NodeGrid,
    div_residual: f64,
    identity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MoserReport {
    pub det_residual_inf: f64,
    pub mass_error: f64,
    pub boundary_max_err: f64,
    pub div_residual: f64,
    pub grid_n: usize,
    pub rk4_steps: usize,
}

impl MoserMap {
    /// Solves `Δu = f - 1` with zero Neumann data in the cosine basis and
    /// tabulates `w = ∇u` on a node grid twice as fine as `f`.
    pub fn build(f: &ScalarField, steps: usize) -> Result<Self> {
        let fmin = f.min();
        if !(fmin > 0.0) {
            return Err(Error::NonpositiveF(fmin));
        }
        let mass = f.integral();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("density must have unit mass, found {mass}")));
        }
        let n = f.n();
        let m = 2 * n;
        let centers: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let nodes: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let cc = table(n, &centers, f64::cos);

        // a_kl = c_k c_l / n² Σ g_ij cos(πk x_i) cos(πl y_j)
        let g: Vec<f64> = f.samples().iter().map(|v| v - 1.0).collect();
        let t: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|k| (0..n).map(|j| (0..n).map(|i| cc[k][i] * g[j * n + i]).sum()).collect())
            .collect();
        let mut a = vec![0.0; n * n];
        a.par_chunks_mut(n).enumerate().for_each(|(l, row)| {
            for (k, o) in row.iter_mut().enumerate() {
                let s: f64 = (0..n).map(|j| cc[l][j] * t[k][j]).sum();
                let ck = if k == 0 { 1.0 } else { 2.0 };
                let cl = if l == 0 { 1.0 } else { 2.0 };
                *o = ck * cl * s / (n * n) as f64;
            }
        });
        let identity = g.iter().all(|v| v.abs() < 1e-15);
        let mut b = vec![0.0; n * n];
        for l in 0..n {
            for k in 0..n {
                if k + l > 0 {
                    b[l * n + k] = -a[l * n + k] / (PI * PI * (k * k + l * l) as f64);
                }
            }
        }

        let div_at_centers = {
            let lap: Vec<f64> = (0..n * n)
                .map(|idx| {
                    let (k, l) = (idx % n, idx / n);
                    -b[idx] * PI * PI * (k * k + l * l) as f64
                })
                .collect();
            synthesize(&lap, n, &cc, &cc)
        };
        let div_residual = div_at_centers
            .iter()
            .zip(&g)
            .map(|(d, gv)| (d - gv).abs())
            .fold(0.0, f64::max);

        let nc = table(n, &nodes, f64::cos);
        let ns = table(n, &nodes, f64::sin);
        let scaled = |fk: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..n * n).map(|idx| b[idx] * fk(idx % n, idx / n)).collect()
        };
        let pk = |k: usize| PI * k as f64;
        let grid = |v: Vec<f64>| NodeGrid { m, vals: v };
        let wx = grid(synthesize(&scaled(&|k, _| -pk(k)), n, &ns, &nc));
        let wy = grid(synthesize(&scaled(&|_, l| -pk(l)), n, &nc, &ns));
        let dxx = grid(synthesize(&scaled(&|k, _| -pk(k) * pk(k)), n, &nc, &nc));
        let dxy = grid(synthesize(&scaled(&|k, l| pk(k) * pk(l)), n, &ns, &ns));
        let dyy = grid(synthesize(&scaled(&|_, l| -pk(l) * pk(l)), n, &nc, &nc));

        let fnodes: Vec<f64> = (0..(m + 1) * (m + 1))
            .map(|idx| {
                let p = Point::new(nodes[idx % (m + 1)], nodes[idx / (m + 1)]);
                bilinear_centers(f, p)
            })
            .collect();

        Ok(Self {
            grid_n: n,
            steps,
            wx,
            wy,
            dw: [dxx.clone(), dxy.clone(), dxy, dyy],
            f: grid(fnodes),
            div_residual,
            identity,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    /// `max |div w - (f - 1)|` at the cell centers.
    pub fn div_residual(&self) -> f64 {
        self.div_residual
    }

    fn w(&self, z: Point) -> Vec2 {
        Vec2::new(self.wx.interp(z), self.wy.interp(z))
    }

    fn velocity(&self, z: Point, t: f64) -> Vec2 {
        let rho = (1.0 - t) * self.f.interp(z) + t;
        self.w(z) / rho
    }

    fn velocity_grad(&self, z: Point, t: f64) -> (Vec2, Mat2) {
        let rho = (1.0 - t) * self.f.interp(z) + t;
        let drho = self.f.interp_grad(z) * (1.0 - t);
        let w = self.w(z);
        let dw = Mat2::new(
            self.dw[0].interp(z),
            self.dw[1].interp(z),
            self.dw[2].interp(z),
            self.dw[3].interp(z),
        );
        (w / rho, dw / rho - w * drho.transpose() / (rho * rho))
    }

    fn clamp(z: Point) -> Point {
        Point::new(z.x.clamp(0.0, 1.0), z.y.clamp(0.0, 1.0))
    }

    /// RK4 from `t0` to `t1`.
    fn flow(&self, p: Point, t0: f64, t1: f64) -> Point {
        if self.identity {
            return p;
        }
        let dt = (t1 - t0) / self.steps as f64;
        let mut z = p;
        for s in 0..self.steps {
            let t = t0 + s as f64 * dt;
            let k1 = self.velocity(z, t);
            let k2 = self.velocity(Self::clamp(z + k1 * (dt / 2.0)), t + dt / 2.0);
            let k3 = self.velocity(Self::clamp(z + k2 * (dt / 2.0)), t + dt / 2.0);
            let k4 = self.velocity(Self::clamp(z + k3 * dt), t + dt);
            z = Self::clamp(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0));
        }
        z
    }

    /// Forward flow with the variational equation `J' = ∇v J`.
    fn flow_with_jacobian(&self, p: Point) -> (Point, Mat2) {
        if self.identity {
            return (p, Mat2::identity());
        }
        let dt = 1.0 / self.steps as f64;
        let mut z = p;
        let mut j = Mat2::identity();
        for s in 0..self.steps {
            let t = s as f64 * dt;
            let (v1, g1) = self.velocity_grad(z, t);
            let j1 = g1 * j;
            let z2 = Self::clamp(z + v1 * (dt / 2.0));
            let (v2, g2) = self.velocity_grad(z2, t + dt / 2.0);
            let j2 = g2 * (j + j1 * (dt / 2.0));
            let z3 = Self::clamp(z + v2 * (dt / 2.0));
            let (v3, g3) = self.velocity_grad(z3, t + dt / 2.0);
            let j3 = g3 * (j + j2 * (dt / 2.0));
            let z4 = Self::clamp(z + v3 * dt);
            let (v4, g4) = self.velocity_grad(z4, t + dt);
            let j4 = g4 * (j + j3 * dt);
            z = Self::clamp(z + (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0));
            j += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (dt / 6.0);
        }
        (z, j)
    }

    pub fn report(&self, f: &ScalarField) -> MoserReport {
        let n = f.n();
        let dets: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| self.flow_with_jacobian(f.center(k % n, k / n)).1.determinant())
            .collect();
        let det_residual_inf = dets.iter().zip(f.samples()).map(|(d, v)| (d - v).abs()).fold(0.0, f64::max);
        let mass = dets.iter().sum::<f64>() * f.h() * f.h();
        let boundary_max_err = crate::boundary::boundary_samples(250)
            .par_iter()
            .map(|&p| {
                let u = Point::new((p.x + 1.0) / 2.0, (p.y + 1.0) / 2.0);
                let q = self.flow(u, 0.0, 1.0);
                // distance of the image from the edge(s) the sample lies on
                let mut e: f64 = 0.0;
                if u.x == 0.0 || u.x == 1.0 {
                    e = e.max((q.x - u.x).abs());
                }
                if u.y == 0.0 || u.y == 1.0 {
                    e = e.max((q.y - u.y).abs());
                }
                e
            })
            .reduce(|| 0.0, f64::max);
        MoserReport {
            det_residual_inf,
            mass_error: (mass - 1.0).abs(),
            boundary_max_err,
            div_residual: self.div_residual,
            grid_n: self.grid_n,
            rk4_steps: self.steps,
        }
    }
}

/// Bilinear interpolation of cell-centered samples, constant beyond the
/// outermost centers.
fn bilinear_centers(f: &ScalarField, p: Point) -> f64 {
    let n = f.n();
    let s = |t: f64| (t * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let (sx, sy) = (s(p.x), s(p.y));
    let i = (sx.floor() as usize).min(n.saturating_sub(2));
    let j = (sy.floor() as usize).min(n.saturating_sub(2));
    if n == 1 {
        return f.get(0, 0);
    }
    let (a, b) = (sx - i as f64, sy - j as f64);
    (1.0 - b) * ((1.0 - a) * f.get(i, j) + a * f.get(i + 1, j)) + b * ((1.0 - a) * f.get(i, j + 1) + a * f.get(i + 1, j + 1))
}

impl PlanarMap for MoserMap {
    fn kind(&self) -> MapKind {
        MapKind::MoserFlow
    }
    fn domain(&self) -> Region {
        Region::unit_square()
    }
    fn eval(&self, p: Point) -> Result<Point> {
        check_domain(&self.domain(), p)?;
        Ok(self.flow(Self::clamp(p), 0.0, 1.0))
    }
    fn jacobian(&self, p: Point) -> Result<Mat2> {
        check_domain(&self.domain(), p)?;
        Ok(self.flow_with_jacobian(Self::clamp(p)).1)
    }
    fn has_exact_jacobian(&self) -> bool {
        false
    }
}

impl InvertibleMap for MoserMap {
    fn eval_inverse(&self, q: Point) -> Result<Point> {
        check_domain(&self.domain(), q)?;
        Ok(self.flow(Self::clamp(q), 1.0, 0.0))
    }
}

/// Builds the flow with 64 RK4 steps and fails if the determinant residual
/// on the cell centers exceeds `tol`.
pub fn moser_solve(f: &ScalarField, tol: f64) -> Result<(MoserMap, MoserReport)> {
    let map = MoserMap::build(f, 64)?;
    let rep = map.report(f);
    let achieved = rep.det_residual_inf.max(rep.boundary_max_err);
    if achieved > tol {
        return Err(Error::ToleranceNotMet { achieved, required: tol });
    }
    Ok((map, rep))
}
