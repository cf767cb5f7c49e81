//! Piecewise-linear functions on `[0, 1]`.

use serde::{Deserialize, Serialize};

/// Slack allowed on Lipschitz and range checks of computed graphs.
pub const LIP_TOL: f64 = 1e-12;

/// Piecewise-linear function on `[0, 1]`, stored with explicit breakpoints
/// at both endpoints so the constant extensions are part of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pl1d {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Pl1d {
    pub fn constant(c: f64) -> Self {
        Self { xs: vec![0.0, 1.0], ys: vec![c, c] }
    }

    /// Linear interpolation through `pts` (sorted here by abscissa, which
    /// must be distinct), extended by constants to `[0, 1]`.
    pub fn through_points(pts: &[(f64, f64)]) -> Self {
        assert!(!pts.is_empty(), "at least one point required");
        let mut pts = pts.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs = Vec::with_capacity(pts.len() + 2);
        let mut ys = Vec::with_capacity(pts.len() + 2);
        if pts[0].0 > 0.0 {
            xs.push(0.0);
            ys.push(pts[0].1);
        }
        for &(x, y) in &pts {
            xs.push(x);
            ys.push(y);
        }
        let last = pts[pts.len() - 1];
        if last.0 < 1.0 {
            xs.push(1.0);
            ys.push(last.1);
        }
        let f = Self { xs, ys };
        debug_assert!(f.is_well_formed());
        f
    }

    /// Breakpoints strictly increasing from 0 to 1.
    pub fn is_well_formed(&self) -> bool {
        self.xs.len() >= 2
            && self.xs.len() == self.ys.len()
            && self.xs[0] == 0.0
            && *self.xs.last().unwrap() == 1.0
            && self.xs.windows(2).all(|w| w[0] < w[1])
    }

    /// Index `k` of the segment `[xs[k], xs[k+1]]` containing `x`.
    fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let k = self.segment(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    pub fn slope_of_segment(&self, k: usize) -> f64 {
        (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k])
    }

    /// Derivative at `x`, taken from the segment containing `x`.
    pub fn slope(&self, x: f64) -> f64 {
        self.slope_of_segment(self.segment(x.clamp(0.0, 1.0)))
    }

    pub fn interior_breakpoints(&self) -> &[f64] {
        &self.xs[1..self.xs.len() - 1]
    }

    /// Distance from `x` to the nearest interior breakpoint.
    pub fn dist_to_breakpoint(&self, x: f64) -> f64 {
        let b = self.interior_breakpoints();
        if b.is_empty() {
            return f64::INFINITY;
        }
        let k = b.partition_point(|&t| t < x);
        let mut d = f64::INFINITY;
        if k < b.len() {
            d = d.min((b[k] - x).abs());
        }
        if k > 0 {
            d = d.min((x - b[k - 1]).abs());
        }
        d
    }

    pub fn lipschitz_constant(&self) -> f64 {
        (0..self.xs.len() - 1).map(|k| self.slope_of_segment(k).abs()).fold(0.0, f64::max)
    }

    pub fn is_one_lipschitz(&self) -> bool {
        self.lipschitz_constant() <= 1.0 + LIP_TOL
    }

    pub fn min_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add_const(&self, c: f64) -> Self {
        Self { xs: self.xs.clone(), ys: self.ys.iter().map(|y| y + c).collect() }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.max(&Self::constant(lo)).min(&Self::constant(hi))
    }

    pub fn max(&self, other: &Self) -> Self {
        self.combine(other, f64::max)
    }

    pub fn min(&self, other: &Self) -> Self {
        self.combine(other, f64::min)
    }

    /// Pointwise `op` of two PL functions, with crossing points inserted so
    /// the result is again exactly piecewise linear.
    fn combine(&self, other: &Self, op: fn(f64, f64) -> f64) -> Self {
        let mut grid = Vec::with_capacity(self.xs.len() + other.xs.len());
        let (mut a, mut b) = (0, 0);
        while a < self.xs.len() || b < other.xs.len() {
            let next = match (self.xs.get(a), other.xs.get(b)) {
                (Some(&x), Some(&y)) if x <= y => {
                    a += 1;
                    if x == y {
                        b += 1;
                    }
                    x
                }
                (_, Some(&y)) => {
                    b += 1;
                    y
                }
                (Some(&x), None) => {
                    a += 1;
                    x
                }
                (None, None) => unreachable!(),
            };
            grid.push(next);
        }
        let mut xs = Vec::with_capacity(grid.len() * 2);
        let mut ys = Vec::with_capacity(grid.len() * 2);
        let mut prev: Option<(f64, f64)> = None;
        for &x in &grid {
            let d = self.eval(x) - other.eval(x);
            if let Some((px, pd)) = prev {
                if (pd < 0.0 && d > 0.0) || (pd > 0.0 && d < 0.0) {
                    let xc = px + (x - px) * pd / (pd - d);
                    if xc > px && xc < x {
                        xs.push(xc);
                        ys.push(op(self.eval(xc), other.eval(xc)));
                    }
                }
            }
            xs.push(x);
            ys.push(op(self.eval(x), other.eval(x)));
            prev = Some((x, d));
        }
        Self { xs, ys }.simplified()
    }

    /// Drops interior breakpoints where the slope does not change.
    pub fn simplified(mut self) -> Self {
        if self.xs.len() <= 2 {
            return self;
        }
        let mut xs = vec![self.xs[0]];
        let mut ys = vec![self.ys[0]];
        for k in 1..self.xs.len() - 1 {
            let (x0, y0) = (*xs.last().unwrap(), *ys.last().unwrap());
            let (x1, y1) = (self.xs[k], self.ys[k]);
            let (x2, y2) = (self.xs[k + 1], self.ys[k + 1]);
            let s01 = (y1 - y0) / (x1 - x0);
            let s12 = (y2 - y1) / (x2 - x1);
            if (s01 - s12).abs() > 1e-13 {
                xs.push(x1);
                ys.push(y1);
            }
        }
        xs.push(*self.xs.last().unwrap());
        ys.push(*self.ys.last().unwrap());
        self.xs = xs;
        self.ys = ys;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn through_points_extends_constantly() {
        let f = Pl1d::through_points(&[(0.5, 0.2), (0.25, 0.1)]);
        assert!(f.is_well_formed());
        assert_eq!(f.eval(0.0), 0.1);
        assert_eq!(f.eval(1.0), 0.2);
        assert_abs_diff_eq!(f.eval(0.375), 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(f.slope(0.3), 0.4, epsilon = 1e-12);
        assert_eq!(f.slope(0.9), 0.0);
    }

    #[test]
    fn min_inserts_crossing() {
        let up = Pl1d { xs: vec![0.0, 1.0], ys: vec![0.0, 1.0] };
        let down = Pl1d { xs: vec![0.0, 1.0], ys: vec![1.0, 0.0] };
        let m = up.min(&down);
        assert_eq!(m.xs, vec![0.0, 0.5, 1.0]);
        assert_abs_diff_eq!(m.eval(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.eval(0.75), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn breakpoint_distance() {
        let f = Pl1d::through_points(&[(0.2, 0.2), (0.4, 0.3), (0.7, 0.3)]);
        assert_abs_diff_eq!(f.dist_to_breakpoint(0.45), 0.05, epsilon = 1e-15);
        assert_eq!(Pl1d::constant(0.3).dist_to_breakpoint(0.5), f64::INFINITY);
    }

    fn arb_lip() -> impl Strategy<Value = Pl1d> {
        proptest::collection::vec((0.0f64..1.0, -1.0f64..1.0), 1..8).prop_map(|raw| {
            let mut xs: Vec<f64> = raw.iter().map(|r| r.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let mut pts = vec![(xs[0], 0.5)];
            for w in xs.windows(2) {
                let dy = raw[pts.len() % raw.len()].1 * (w[1] - w[0]);
                let y = (pts.last().unwrap().1 + dy).clamp(0.0, 1.0);
                pts.push((w[1], y));
            }
            Pl1d::through_points(&pts)
        })
    }

    proptest! {
        #[test]
        fn min_max_exact_and_lipschitz(f in arb_lip(), g in arb_lip(), x in 0.0f64..1.0) {
            let lo = f.min(&g);
            let hi = f.max(&g);
            prop_assert!(lo.is_well_formed() && hi.is_well_formed());
            prop_assert!((lo.eval(x) - f.eval(x).min(g.eval(x))).abs() < 1e-12);
            prop_assert!((hi.eval(x) - f.eval(x).max(g.eval(x))).abs() < 1e-12);
            prop_assert!(lo.is_one_lipschitz() && hi.is_one_lipschitz());
        }
    }
}
