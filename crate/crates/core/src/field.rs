//! Grid-sampled nonnegative fields on the unit square.

use crate::error::{Error, Result};
use crate::mask::DyadicLevel;
use crate::Point;

/// Cell-centered samples on an `n × n` grid; sample `(i, j)` is the value
/// at `((i + 1/2)/n, (j + 1/2)/n)` and integrals use the midpoint rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    n: usize,
    samples: Vec<f64>,
}

impl ScalarField {
    pub fn new(n: usize, samples: Vec<f64>) -> Result<Self> {
        if n == 0 || samples.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "{} samples for an {n}x{n} grid",
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("sample {v} is not a nonnegative number")));
        }
        Ok(Self { n, samples })
    }

    pub fn from_fn(n: usize, f: impl Fn(Point) -> f64) -> Result<Self> {
        let mut s = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                s.push(f(Self::center_of(n, i, j)));
            }
        }
        Self::new(n, s)
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, vec![c; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.samples[j * self.n + i]
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn center_of(n: usize, i: usize, j: usize) -> Point {
        let h = 1.0 / n as f64;
        Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        Self::center_of(self.n, i, j)
    }

    /// Dyadic level of the grid, when `n` is a power of two.
    pub fn level(&self) -> Option<DyadicLevel> {
        if self.n.is_power_of_two() {
            DyadicLevel::new(self.n.trailing_zeros()).ok()
        } else {
            None
        }
    }

    pub fn require_level(&self) -> Result<DyadicLevel> {
        self.level()
            .ok_or_else(|| Error::GridMismatch(format!("grid size {} is not a power of two", self.n)))
    }

    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let n = self.n as f64;
        let idx = |t: f64| ((t * n).floor().max(0.0) as usize).min(self.n - 1);
        (idx(p.x), idx(p.y))
    }

    /// Piecewise-constant evaluation.
    pub fn value_at(&self, p: Point) -> f64 {
        let (i, j) = self.cell_of(p);
        self.get(i, j)
    }

    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.h() * self.h()
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Midpoint-rule Lᵖ norm; `p = f64::INFINITY` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.samples.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        let s: f64 = self.samples.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.h() * self.h()).powf(1.0 / p)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.n, self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch(format!("{} vs {}", self.n, other.n)));
        }
        Ok(())
    }

    /// CSV with `n` rows of `n` values; the first row is the top row
    /// (`j = n - 1`), matching the mask text grid.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: k + 1,
                        msg: format!("{t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: k + 1,
                        msg: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows[0].len() != n {
            return Err(Error::Parse { line: n.max(1), msg: "field must be a nonempty square grid".into() });
        }
        let mut samples = vec![0.0; n * n];
        for (r, row) in rows.iter().enumerate() {
            let j = n - 1 - r;
            samples[j * n..(j + 1) * n].copy_from_slice(row);
        }
        Self::new(n, samples)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for j in (0..self.n).rev() {
            let row: Vec<String> = (0..self.n).map(|i| format!("{}", self.get(i, j))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}
