//! Covering finite point sets and dyadic masks by 1-Lipschitz strips.
//!
//! In the coordinates `u = x - y`, `v = x + y`, two points lie on a common
//! 1-Lipschitz graph over `x` exactly when they are comparable in the
//! product order, and on a graph over `y` when they are incomparable.
//! Long chains are peeled off first; the remainder splits into antichains
//! by height.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::CompactSetMask;
use crate::pl::{Pl1d, LIP_TOL};
use crate::Point;

/// Largest number of cells `cover_mask` will refine to.
const MAX_COVER_CELLS: usize = 1 << 18;

/// Horizontal strips `|y - f_i(x)| < δ` and vertical strips
/// `|x - g_j(y)| < δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripFamily {
    pub delta: f64,
    pub horizontal: Vec<Pl1d>,
    pub vertical: Vec<Pl1d>,
}

impl StripFamily {
    pub fn empty(delta: f64) -> Self {
        Self { delta, horizontal: Vec::new(), vertical: Vec::new() }
    }

    /// Number of horizontal strips.
    pub fn n(&self) -> usize {
        self.horizontal.len()
    }

    /// Number of vertical strips.
    pub fn m(&self) -> usize {
        self.vertical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizontal.is_empty() && self.vertical.is_empty()
    }

    /// Whether the closed strips cover `p`.
    pub fn covers_point(&self, p: Point) -> bool {
        let d = self.delta;
        self.horizontal.iter().any(|f| (p.y - f.eval(p.x)).abs() <= d)
            || self.vertical.iter().any(|g| (p.x - g.eval(p.y)).abs() <= d)
    }

    /// Number of open horizontal and vertical strips containing `p`.
    pub fn overlap_counts(&self, p: Point) -> (usize, usize) {
        let d = self.delta;
        let h = self.horizontal.iter().filter(|f| (p.y - f.eval(p.x)).abs() < d).count();
        let v = self.vertical.iter().filter(|g| (p.x - g.eval(p.y)).abs() < d).count();
        (h, v)
    }

    /// Whether the closed rectangle `[lo, hi]` lies inside a single strip.
    pub fn rect_in_single_strip(&self, lo: Point, hi: Point) -> bool {
        let d = self.delta;
        let fits = |g: &Pl1d, a: f64, b: f64, c0: f64, c1: f64| {
            let (mn, mx) = range_on(g, a, b);
            mx <= c0 + d + 1e-12 && mn >= c1 - d - 1e-12
        };
        self.horizontal.iter().any(|f| fits(f, lo.x, hi.x, lo.y, hi.y))
            || self.vertical.iter().any(|g| fits(g, lo.y, hi.y, lo.x, hi.x))
    }

    /// Violations of the disjoint-family invariants (empty when valid).
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.delta;
        for (name, side) in [("horizontal", &self.horizontal), ("vertical", &self.vertical)] {
            for (i, f) in side.iter().enumerate() {
                if !f.is_well_formed() {
                    out.push(format!("{name} graph {i} malformed"));
                }
                if !f.is_one_lipschitz() {
                    out.push(format!("{name} graph {i} has slope {}", f.lipschitz_constant()));
                }
                if f.min_value() < d - LIP_TOL || f.max_value() > 1.0 - d + LIP_TOL {
                    out.push(format!("{name} graph {i} leaves [δ, 1-δ]"));
                }
            }
            for (i, w) in side.windows(2).enumerate() {
                let gap = w[0].add_const(-2.0 * d).min(&w[1]);
                let worst = gap
                    .xs
                    .iter()
                    .map(|&x| w[1].eval(x) - (w[0].eval(x) - 2.0 * d))
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst > LIP_TOL {
                    out.push(format!("{name} graphs {i},{} closer than 2δ by {worst}", i + 1));
                }
            }
        }
        out
    }
}

/// Minimum and maximum of `g` on `[a, b]`.
fn range_on(g: &Pl1d, a: f64, b: f64) -> (f64, f64) {
    let mut mn = g.eval(a).min(g.eval(b));
    let mut mx = g.eval(a).max(g.eval(b));
    for &x in g.interior_breakpoints() {
        if x > a && x < b {
            let v = g.eval(x);
            mn = mn.min(v);
            mx = mx.max(v);
        }
    }
    (mn, mx)
}

/// Graphs over `x` (`fs`) and over `y` (`gs`) covering a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub fs: Vec<Pl1d>,
    pub gs: Vec<Pl1d>,
    /// Index sets of the chains and antichains, into the input slice.
    pub chains: Vec<Vec<usize>>,
    pub antichains: Vec<Vec<usize>>,
}

pub fn ceil_sqrt(n: usize) -> usize {
    let mut k = (n as f64).sqrt() as usize;
    while k * k < n {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    k
}

/// Splits points with rotated keys `(u, v)` into chains and antichains:
/// at most `⌈√n⌉` chains, each of length at least `⌈√n⌉`, then fewer than
/// `⌈√n⌉` antichains.
pub fn decompose<K: Copy + PartialOrd>(keys: &[(K, K)]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let k = ceil_sqrt(keys.len());
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (keys[a], keys[b]);
        ka.0.partial_cmp(&kb.0)
            .unwrap()
            .then(ka.1.partial_cmp(&kb.1).unwrap())
    });
    let mut chains = Vec::new();
    loop {
        let (chain, _) = longest_chain(&order, keys);
        if order.is_empty() || chain.len() < k {
            break;
        }
        let mut taken = vec![false; keys.len()];
        for &c in &chain {
            taken[c] = true;
        }
        order.retain(|&i| !taken[i]);
        chains.push(chain);
    }
    let (_, heights) = longest_chain(&order, keys);
    let levels = heights.iter().copied().max().map_or(0, |h| h + 1);
    let mut antichains = vec![Vec::new(); levels];
    for (&i, &h) in order.iter().zip(&heights) {
        antichains[h].push(i);
    }
    (chains, antichains)
}

/// Longest non-decreasing subsequence in `v` of `order` (already sorted by
/// `(u, v)`), plus the height of every element (0-based longest chain
/// ending there). Ties resolve to the leftmost candidates.
fn longest_chain<K: Copy + PartialOrd>(order: &[usize], keys: &[(K, K)]) -> (Vec<usize>, Vec<usize>) {
    let mut tails: Vec<usize> = Vec::new();
    let mut pred = vec![usize::MAX; order.len()];
    let mut heights = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        let v = keys[i].1;
        let h = tails.partition_point(|&t| keys[order[t]].1 <= v);
        if h > 0 {
            pred[pos] = tails[h - 1];
        }
        if h == tails.len() {
            tails.push(pos);
        } else {
            tails[h] = pos;
        }
        heights.push(h);
    }
    let mut chain = Vec::new();
    let mut cur = tails.last().copied().unwrap_or(usize::MAX);
    while cur != usize::MAX {
        chain.push(order[cur]);
        cur = pred[cur];
    }
    chain.reverse();
    (chain, heights)
}

fn graphs(points: &[Point], chains: &[Vec<usize>], antichains: &[Vec<usize>]) -> (Vec<Pl1d>, Vec<Pl1d>) {
    let fs = chains
        .iter()
        .map(|c| {
            let pts: Vec<(f64, f64)> = c.iter().map(|&i| (points[i].x, points[i].y)).collect();
            Pl1d::through_points(&pts).clamp(0.0, 1.0)
        })
        .collect();
    let gs = antichains
        .iter()
        .map(|c| {
            let pts: Vec<(f64, f64)> = c.iter().map(|&i| (points[i].y, points[i].x)).collect();
            Pl1d::through_points(&pts).clamp(0.0, 1.0)
        })
        .collect();
    (fs, gs)
}

/// Covers distinct points of `[0,1]²`.
pub fn cover_points(points: &[Point]) -> Cover {
    let keys: Vec<(f64, f64)> = points.iter().map(|p| (p.x - p.y, p.x + p.y)).collect();
    let (chains, antichains) = decompose(&keys);
    let (fs, gs) = graphs(points, &chains, &antichains);
    Cover { fs, gs, chains, antichains }
}

/// Covers cell centers, compared exactly on the integer lattice
/// `(2i + 1, 2j + 1)`.
pub fn cover_cells(mask: &CompactSetMask) -> Cover {
    let cells: Vec<_> = mask.cells().collect();
    let keys: Vec<(i64, i64)> = cells
        .iter()
        .map(|&(i, j)| {
            let (x, y) = (2 * i as i64 + 1, 2 * j as i64 + 1);
            (x - y, x + y)
        })
        .collect();
    let points: Vec<Point> = cells.iter().map(|&c| mask.cell_center(c)).collect();
    let (chains, antichains) = decompose(&keys);
    let (fs, gs) = graphs(&points, &chains, &antichains);
    Cover { fs, gs, chains, antichains }
}

/// Strips of half-width `δ` through the cell centers, refining the mask
/// until `δN, δM ≤ √|K| + eps`.
pub fn cover_mask(mask: &CompactSetMask, eps: f64) -> Result<StripFamily> {
    if mask.is_empty() {
        return Ok(StripFamily::empty(mask.delta()));
    }
    let root = mask.measure().sqrt();
    let mut m = mask.clone();
    loop {
        let cover = cover_cells(&m);
        let d = m.delta();
        let bound = root + eps;
        if d * cover.fs.len() as f64 <= bound && d * cover.gs.len() as f64 <= bound {
            return Ok(StripFamily { delta: d, horizontal: cover.fs, vertical: cover.gs });
        }
        if m.len() * 4 > MAX_COVER_CELLS {
            return Err(Error::BoundUnachievable(m.level().get()));
        }
        m = m.refine(1).map_err(|_| Error::BoundUnachievable(m.level().get()))?;
    }
}

/// Reorders and clamps graphs so that consecutive strips are `2δ` apart and
/// all strips lie in the unit square, keeping the covered set.
pub fn disjointify(family: &StripFamily) -> StripFamily {
    StripFamily {
        delta: family.delta,
        horizontal: disjointify_side(&family.horizontal, family.delta),
        vertical: disjointify_side(&family.vertical, family.delta),
    }
}

fn disjointify_side(graphs: &[Pl1d], delta: f64) -> Vec<Pl1d> {
    let n = graphs.len();
    // Order statistics via a bubble-sort network: after sorting, slot i
    // holds the pointwise (i+1)-th largest value.
    let mut s: Vec<Pl1d> = graphs.to_vec();
    for pass in 0..n {
        for k in 0..n.saturating_sub(1 + pass) {
            let hi = s[k].max(&s[k + 1]);
            let lo = s[k].min(&s[k + 1]);
            s[k] = hi;
            s[k + 1] = lo;
        }
    }
    let mut out: Vec<Pl1d> = Vec::with_capacity(n);
    for (idx, g) in s.iter().enumerate() {
        let i = idx + 1;
        let floor = (1 + 2 * (n - i)) as f64 * delta;
        let hat = g.max(&Pl1d::constant(floor));
        let cap = match out.last() {
            None => Pl1d::constant(1.0 - delta),
            Some(prev) => prev.add_const(-2.0 * delta),
        };
        out.push(hat.min(&cap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::DyadicLevel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    fn on_cover(c: &Cover, points: &[Point]) -> bool {
        points.iter().all(|p| {
            c.fs.iter().any(|f| (f.eval(p.x) - p.y).abs() < 1e-12)
                || c.gs.iter().any(|g| (g.eval(p.y) - p.x).abs() < 1e-12)
        })
    }

    #[test]
    fn diagonal_is_one_chain() {
        let p = pts(&[(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)]);
        let c = cover_points(&p);
        assert_eq!((c.fs.len(), c.gs.len()), (1, 0));
        assert!(on_cover(&c, &p));
    }

    #[test]
    fn vertical_pair_is_antichain() {
        let p = pts(&[(0.5, 0.2), (0.5, 0.8)]);
        let c = cover_points(&p);
        assert_eq!((c.fs.len(), c.gs.len()), (0, 1));
        assert!(on_cover(&c, &p));
    }

    #[test]
    fn empty_input() {
        let c = cover_points(&[]);
        assert!(c.fs.is_empty() && c.gs.is_empty());
        let fam = cover_mask(&CompactSetMask::empty(DyadicLevel::new(3).unwrap()), 0.1).unwrap();
        assert!(fam.is_empty());
    }

    #[test]
    fn single_cell_family() {
        let l = DyadicLevel::new(4).unwrap();
        let m = CompactSetMask::from_cells(l, [(5, 9)]).unwrap();
        let fam = cover_mask(&m, 1e-9).unwrap();
        assert_eq!(fam.n() + fam.m(), 1);
        assert_eq!(fam.delta * (fam.n() + fam.m()) as f64, 1.0 / 16.0);
        let (lo, hi) = m.cell_rect((5, 9));
        assert!(fam.rect_in_single_strip(lo, hi));
    }

    #[test]
    fn disjointify_identical_constants() {
        let fam = StripFamily {
            delta: 0.1,
            horizontal: vec![Pl1d::constant(0.5), Pl1d::constant(0.5)],
            vertical: vec![],
        };
        let d = disjointify(&fam);
        assert_abs_diff_eq!(d.horizontal[0].eval(0.3), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.horizontal[1].eval(0.7), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(
            d.horizontal[0].eval(0.2) - d.horizontal[1].eval(0.2),
            0.2,
            epsilon = 1e-12
        );
        assert!(d.invariant_violations().is_empty());
    }

    #[test]
    fn disjoint_family_is_reordered_only() {
        let lo = Pl1d::through_points(&[(0.2, 0.2), (0.5, 0.3)]);
        let hi = Pl1d::through_points(&[(0.1, 0.8), (0.6, 0.7)]);
        let fam = StripFamily { delta: 0.05, horizontal: vec![lo.clone(), hi.clone()], vertical: vec![] };
        let d = disjointify(&fam);
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert_abs_diff_eq!(d.horizontal[0].eval(x), hi.eval(x), epsilon = 1e-12);
            assert_abs_diff_eq!(d.horizontal[1].eval(x), lo.eval(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_certificates_are_exact() {
        let l = DyadicLevel::new(5).unwrap();
        let cells: Vec<_> = (0..32u32).flat_map(|i| [(i, (i * 7) % 32), (i, (i * 13 + 5) % 32)]).collect();
        let m = CompactSetMask::from_cells(l, cells).unwrap();
        let c = cover_cells(&m);
        let all: Vec<_> = m.cells().collect();
        let key = |k: usize| {
            let (i, j) = all[k];
            let (x, y) = (2 * i as i64 + 1, 2 * j as i64 + 1);
            (x - y, x + y)
        };
        let le = |a: (i64, i64), b: (i64, i64)| a.0 <= b.0 && a.1 <= b.1;
        for ch in &c.chains {
            for w in ch.windows(2) {
                assert!(le(key(w[0]), key(w[1])));
            }
        }
        for ac in &c.antichains {
            for a in 0..ac.len() {
                for b in a + 1..ac.len() {
                    let (ka, kb) = (key(ac[a]), key(ac[b]));
                    assert!(!le(ka, kb) && !le(kb, ka));
                }
            }
        }
        let k = ceil_sqrt(all.len());
        assert!(c.chains.len() <= k && c.antichains.len() <= k);
    }

    #[test]
    fn ceil_sqrt_values() {
        assert_eq!(ceil_sqrt(0), 0);
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(9), 3);
        assert_eq!(ceil_sqrt(10), 4);
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::btree_set((0u32..64, 0u32..64), 0..120).prop_map(|s| {
            s.into_iter()
                .map(|(i, j)| Point::new((i as f64 + 0.5) / 64.0, (j as f64 + 0.5) / 64.0))
                .collect()
        })
    }

    fn arb_graphs() -> impl Strategy<Value = Vec<Pl1d>> {
        let graph = proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..6).prop_map(|raw| {
            let mut xs: Vec<f64> = raw.iter().map(|r| r.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let mut pts = vec![(xs[0], raw[0].1)];
            for (k, w) in xs.windows(2).enumerate() {
                let step = (2.0 * raw[(k + 1) % raw.len()].1 - 1.0) * (w[1] - w[0]);
                pts.push((w[1], (pts.last().unwrap().1 + step).clamp(0.0, 1.0)));
            }
            Pl1d::through_points(&pts)
        });
        proptest::collection::vec(graph, 1..6)
    }

    proptest! {
        #[test]
        fn cover_is_valid_and_small(p in arb_points()) {
            let c = cover_points(&p);
            let k = ceil_sqrt(p.len());
            prop_assert!(c.fs.len() <= k && c.gs.len() <= k);
            prop_assert!(on_cover(&c, &p));
            for g in c.fs.iter().chain(&c.gs) {
                prop_assert!(g.is_one_lipschitz());
                prop_assert!(g.min_value() >= 0.0 && g.max_value() <= 1.0);
            }
        }

        #[test]
        fn disjointify_keeps_cover(gs in arb_graphs(), x in 0.0f64..1.0, t in 0.0f64..1.0) {
            let delta = 0.04;
            let fam = StripFamily { delta, horizontal: gs.clone(), vertical: vec![] };
            let d = disjointify(&fam);
            prop_assert!(d.invariant_violations().is_empty(), "{:?}", d.invariant_violations());
            // reordering: the multiset of values at x is kept where no clamp acts
            let mut before: Vec<f64> = gs.iter().map(|g| g.eval(x)).collect();
            before.sort_by(|a, b| b.total_cmp(a));
            let sorted = StripFamily { delta: 0.0, horizontal: gs.clone(), vertical: vec![] };
            let sorted = disjointify_side(&sorted.horizontal, 0.0);
            for (a, b) in before.iter().zip(&sorted) {
                prop_assert!((a - b.eval(x)).abs() < 1e-12);
            }
            // covering inclusion at a point of an input strip
            let g = &gs[(t * gs.len() as f64) as usize % gs.len()];
            let y = g.eval(x) + (2.0 * t - 1.0) * delta;
            if (0.0..=1.0).contains(&y) {
                prop_assert!(d.covers_point(Point::new(x, y)));
            }
            let (h, _) = d.overlap_counts(Point::new(x, t));
            prop_assert!(h <= 1);
        }
    }
}
