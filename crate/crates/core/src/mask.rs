//! Dyadic cell masks on the unit square.
//!
//! Cell `(i, j)` at level `l` is `[i δ, (i+1) δ] × [j δ, (j+1) δ]` with
//! `δ = 2^-l`; `i` indexes columns (x) and `j` rows (y).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Finest level any mask may be refined to.
pub const MAX_LEVEL: u32 = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicLevel(u32);

impl DyadicLevel {
    pub fn new(l: u32) -> Result<Self> {
        if l > MAX_LEVEL {
            return Err(Error::LevelOverflow { requested: l, max: MAX_LEVEL });
        }
        Ok(Self(l))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Cell side `2^-l`, exact in binary floating point.
    pub fn delta(self) -> f64 {
        1.0 / self.side() as f64
    }

    /// Cells per side, `2^l`.
    pub fn side(self) -> u32 {
        1u32 << self.0
    }
}

pub type Cell = (u32, u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactSetMask {
    level: DyadicLevel,
    cells: BTreeSet<Cell>,
}

impl CompactSetMask {
    pub fn empty(level: DyadicLevel) -> Self {
        Self { level, cells: BTreeSet::new() }
    }

    pub fn full(level: DyadicLevel) -> Self {
        let n = level.side();
        let cells = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect();
        Self { level, cells }
    }

    pub fn from_cells(level: DyadicLevel, cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let n = level.side();
        let mut set = BTreeSet::new();
        for (i, j) in cells {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "cell ({i}, {j}) outside a level-{} grid",
                    level.get()
                )));
            }
            set.insert((i, j));
        }
        Ok(Self { level, cells: set })
    }

    pub fn level(&self) -> DyadicLevel {
        self.level
    }

    pub fn delta(&self) -> f64 {
        self.level.delta()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().copied()
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    pub fn insert(&mut self, c: Cell) {
        let n = self.level.side();
        assert!(c.0 < n && c.1 < n, "cell outside grid");
        self.cells.insert(c);
    }

    /// `#cells · δ²`; exact since both factors are dyadic.
    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.delta() * self.delta()
    }

    pub fn refine(&self, dl: u32) -> Result<Self> {
        if dl == 0 {
            return Ok(self.clone());
        }
        let level = DyadicLevel::new(self.level.get() + dl)?;
        let k = 1u32 << dl;
        let mut cells = BTreeSet::new();
        for &(i, j) in &self.cells {
            for b in 0..k {
                for a in 0..k {
                    cells.insert((i * k + a, j * k + b));
                }
            }
        }
        Ok(Self { level, cells })
    }

    /// Refines to `level` (which must not be coarser than the current one).
    pub fn at_level(&self, level: DyadicLevel) -> Result<Self> {
        if level < self.level {
            return Err(Error::InvalidInput("cannot coarsen a mask exactly".into()));
        }
        self.refine(level.get() - self.level.get())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        let level = self.level.max(other.level);
        let mut a = self.at_level(level)?;
        a.cells.extend(other.at_level(level)?.cells);
        Ok(a)
    }

    pub fn cell_center(&self, c: Cell) -> Point {
        let d = self.delta();
        Point::new((c.0 as f64 + 0.5) * d, (c.1 as f64 + 0.5) * d)
    }

    /// Lower-left and upper-right corners of a cell.
    pub fn cell_rect(&self, c: Cell) -> (Point, Point) {
        let d = self.delta();
        (
            Point::new(c.0 as f64 * d, c.1 as f64 * d),
            Point::new((c.0 + 1) as f64 * d, (c.1 + 1) as f64 * d),
        )
    }

    /// Cell containing `p`, with points on the far edges assigned inward.
    pub fn cell_of(level: DyadicLevel, p: Point) -> Option<Cell> {
        if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
            return None;
        }
        let n = level.side();
        let idx = |t: f64| ((t * n as f64).floor() as u32).min(n - 1);
        Some((idx(p.x), idx(p.y)))
    }

    pub fn contains_point(&self, p: Point) -> bool {
        Self::cell_of(self.level, p).is_some_and(|c| self.cells.contains(&c))
    }

    /// Number of cell edges separating a mask cell from a non-mask cell or
    /// from the outside of the square.
    pub fn boundary_edges(&self) -> usize {
        let n = self.level.side() as i64;
        let inside = |i: i64, j: i64| {
            i >= 0 && j >= 0 && i < n && j < n && self.cells.contains(&(i as u32, j as u32))
        };
        self.cells
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as i64, j as i64);
                [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .filter(|(a, b)| !inside(i + a, j + b))
                    .count()
            })
            .sum()
    }

    /// Text grid with the top row first (`j = 2^l - 1`).
    pub fn to_grid(&self) -> String {
        let n = self.level.side();
        let mut s = String::with_capacity((n as usize + 1) * n as usize);
        for j in (0..n).rev() {
            for i in 0..n {
                s.push(if self.cells.contains(&(i, j)) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_grid(text: &str) -> Result<Self> {
        let rows: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Ok(Self::empty(DyadicLevel(0)));
        }
        let n = rows.len();
        if !n.is_power_of_two() {
            return Err(Error::Parse {
                line: rows[n - 1].0,
                msg: format!("{n} rows is not a power of two"),
            });
        }
        let level = DyadicLevel::new(n.trailing_zeros()).map_err(|e| Error::Parse {
            line: rows[0].0,
            msg: e.to_string(),
        })?;
        let mut cells = BTreeSet::new();
        for (r, (line, row)) in rows.iter().enumerate() {
            if row.chars().count() != n {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("expected {n} columns, found {}", row.chars().count()),
                });
            }
            let j = (n - 1 - r) as u32;
            for (i, ch) in row.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => {
                        cells.insert((i as u32, j));
                    }
                    other => {
                        return Err(Error::Parse {
                            line: *line,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
        }
        Ok(Self { level, cells })
    }

    pub fn to_json(&self) -> MaskJson {
        MaskJson { level: self.level.get(), cells: self.cells.iter().map(|&(i, j)| [i, j]).collect() }
    }

    pub fn from_json(m: &MaskJson) -> Result<Self> {
        Self::from_cells(DyadicLevel::new(m.level)?, m.cells.iter().map(|c| (c[0], c[1])))
    }

    /// Accepts either the JSON form or the text grid.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let m: MaskJson = serde_json::from_str(text).map_err(|e| Error::Parse {
                line: e.line(),
                msg: e.to_string(),
            })?;
            Self::from_json(&m)
        } else {
            Self::parse_grid(text)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskJson {
    pub level: u32,
    pub cells: Vec<[u32; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lvl(l: u32) -> DyadicLevel {
        DyadicLevel::new(l).unwrap()
    }

    #[test]
    fn measures() {
        assert_eq!(CompactSetMask::empty(lvl(3)).measure(), 0.0);
        assert_eq!(CompactSetMask::full(lvl(0)).measure(), 1.0);
        let m = CompactSetMask::from_cells(lvl(3), [(0, 0), (1, 0), (5, 5), (7, 7)]).unwrap();
        assert_eq!(m.measure(), 4.0 / 64.0);
    }

    #[test]
    fn refine_one_cell() {
        let m = CompactSetMask::from_cells(lvl(1), [(1, 0)]).unwrap();
        assert_eq!(m.refine(0).unwrap(), m);
        let r = m.refine(1).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.measure(), 0.25);
        assert!(r.contains_cell((2, 0)) && r.contains_cell((3, 1)));
    }

    #[test]
    fn refine_overflow() {
        let m = CompactSetMask::empty(lvl(MAX_LEVEL - 1));
        assert!(matches!(m.refine(2), Err(Error::LevelOverflow { .. })));
    }

    #[test]
    fn grid_roundtrip_and_orientation() {
        let text = "0001\n0000\n0000\n1000\n";
        let m = CompactSetMask::parse_grid(text).unwrap();
        assert_eq!(m.level().get(), 2);
        assert!(m.contains_cell((3, 3)));
        assert!(m.contains_cell((0, 0)));
        assert_eq!(m.to_grid(), text);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = CompactSetMask::parse_grid("01\n0x\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 2, msg: "unexpected character 'x'".into() });
        let err = CompactSetMask::parse_grid("0101\n010\n0000\n0000\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn json_roundtrip() {
        let m = CompactSetMask::from_cells(lvl(4), [(3, 9), (0, 15)]).unwrap();
        let s = serde_json::to_string(&m.to_json()).unwrap();
        assert_eq!(CompactSetMask::parse(&s).unwrap(), m);
    }

    #[test]
    fn boundary_edges_of_block() {
        let m = CompactSetMask::from_cells(lvl(3), [(2, 2), (3, 2), (2, 3), (3, 3)]).unwrap();
        assert_eq!(m.boundary_edges(), 8);
    }

    fn arb_mask() -> impl Strategy<Value = CompactSetMask> {
        (1u32..5).prop_flat_map(|l| {
            let n = 1u32 << l;
            proptest::collection::vec((0..n, 0..n), 0..40)
                .prop_map(move |cells| CompactSetMask::from_cells(lvl(l), cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn refinement_preserves_measure_and_points(m in arb_mask(), dl in 0u32..4, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let r = m.refine(dl).unwrap();
            prop_assert_eq!(r.measure(), m.measure());
            let p = Point::new(x, y);
            prop_assert_eq!(r.contains_point(p), m.contains_point(p));
        }

        #[test]
        fn measure_additive_on_disjoint(a in arb_mask(), b in arb_mask()) {
            let level = a.level().max(b.level());
            let a = a.at_level(level).unwrap();
            let b = b.at_level(level).unwrap();
            let b_only = CompactSetMask::from_cells(level, b.cells().filter(|c| !a.contains_cell(*c))).unwrap();
            let u = a.union(&b_only).unwrap();
            prop_assert_eq!(u.measure(), a.measure() + b_only.measure());
        }
    }
}
