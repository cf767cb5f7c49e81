//! Simple polygons with holes: validation, ear-clipping triangulation and
//! the decomposition into bilinear quadrilateral charts.

use serde::{Deserialize, Serialize};

use super::quad::{cover_triangle, BilinearQuadMap, ConvexQuad};
use crate::error::{Error, Result};
use crate::{Point, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub outer: Vec<[f64; 2]>,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
}

fn pts(ring: &[[f64; 2]]) -> Vec<Point> {
    ring.iter().map(|&[x, y]| Point::new(x, y)).collect()
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(b - a, c - a)
}

pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    0.5 * (0..n).map(|k| cross(ring[k].coords, ring[(k + 1) % n].coords)).sum::<f64>()
}

/// Closed segments `ab` and `cd` share a point.
fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let eps = 1e-12;
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    let on = |p: Point, q: Point, r: Point| {
        r.x >= p.x.min(q.x) - eps && r.x <= p.x.max(q.x) + eps && r.y >= p.y.min(q.y) - eps && r.y <= p.y.max(q.y) + eps
    };
    if ((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps)) && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps)) {
        return true;
    }
    (o1.abs() <= eps && on(a, b, c))
        || (o2.abs() <= eps && on(a, b, d))
        || (o3.abs() <= eps && on(c, d, a))
        || (o4.abs() <= eps && on(c, d, b))
}

/// Proper crossing of the open segments.
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let eps = 1e-12;
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    ((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps)) && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps))
}

pub fn point_in_ring(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (ring[k], ring[(k + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn edges(ring: &[Point]) -> impl Iterator<Item = (usize, Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |k| (k, ring[k], ring[(k + 1) % n]))
}

impl Polygon {
    pub fn rings(&self) -> (Vec<Point>, Vec<Vec<Point>>) {
        (pts(&self.outer), self.holes.iter().map(|h| pts(h)).collect())
    }

    pub fn area(&self) -> f64 {
        let (o, hs) = self.rings();
        signed_area(&o).abs() - hs.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }

    pub fn contains(&self, p: Point) -> bool {
        let (o, hs) = self.rings();
        point_in_ring(&o, p) && !hs.iter().any(|h| point_in_ring(h, p))
    }

    pub fn validate(&self) -> Result<()> {
        let (outer, holes) = self.rings();
        let bad = |m: &str| Err(Error::SelfIntersectingPolygon(m.to_string()));
        let rings: Vec<&Vec<Point>> = std::iter::once(&outer).chain(holes.iter()).collect();
        for r in &rings {
            if r.len() < 3 || r.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return bad("ring with fewer than 3 finite vertices");
            }
            if signed_area(r).abs() < 1e-14 {
                return bad("ring with zero area");
            }
            let n = r.len();
            for (i, a, b) in edges(r) {
                for (j, c, d) in edges(r) {
                    if j <= i {
                        continue;
                    }
                    let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                    if adjacent {
                        // neighbours may only share their common vertex
                        let (p, q, s) = if j == i + 1 { (a, b, d) } else { (b, a, c) };
                        if orient(p, q, s).abs() <= 1e-12 && (s - q).dot(&(p - q)) > 0.0 {
                            return bad("ring folds back on itself");
                        }
                        continue;
                    }
                    if segments_touch(a, b, c, d) {
                        return bad("ring edges intersect");
                    }
                }
            }
        }
        for (x, r) in rings.iter().enumerate() {
            for s in rings.iter().skip(x + 1) {
                for (_, a, b) in edges(r) {
                    for (_, c, d) in edges(s) {
                        if segments_touch(a, b, c, d) {
                            return bad("rings intersect");
                        }
                    }
                }
            }
        }
        for (k, h) in holes.iter().enumerate() {
            if !h.iter().all(|&p| point_in_ring(&outer, p)) {
                return bad("hole not inside the outer ring");
            }
            for (m, g) in holes.iter().enumerate() {
                if m != k && point_in_ring(g, h[0]) {
                    return bad("nested holes");
                }
            }
        }
        Ok(())
    }
}

/// Splices each hole into the outer ring through a visible bridge,
/// producing one weakly simple counterclockwise ring.
fn bridge_holes(mut outer: Vec<Point>, mut holes: Vec<Vec<Point>>) -> Result<Vec<Point>> {
    if signed_area(&outer) < 0.0 {
        outer.reverse();
    }
    for h in holes.iter_mut() {
        if signed_area(h) > 0.0 {
            h.reverse();
        }
    }
    let rightmost = |h: &Vec<Point>| (0..h.len()).max_by(|&a, &b| h[a].x.total_cmp(&h[b].x)).unwrap();
    holes.sort_by(|a, b| b[rightmost(b)].x.total_cmp(&a[rightmost(a)].x));
    let mut ring = outer;
    for k in 0..holes.len() {
        let hole = &holes[k];
        let im = rightmost(hole);
        let m = hole[im];
        let blocked = |p: Point| {
            edges(&ring).any(|(_, a, b)| segments_cross(m, p, a, b))
                || holes[k..].iter().any(|h| edges(h).any(|(_, a, b)| segments_cross(m, p, a, b)))
                || ring.iter().chain(holes[k..].iter().flatten()).any(|&r| {
                    r != m && r != p && orient(m, p, r).abs() <= 1e-12 && (r - m).dot(&(r - p)) < 0.0
                })
        };
        let ip = (0..ring.len())
            .filter(|&i| !blocked(ring[i]))
            .min_by(|&a, &b| (ring[a] - m).norm().total_cmp(&(ring[b] - m).norm()))
            .ok_or_else(|| Error::SelfIntersectingPolygon("no visible bridge for a hole".into()))?;
        let mut next = Vec::with_capacity(ring.len() + hole.len() + 2);
        next.extend_from_slice(&ring[..=ip]);
        for t in 0..=hole.len() {
            next.push(hole[(im + t) % hole.len()]);
        }
        next.extend_from_slice(&ring[ip..]);
        ring = next;
    }
    Ok(ring)
}

fn in_closed_triangle(a: Point, b: Point, c: Point, p: Point) -> bool {
    let eps = 1e-12;
    orient(a, b, p) >= -eps && orient(b, c, p) >= -eps && orient(c, a, p) >= -eps
}

/// Ear-clipping triangulation; triangles are counterclockwise.
pub fn triangulate(poly: &Polygon) -> Result<Vec<[Point; 3]>> {
    poly.validate()?;
    let (outer, holes) = poly.rings();
    let ring = bridge_holes(outer, holes)?;
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut tris = Vec::with_capacity(ring.len());
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (ring[ia], ring[ib], ring[ic]);
            let o = orient(a, b, c);
            if o.abs() <= 1e-14 && (b - a).dot(&(c - b)) > 0.0 {
                // collinear interior vertex; dropping it loses no area
                idx.remove(k);
                clipped = true;
                break;
            }
            if o <= 1e-14 {
                continue;
            }
            let blocked = idx.iter().any(|&r| {
                let p = ring[r];
                p != a && p != b && p != c && in_closed_triangle(a, b, c, p)
            });
            if !blocked {
                tris.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(Error::SelfIntersectingPolygon("ear clipping found no ear".into()));
        }
    }
    let (a, b, c) = (ring[idx[0]], ring[idx[1]], ring[idx[2]]);
    if orient(a, b, c) > 1e-14 {
        tris.push([a, b, c]);
    }
    Ok(tris)
}

#[derive(Clone, Debug)]
pub struct PolygonDecomposition {
    pub polygon: Polygon,
    pub triangles: Vec<[Point; 3]>,
    pub pieces: Vec<BilinearQuadMap>,
}

impl PolygonDecomposition {
    pub fn quads(&self) -> impl Iterator<Item = &ConvexQuad> {
        self.pieces.iter().map(|m| m.quad())
    }
}

pub fn decompose_polygon(poly: &Polygon) -> Result<PolygonDecomposition> {
    let triangles = triangulate(poly)?;
    let mut pieces = Vec::with_capacity(3 * triangles.len());
    for t in &triangles {
        for q in cover_triangle(*t)? {
            pieces.push(BilinearQuadMap::new(q));
        }
    }
    let total: f64 = pieces.iter().map(|m| m.quad().area()).sum();
    let area = poly.area();
    if (total - area).abs() > 1e-9 * area.max(1.0) {
        return Err(Error::SelfIntersectingPolygon(format!("pieces cover area {total}, polygon has {area}")));
    }
    Ok(PolygonDecomposition { polygon: poly.clone(), triangles, pieces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poly(outer: &[[f64; 2]]) -> Polygon {
        Polygon { outer: outer.to_vec(), holes: vec![] }
    }

    #[test]
    fn counts() {
        let sq = decompose_polygon(&poly(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])).unwrap();
        assert_eq!((sq.triangles.len(), sq.pieces.len()), (2, 6));
        assert_abs_diff_eq!(sq.quads().map(|q| q.area()).sum::<f64>(), 1.0, epsilon = 1e-12);
        let pent: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert_eq!(decompose_polygon(&poly(&pent)).unwrap().pieces.len(), 9);
        let l = poly(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]);
        let d = decompose_polygon(&l).unwrap();
        assert_eq!(d.pieces.len(), 12);
        assert_abs_diff_eq!(d.quads().map(|q| q.area()).sum::<f64>(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn clockwise_input_and_holes() {
        let p = Polygon {
            outer: vec![[0.0, 0.0], [0.0, 3.0], [3.0, 3.0], [3.0, 0.0]],
            holes: vec![vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]]],
        };
        let d = decompose_polygon(&p).unwrap();
        assert_eq!(d.triangles.len(), 8);
        assert_abs_diff_eq!(d.quads().map(|q| q.area()).sum::<f64>(), 8.0, epsilon = 1e-12);
        assert!(!p.contains(Point::new(1.5, 1.5)));
    }

    #[test]
    fn bowtie_rejected() {
        let b = poly(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(decompose_polygon(&b), Err(Error::SelfIntersectingPolygon(_))));
    }
}
