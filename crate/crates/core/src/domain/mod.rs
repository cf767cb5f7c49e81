//! Polygonal domains: bilinear quadrilateral charts, triangulation and the
//! conjugation of unit-square constructions.

pub mod conjugate;
pub mod polygon;
pub mod quad;

pub use conjugate::{assemble, conjugate_stretch, pull_back_mask, ConjugatedPiece, FramedMask, PiecewiseMap};
pub use polygon::{decompose_polygon, triangulate, Polygon, PolygonDecomposition};
pub use quad::{cover_triangle, BilinearQuadMap, ConvexQuad};
