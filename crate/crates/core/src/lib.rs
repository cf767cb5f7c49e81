//! Constructive bi-Lipschitz solutions of the planar prescribed Jacobian
//! inequality `det ∇φ ≥ f`, `φ = id` on the boundary, together with a
//! harness that measures every quantitative estimate of the construction.

pub mod boundary;
pub mod covering;
pub mod domain;
pub mod error;
pub mod field;
pub mod map;
pub mod mask;
pub mod moser;
pub mod pl;
pub mod render;
pub mod solver;
pub mod stretch;
pub mod verify;

pub use error::{Error, Result};

pub type Point = nalgebra::Point2<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
