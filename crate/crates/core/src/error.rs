use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({0}, {1}) lies outside the map domain")]
    PointOutsideDomain(f64, f64),
    #[error("point ({0}, {1}) lies on a registered kink line")]
    KinkLineSingularity(f64, f64),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("level overflow: requested level {requested}, maximum is {max}")]
    LevelOverflow { requested: u32, max: u32 },
    #[error("strip-count bound not achievable up to level {0}")]
    BoundUnachievable(u32),
    #[error("smallness gate violated: {0}")]
    SmallnessViolated(String),
    #[error("quadrilateral is not strictly convex and counterclockwise")]
    NonConvexQuad,
    #[error("point ({0}, {1}) lies outside the quadrilateral")]
    PointOutsideQuad(f64, f64),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("polygon is self-intersecting or malformed: {0}")]
    SelfIntersectingPolygon(String),
    #[error("chart distortion too large: {0}")]
    DistortionTooLarge(String),
    #[error("delta infeasible: (1+delta)*int f = {lhs} must be < |Omega|(1-delta) = {rhs}")]
    DeltaInfeasible { lhs: f64, rhs: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("tolerance not met: achieved {achieved:e}, required {required:e}")]
    ToleranceNotMet { achieved: f64, required: f64 },
    #[error("right-hand side must be positive, found minimum {0}")]
    NonpositiveF(f64),
    #[error("integral condition violated: int f = {integral} must be < |Omega| = {area}")]
    IntegralCondition { integral: f64, area: f64 },
    #[error("infeasible exponents p = {p}, q = {q}: need 1 < q < (p+1)/2")]
    InfeasibleExponents { p: f64, q: f64 },
    #[error("gate violated: {0}")]
    GateViolated(String),
    #[error("decay stalled at iteration {0}")]
    DecayStalled(usize),
    #[error("no admissible mollifier width found: {0}")]
    EpsilonSearchFailed(String),
    #[error("test function support must stay away from the boundary")]
    EtaSupportViolation,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of a mathematical precondition, as opposed to
    /// malformed input or missed numerical targets.
    pub fn is_gate(&self) -> bool {
        matches!(
            self,
            Error::SmallnessViolated(_)
                | Error::BoundUnachievable(_)
                | Error::DistortionTooLarge(_)
                | Error::DeltaInfeasible { .. }
                | Error::IntegralCondition { .. }
                | Error::InfeasibleExponents { .. }
                | Error::GateViolated(_)
                | Error::EpsilonSearchFailed(_)
                | Error::NonpositiveF(_)
        )
    }

    pub fn is_tolerance(&self) -> bool {
        matches!(self, Error::ToleranceNotMet { .. } | Error::DecayStalled(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
