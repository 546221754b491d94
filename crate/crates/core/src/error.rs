//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("boundary is not strictly convex: {0}")]
    NonConvex(String),

    #[error("a billiard table requires at least 3 obstacles, got {0}")]
    TooFewObstacles(usize),

    #[error("obstacles {0} and {1} are not disjoint")]
    ObstaclesOverlap(usize, usize),

    #[error("eclipse violation: obstacle {k} meets hull({i}, {j}), penetration depth {depth:.6e}")]
    EclipseViolation {
        i: usize,
        j: usize,
        k: usize,
        depth: f64,
    },

    #[error("malformed table description: {0}")]
    Malformed(String),

    #[error("symbol {0} out of range 1..={1}")]
    SymbolOutOfRange(u32, u32),

    #[error("word is not admissible: {0}")]
    Inadmissible(String),

    #[error("tau symbols violate the family constraints: {0}")]
    InadmissibleTau(String),

    #[error("ray does not intersect obstacle {target}")]
    NoIntersection { target: usize },

    #[error("ray toward obstacle {target} is occluded by obstacle {occluder}")]
    Occlusion { target: usize, occluder: usize },

    #[error("grazing-degenerate bounce: cos(phi) = {0:.3e} below tolerance")]
    GrazingDegenerate(f64),

    #[error("monodromy is not hyperbolic: |trace| = {0:.6}")]
    NonHyperbolic(f64),

    #[error("solver did not converge for word {word} (residual {residual:.3e})")]
    NoConvergence { word: String, residual: f64 },

    #[error("converged orbit for {word} fails the itinerary check at bounce {bounce}")]
    ItineraryMismatch { word: String, bounce: usize },

    #[error("requested mantissa {0} exceeds the configured maximum {1}")]
    PrecisionUnavailable(u32, u32),

    #[error("insufficient precision: {0}")]
    InsufficientPrecision(String),

    #[error("series is not geometric: {0}")]
    NonGeometric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no positive root: {0}")]
    NoPositiveRoot(String),

    #[error("inconsistent system: {0}")]
    InconsistentSystem(String),

    #[error("spectrum store fingerprint mismatch: store has {found}, table is {expected}")]
    FingerprintMismatch { found: String, expected: String },

    #[error("store format error: {0}")]
    StoreFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
