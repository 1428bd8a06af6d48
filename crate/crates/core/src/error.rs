//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("interior required: node {node} touches a grid face")]
    InteriorRequired { node: usize },

    #[error("under-resolved: radius {radius} is below the floor {min} ({factor} grid spacings)")]
    UnderResolved { radius: f64, min: f64, factor: f64 },

    #[error("ball of radius {radius} around {center:?} exits the grid box")]
    BallExitsGrid { center: Vec<f64>, radius: f64 },

    #[error("dilated image exits the source grid box")]
    ImageExitsBox,

    #[error("grid spec mismatch between fields")]
    SpecMismatch,

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("no mass in ball of radius {radius} around {center:?}")]
    NoMass { center: Vec<f64>, radius: f64 },

    #[error("divergence: non-finite value during sweep {sweep}")]
    Divergence { sweep: usize },

    #[error("free boundary is empty")]
    EmptyFreeBoundary,

    #[error("point {point:?} is not within {tol} of the free boundary")]
    NotNearFreeBoundary { point: Vec<f64>, tol: f64 },

    #[error("balls {i} and {j} overlap")]
    OverlappingBalls { i: usize, j: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config invariant violated: {0}")]
    ConfigInvariant(String),

    #[error("density probe below resolution: requested radius {requested} < floor {floor} at {point:?}")]
    Unresolvable {
        point: Vec<f64>,
        requested: f64,
        floor: f64,
    },

    #[error("alternation stalled after {generations} generations (classification bug?)")]
    AlternationStalled { generations: usize },

    #[error("drop accounting violated: generation bound {bound} reached with {remaining} balls above the stop scale")]
    DropAccountingViolated { bound: usize, remaining: usize },

    #[error("packing condition violated: 2*c1*c2*rho = {value:.6} > 1/2 (c1 = {c1:.4}, c2 = {c2:.4}, rho = {rho})")]
    PackingCondition {
        c1: f64,
        c2: f64,
        rho: f64,
        value: f64,
    },

    #[error("root ball must be classified {expected}")]
    WrongRootKind { expected: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
