use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("negative arrival rate for class {class}: {rate}")]
    NegativeRate { class: usize, rate: f64 },
    #[error("invalid state {counts:?}: {reason}")]
    InvalidState { counts: Vec<u32>, reason: String },
    #[error("state space is unbounded (class {0} has an infinite buffer)")]
    Unbounded(usize),
    #[error("instance too large: {entries} matrix entries exceeds cap {cap}")]
    TooLarge { entries: usize, cap: usize },
    #[error("state {0:?} is off the product-zero manifold")]
    OffManifold(Vec<f64>),
    #[error("no interior lattice state lies inside the window")]
    EmptyWindow,
    #[error("matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("invalid reflection band [{lower}, {upper}]")]
    BadBand { lower: f64, upper: f64 },
    #[error("invalid initial condition: {0}")]
    BadInit(String),
    #[error("step too large for class {class}: excursion {excursion} exceeds buffer {buffer}")]
    StepTooLarge {
        class: usize,
        excursion: f64,
        buffer: f64,
    },
    #[error("empty sample")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}
