use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("invalid tube: {0}")]
    InvalidTube(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("start point {x0} lies outside the open tube ({lower}, {upper}) at time 0")]
    StartOutsideTube { x0: f64, lower: f64, upper: f64 },
    #[error("step {index} is not supported on the lattice (1/q)Z; use the grid estimator instead")]
    NonLattice { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("confinement probability underflowed to zero for replica {replica} (beta={beta}); refine the grid or shorten dt")]
    ZeroProbability { replica: usize, beta: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("estimator failed at n={n}: {source}")]
    AtN { n: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
