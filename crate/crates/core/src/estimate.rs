use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DpLattice,
    Grid,
    NaiveMc,
    Splitting,
    BruteForce,
}

impl Method {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::NaiveMc | Method::Splitting)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::DpLattice => "dp_lattice",
            Method::Grid => "grid",
            Method::NaiveMc => "naive_mc",
            Method::Splitting => "splitting",
            Method::BruteForce => "brute_force",
        }
    }
}

/// A quenched tube-survival probability, from any estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub p: f64,
    /// Natural log of `p`; `-inf` when `p == 0`.
    pub log_p: f64,
    /// Standard error of `log_p`, present for stochastic methods.
    pub stderr_log: Option<f64>,
    pub method: Method,
    /// Paths, particle-steps or transition evaluations spent.
    pub work: u64,
    pub seed: u64,
    /// Grid estimator only: |log p(grid) - log p(grid / 2)|.
    pub refinement_delta: Option<f64>,
    /// Grid estimator only: refinement delta exceeded the tolerance.
    pub coarse: bool,
    /// Splitting only: the population died out in some block.
    pub extinct: bool,
}

impl SurvivalEstimate {
    pub(crate) fn exact(log_p: f64, method: Method, work: u64) -> Self {
        Self {
            p: log_p.exp(),
            log_p,
            stderr_log: None,
            method,
            work,
            seed: 0,
            refinement_delta: None,
            coarse: false,
            extinct: false,
        }
    }

    pub(crate) fn stochastic(log_p: f64, stderr_log: f64, method: Method, work: u64, seed: u64) -> Self {
        Self {
            p: log_p.exp(),
            log_p,
            stderr_log: Some(stderr_log),
            method,
            work,
            seed,
            refinement_delta: None,
            coarse: false,
            extinct: false,
        }
    }
}
