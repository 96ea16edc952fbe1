//! Monte Carlo estimators for the three path-integral representations.
//!
//! * `std(D)`: Langevin sampling of the ring-polymer distribution.
//! * `cl(N)`: self-normalised importance sampling under `ν`, with the loop
//!   integrals done by a periodic midpoint rule.
//! * `cl(N,D)`: the same, with left Riemann sums on `D` beads.

mod cl;
mod std_pir;

pub use cl::{
    ab_differences, cl_samples, default_n_quad, estimate_cl_discretized, estimate_cl_truncated, paired_difference,
    quadrature_nodes, quadrature_va, riemann_va, AbDifferences, ClConfig, Integration, PairedDifference,
    QuadratureValue, SampleSet,
};
pub use std_pir::{
    normal_mode_energy, sample_std, std_energy, std_energy_grad, StdSamplerConfig,
};

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which representation produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Representation {
    Std { beads: usize },
    Cl { modes: usize },
    ClDisc { modes: usize, beads: usize },
}

impl Representation {
    pub fn modes(&self) -> Option<usize> {
        match *self {
            Representation::Std { .. } => None,
            Representation::Cl { modes } | Representation::ClDisc { modes, .. } => Some(modes),
        }
    }

    pub fn beads(&self) -> Option<usize> {
        match *self {
            Representation::Cl { .. } => None,
            Representation::Std { beads } | Representation::ClDisc { beads, .. } => Some(beads),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Std { beads } => write!(f, "std(D={beads})"),
            Representation::Cl { modes } => write!(f, "cl(N={modes})"),
            Representation::ClDisc { modes, beads } => write!(f, "cl(N={modes},D={beads})"),
        }
    }
}

/// A Monte Carlo estimate with its error bar and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Effective sample size; `≤ n_samples`.
    pub ess: f64,
    pub seed: u64,
    pub representation: Representation,
    /// Set when the ESS fell below the configured floor.
    pub ess_warning: bool,
    /// Metropolis acceptance rate (Langevin sampler only).
    pub acceptance: Option<f64>,
    pub wall_time_s: f64,
}

/// Summary of the per-sample weights `𝒜 = exp(−∫V^a)` and observable
/// averages `ℬ` behind a CL estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABStatistics {
    /// `E_ν[𝒜]` and its standard error.
    pub mean_a: f64,
    pub mean_a_se: f64,
    pub mean_b: f64,
    pub mean_ab: f64,
    pub max_log_a: f64,
    pub max_abs_b: f64,
    /// Samples with `𝒜 > exp(βM1)`.
    pub a_bound_violations: usize,
    /// Samples with `|ℬ| > M2`.
    pub b_bound_violations: usize,
}
