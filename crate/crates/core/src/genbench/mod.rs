//! Generalization-error estimators, explicit bounds, exact oracles and rate fits.
//!
//! Every estimator runs independent replicates. Replicate `r` draws, in order, the
//! `n` training points, two fresh points `Z̄₁, Z̄₂` and (when the population has no
//! quadrature) an out-of-sample batch of `batch_factor·n` points, all from
//! [`crate::rng::replicate_rng`]`(seed, r)`. Trainers receive `mix(seed, r)` as their seed,
//! shared by `ν_n` and its resampled versions.

mod bounds;
mod estimators;
mod exact;
mod population;
mod rate;
mod trainer;

pub use bounds::{gibbs_bound_constants, population_risk_bound, BoundConstants, RiskBound, ScheduleMode};
pub use estimators::{
    convex_lower_bound_check, lge, lge_upper_terms, markov_tail, wge_direct, wge_representation,
    wge_resampled, LgeUpperTerms, Setup,
};
pub use exact::{enumerate_exact_gen, ExactGen};
pub use population::{Moment, PopulationModel};
pub use rate::{rate_fit, RateFit};
pub use trainer::{explicit_gaussian_dm_dnu, gaussian_on_grid, Trainer};

/// Which quantity an estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Population minus empirical risk.
    Direct,
    /// Loss change under resampling one point.
    Resampled,
    /// `(1/n)E[h]` from the δm/δν representation.
    Representation,
    /// Squared risk gap.
    Lge,
    /// Convexity lower bound on the WGE.
    ConvexLower,
    /// Population risk of the trained measure.
    PopulationRisk,
    /// Squared population risk of the trained measure.
    SquaredPopulationRisk,
}

impl Route {
    /// Lower-case name.
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Resampled => "resampled",
            Self::Representation => "representation",
            Self::Lge => "lge",
            Self::ConvexLower => "convex_lower",
            Self::PopulationRisk => "population_risk",
            Self::SquaredPopulationRisk => "squared_population_risk",
        }
    }
}

/// Monte Carlo mean with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenEstimate {
    /// Mean over replicates.
    pub value: f64,
    /// Sample standard deviation over `sqrt(replicates)`.
    pub stderr: f64,
    /// Number of replicates.
    pub replicates: usize,
    /// Sample size.
    pub n: usize,
    /// Top-level seed.
    pub seed: u64,
    /// Estimated quantity.
    pub route: Route,
}

impl GenEstimate {
    /// True when `|value − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    /// True when the `±k·stderr` intervals of the two estimates intersect.
    pub fn overlaps(&self, other: &GenEstimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * (self.stderr + other.stderr)
    }
}

/// Exact WGE `2σ̃²/n` of the explicit Gaussian-mean learner.
pub fn gaussian_mean_oracle(noise_sd: f64, n: usize) -> f64 {
    2.0 * noise_sd * noise_sd / n as f64
}
