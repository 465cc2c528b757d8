use crate::gibbs::{mfld_sample, GibbsProblem, MfldOptions};
use crate::measures::{DataMeasure, Grid, GridDensity, ParamMeasure};
use crate::rng::mix;
use crate::{error::invalid, Error, Result};
use alloc::sync::Arc;
use alloc::vec::Vec;

const EXPLICIT_NODES: usize = 129;
const EXPLICIT_HALF_WIDTH: f64 = 12.0;

/// Learning map `ν ↦ m(ν)`, deterministic given a seed.
#[derive(Debug, Clone)]
pub enum Trainer {
    /// Ignores the data.
    Constant(ParamMeasure),
    /// Gibbs minimizer on the problem's grid.
    GibbsGrid(GibbsProblem),
    /// Final particle cloud of mean-field Langevin dynamics.
    Mfld {
        /// Objective and its parameters.
        problem: GibbsProblem,
        /// Particle count, step and horizon; the seed is mixed with the replicate seed.
        options: MfldOptions,
    },
    /// `N(E_ν[y], σ̃²/n)` on a grid spanning ±12 standard deviations.
    ExplicitGaussianMean {
        /// `σ̃`.
        noise_sd: f64,
    },
}

impl Trainer {
    /// Trains on `ν`; `n` is the nominal sample size and `seed` keys any internal randomness.
    pub fn train(&self, nu: &DataMeasure, n: usize, seed: u64) -> Result<ParamMeasure> {
        match self {
            Self::Constant(m) => Ok(m.clone()),
            Self::GibbsGrid(p) => Ok(p.solve(nu)?.measure()),
            Self::Mfld { problem, options } => {
                let opts = MfldOptions {
                    seed: mix(options.seed, seed),
                    ..*options
                };
                Ok(ParamMeasure::Particles(mfld_sample(problem, nu, &opts)?))
            }
            Self::ExplicitGaussianMean { noise_sd } => {
                if n == 0 {
                    return Err(Error::EmptyDataset);
                }
                let mean = nu.integrate(|z| z.y)?;
                let sd = noise_sd / libm::sqrt(n as f64);
                let grid = Arc::new(centered_grid(mean, sd)?);
                Ok(ParamMeasure::Grid(gaussian_on_grid(grid, mean, sd * sd)?))
            }
        }
    }

    /// The Gibbs problem behind grid-based trainers.
    pub fn gibbs_problem(&self) -> Option<&GibbsProblem> {
        match self {
            Self::GibbsGrid(p) => Some(p),
            _ => None,
        }
    }

    /// True when the output does not depend on the seed.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Self::Mfld { .. })
    }
}

fn centered_grid(mean: f64, sd: f64) -> Result<Grid> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(invalid("explicit trainer needs σ̃ > 0"));
    }
    let h = 2.0 * EXPLICIT_HALF_WIDTH * sd / (EXPLICIT_NODES - 1) as f64;
    let nodes: Vec<f64> = (0..EXPLICIT_NODES)
        .map(|i| mean - EXPLICIT_HALF_WIDTH * sd + h * i as f64)
        .collect();
    let vols = (0..EXPLICIT_NODES)
        .map(|i| if i == 0 || i + 1 == EXPLICIT_NODES { h / 2.0 } else { h })
        .collect();
    Grid::from_nodes(1, nodes, vols)
}

/// `N(mean, var)` restricted to a 1-D grid and renormalized.
pub fn gaussian_on_grid(grid: Arc<Grid>, mean: f64, var: f64) -> Result<GridDensity> {
    if grid.dim() != 1 || !(var > 0.0) {
        return Err(invalid("need a 1-D grid and a positive variance"));
    }
    let logs: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|t| -(t - mean) * (t - mean) / (2.0 * var))
        .collect();
    GridDensity::from_log(grid, &logs)
}

/// Closed-form `δm/δν(ν, z)(θ) = m(θ)·(n/σ̃²)(θ − E_ν y)(z − E_ν y)` for the explicit
/// Gaussian trainer, with `m` restricted to `grid`.
pub fn explicit_gaussian_dm_dnu(
    grid: Arc<Grid>,
    nu: &DataMeasure,
    z_y: f64,
    noise_sd: f64,
    n: usize,
) -> Result<GridDensity> {
    if n == 0 || !(noise_sd > 0.0) {
        return Err(Error::InvalidArgument("need n ≥ 1 and σ̃ > 0".into()));
    }
    let mean = nu.integrate(|z| z.y)?;
    let var = noise_sd * noise_sd / n as f64;
    let m = gaussian_on_grid(grid.clone(), mean, var)?;
    let vals = m
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(d, t)| d * (t - mean) * (z_y - mean) / var)
        .collect();
    GridDensity::signed(grid, vals)
}
