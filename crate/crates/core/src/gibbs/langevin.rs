//! Mean-field Langevin dynamics with an Euler–Maruyama step:
//! `θ_i ← θ_i − h ∇[δR/δm(m̂, ν, θ_i) + U(θ_i)/(2β²)] + sqrt(hσ²/β²) ξ_i`,
//! where `m̂` is the current particle cloud.

use super::GibbsProblem;
use crate::losses::{Activation, LossModel, ParametricLoss};
use crate::measures::{norm_sq, DataMeasure, ParamMeasure, Particles};
use crate::rng::{normal, uniform};
use crate::{error::invalid, par, Error, Result};
use alloc::format;
use alloc::vec::Vec;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

/// Particle count, step size, number of steps and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfldOptions {
    /// Number of particles `N ≥ 1`.
    pub particles: usize,
    /// Step size `h > 0`.
    pub step: f64,
    /// Number of steps `T`.
    pub steps: usize,
    /// Seed of the internal generator.
    pub seed: u64,
}

/// Runs the particle system from `N` draws of `γ^σ` and returns the final cloud.
///
/// Rejects losses with no `θ`-gradient and step sizes that fail
/// `h·(2β²/σ²)·L ≤ 0.25` and `h·L ≤ 1`, where `L` bounds the Lipschitz constant
/// of the drift near the initial cloud. Fails if a particle leaves the ball of
/// radius ten times the grid half-width.
pub fn mfld_sample(problem: &GibbsProblem, nu: &DataMeasure, opts: &MfldOptions) -> Result<Particles> {
    let model = problem.model();
    match model {
        LossModel::NeuralNet(nn) if nn.activation == Activation::Heaviside => {
            return Err(Error::Incompatible("the step activation has no θ-gradient".into()))
        }
        LossModel::ExpectedParam(ParametricLoss::Custom { grad: None, .. }) => {
            return Err(Error::Incompatible("custom loss has no gradient".into()))
        }
        _ => {}
    }
    if opts.particles == 0 || !(opts.step > 0.0) {
        return Err(invalid("need at least one particle and a positive step"));
    }
    if nu.is_signed() {
        return Err(Error::SignedMeasure);
    }
    let cfg = problem.config();
    let dim = model.param_dim();
    let beta2 = cfg.beta * cfg.beta;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut pts = init_from_prior(problem, opts.particles, &mut rng);

    let lip = drift_lipschitz(problem, nu, &pts)?;
    let k = cfg.temperature();
    if opts.step * k * lip > 0.25 || opts.step * lip > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "step {} too large for drift Lipschitz estimate {lip:.3e}",
            opts.step
        )));
    }

    let noise = libm::sqrt(opts.step * cfg.sigma * cfg.sigma / beta2);
    let limit = 10.0 * problem.grid().radius();
    let limit2 = limit * limit;
    let u = cfg.regularizer;
    for step in 0..opts.steps {
        let cloud = ParamMeasure::Particles(Particles::new(dim, pts.clone())?);
        let lin = model.linearize_risk(&cloud, nu)?;
        let drifts: Vec<Result<Vec<f64>>> = par::map_indexed(opts.particles, |i| {
            let t = &pts[i * dim..(i + 1) * dim];
            let mut g = alloc::vec![0.0; dim];
            lin.grad_dm(t, &mut g)?;
            u.grad_add(t, 1.0 / (2.0 * beta2), &mut g);
            Ok(g)
        });
        for (i, d) in drifts.into_iter().enumerate() {
            let d = d?;
            let t = &mut pts[i * dim..(i + 1) * dim];
            for (c, dc) in t.iter_mut().zip(&d) {
                *c += -opts.step * dc + noise * normal(&mut rng);
            }
            let r2 = norm_sq(t);
            if !(r2 <= limit2) {
                return Err(Error::Diverged { step });
            }
        }
    }
    Particles::new(dim, pts)
}

/// `N` draws from the grid `γ^σ`: a node by inverse CDF, then uniform jitter within its cell.
fn init_from_prior(problem: &GibbsProblem, n: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let grid = problem.grid();
    let dim = grid.dim();
    let masses = problem.prior().gamma_sigma.masses();
    let mut cdf = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &masses {
        acc += m;
        cdf.push(acc);
    }
    let h = grid.spacing().unwrap_or(0.0);
    let mut pts = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let u = uniform(rng) * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(masses.len() - 1);
        for &c in grid.node(idx) {
            pts.push(c + h * (uniform(rng) - 0.5));
        }
    }
    pts
}

/// Lipschitz estimate for `θ ↦ ∇[δR/δm + U/(2β²)]` on the ball containing `pts`:
/// analytic Hessian bound for `U`, central-difference Hessian (Frobenius norm) for
/// the loss part at up to 64 probe particles.
fn drift_lipschitz(problem: &GibbsProblem, nu: &DataMeasure, pts: &[f64]) -> Result<f64> {
    let model = problem.model();
    let cfg = problem.config();
    let dim = model.param_dim();
    let n = pts.len() / dim;
    let r = (0..n)
        .map(|i| libm::sqrt(norm_sq(&pts[i * dim..(i + 1) * dim])))
        .fold(0.0f64, f64::max);
    let u_part = cfg.regularizer.hessian_bound(r) / (2.0 * cfg.beta * cfg.beta);
    let cloud = ParamMeasure::Particles(Particles::new(dim, pts.to_vec())?);
    let lin = model.linearize_risk(&cloud, nu)?;
    let eps = 1e-4;
    let stride = n.div_ceil(64).max(1);
    let mut worst: f64 = 0.0;
    let mut gp = alloc::vec![0.0; dim];
    let mut gm = alloc::vec![0.0; dim];
    for i in (0..n).step_by(stride) {
        let mut t = pts[i * dim..(i + 1) * dim].to_vec();
        let mut fro = 0.0;
        for j in 0..dim {
            let c = t[j];
            t[j] = c + eps;
            lin.grad_dm(&t, &mut gp)?;
            t[j] = c - eps;
            lin.grad_dm(&t, &mut gm)?;
            t[j] = c;
            fro += gp
                .iter()
                .zip(&gm)
                .map(|(a, b)| {
                    let d = (a - b) / (2.0 * eps);
                    d * d
                })
                .sum::<f64>();
        }
        worst = worst.max(libm::sqrt(fro));
    }
    Ok(worst + u_part)
}
