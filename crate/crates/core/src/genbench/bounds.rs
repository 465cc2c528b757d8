use super::estimators::{mean_stderr, Setup};
use super::population::PopulationModel;
use super::trainer::Trainer;
use super::{GenEstimate, Route};
use crate::gibbs::GibbsProblem;
use crate::measures::ParamMeasure;
use crate::{error::invalid, Error, Result};
use alloc::format;

/// Explicit constants of the Gibbs WGE and LGE bounds at sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Envelope constant `C_θ`.
    pub c_theta: f64,
    /// `∫‖θ‖^p γ̃_p^σ`.
    pub tilted_moment: f64,
    /// `g(γ̃_p^σ)`.
    pub tilted_growth: f64,
    /// `c = (9√2/2) C_θ² [1 + 2∫‖θ‖^p γ̃ + 4g(γ̃)/n]²`.
    pub c_wge: f64,
    /// `(c/n)(2β²/σ²) E[(1+‖Z‖²)⁴]`.
    pub wge_bound: f64,
    /// `2·5⁴ (2β²/σ²)² C_θ⁴ (1 + 2∫‖θ‖^p γ̃ + 8g(γ̃))⁴ E[(1+‖Z‖²)⁸]`.
    pub a: f64,
    /// A priori bound on `K`: `G² (2 + ∫‖θ‖^p γ̃ + (2β²/σ²) g(γ̃))^{2d} E[(1+‖Z‖²)^{2d+2}]`,
    /// where `ℓ(m, z) ≤ G (1 + E_m‖θ‖²)^d (1 + ‖z‖²)`.
    pub k: f64,
    /// `(1/n)(4K + 2K^{1/2}A^{1/2} + A/n)`.
    pub lge_bound: f64,
}

/// Evaluates the explicit WGE and LGE bounds for the Gibbs minimizer of `problem`.
///
/// Requires `2q > max(p, envelope degree)` and `p` at least the envelope constant's
/// minimum order. Population moments come from the moment oracle.
pub fn gibbs_bound_constants(problem: &GibbsProblem, pop: &PopulationModel, n: usize) -> Result<BoundConstants> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let model = problem.model();
    let cfg = problem.config();
    cfg.regularizer.check_growth(cfg.p, model)?;
    let (c_theta, p_min) = model.envelope_constant();
    if cfg.p < p_min {
        return Err(Error::Incompatible(format!(
            "the envelope constant needs p ≥ {p_min}, got {}",
            cfg.p
        )));
    }
    let tilted = ParamMeasure::Grid(problem.prior().gamma_tilde_p.clone());
    let a_p = tilted.moment(cfg.p);
    let g = model.growth_envelopes(&tilted, None).0;
    let kt = cfg.temperature();
    let nf = n as f64;
    let inner = 1.0 + 2.0 * a_p + 4.0 * g / nf;
    let c_wge = 4.5 * libm::sqrt(2.0) * c_theta * c_theta * inner * inner;
    let wge_bound = c_wge / nf * kt * pop.moment(4)?.value;
    let a_inner = 1.0 + 2.0 * a_p + 8.0 * g;
    let a = 2.0 * 625.0 * kt * kt * libm::pow(c_theta, 4.0) * libm::pow(a_inner, 4.0) * pop.moment(8)?.value;
    let origin = ParamMeasure::point_mass(&alloc::vec![0.0; model.param_dim()])?;
    let big_g = model.growth_envelopes(&origin, None).0;
    let d = model.envelope_degree() / 2;
    let k = big_g * big_g
        * libm::pow(2.0 + a_p + kt * g, 2.0 * d as f64)
        * pop.moment(2 * d as usize + 2)?.value;
    let lge_bound = (4.0 * k + 2.0 * libm::sqrt(k * a) + a / nf) / nf;
    Ok(BoundConstants {
        c_theta,
        tilted_moment: a_p,
        tilted_growth: g,
        c_wge,
        wge_bound,
        a,
        k,
        lge_bound,
    })
}

/// How `β` grows with `n` and which risk is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// `β = β₀ n^{1/4}`; bounds `E[R(m(ν_n), ν_pop)]`.
    WgeN14,
    /// `β = β₀ n^{1/6}`; bounds `E[R(m(ν_n), ν_pop)²]`.
    LgeN16,
}

impl ScheduleMode {
    /// Exponent of `n` in `β(n)`.
    pub fn beta_exponent(self) -> f64 {
        match self {
            Self::WgeN14 => 0.25,
            Self::LgeN16 => 1.0 / 6.0,
        }
    }

    /// Exponent `r` with `bound = O(n^{−r})`.
    pub fn rate(self) -> f64 {
        match self {
            Self::WgeN14 => 0.5,
            Self::LgeN16 => 2.0 / 3.0,
        }
    }
}

/// Population-risk bound under a `β(n)` schedule, with its Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBound {
    /// `β(n)`.
    pub beta: f64,
    /// Bound constants at `β(n)`.
    pub constants: BoundConstants,
    /// `(σ²/2β²) KL(m̄ ‖ γ^σ)`.
    pub kl_term: f64,
    /// Mean over replicates of `R(m̄, ν_n)` (wge mode) or `(kl_term + R(m̄, ν_n))²` (lge mode).
    pub reference_term: f64,
    /// Standard error of `reference_term`.
    pub reference_stderr: f64,
    /// wge mode: `wge_bound + kl_term + E[R(m̄, ν_n)]`;
    /// lge mode: `2·lge_bound + 2E[(kl_term + R(m̄, ν_n))²]`.
    pub risk_bound: f64,
    /// `n^r · risk_bound` with `r = 1/2` or `2/3`.
    pub scaled_bound: f64,
    /// `E[R(m(ν_n), ν_pop)]` or `E[R(m(ν_n), ν_pop)²]`.
    pub empirical_risk: GenEstimate,
    /// `empirical − 2·stderr ≤ risk_bound + 2·reference_stderr`.
    pub holds: bool,
}

/// Bounds the (squared) population risk of the Gibbs minimizer at `β = β₀ n^{r}` through a
/// reference measure `m̄` on the problem's grid, and estimates the risk by Monte Carlo.
#[allow(clippy::too_many_arguments)]
pub fn population_risk_bound(
    problem: &GibbsProblem,
    pop: &PopulationModel,
    m_bar: &ParamMeasure,
    n: usize,
    mode: ScheduleMode,
    beta0: f64,
    replicates: usize,
    seed: u64,
) -> Result<RiskBound> {
    if !(beta0 > 0.0 && beta0.is_finite()) {
        return Err(invalid("β₀ must be positive"));
    }
    let beta = beta0 * libm::pow(n as f64, mode.beta_exponent());
    let problem = problem.with_beta(beta)?;
    let constants = gibbs_bound_constants(&problem, pop, n)?;
    let kl_term = problem.objective_gap_bound(m_bar)?;
    let model = *problem.model();
    let trainer = Trainer::GibbsGrid(problem);
    let setup = Setup::new(&trainer, pop, &model);
    let rows = setup.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let m = trainer.train(&nu, n, d.train_seed)?;
        let risk = pop.risk(&model, &m, &d.batch)?;
        let r_bar = model.risk(m_bar, &nu)?;
        Ok(match mode {
            ScheduleMode::WgeN14 => [risk, r_bar],
            ScheduleMode::LgeN16 => [risk * risk, (kl_term + r_bar) * (kl_term + r_bar)],
        })
    })?;
    let risks: alloc::vec::Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let refs: alloc::vec::Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (value, stderr) = mean_stderr(&risks);
    let (reference_term, reference_stderr) = mean_stderr(&refs);
    let risk_bound = match mode {
        ScheduleMode::WgeN14 => constants.wge_bound + kl_term + reference_term,
        ScheduleMode::LgeN16 => 2.0 * constants.lge_bound + 2.0 * reference_term,
    };
    let empirical_risk = GenEstimate {
        value,
        stderr,
        replicates,
        n,
        seed,
        route: match mode {
            ScheduleMode::WgeN14 => Route::PopulationRisk,
            ScheduleMode::LgeN16 => Route::SquaredPopulationRisk,
        },
    };
    Ok(RiskBound {
        beta,
        constants,
        kl_term,
        reference_term,
        reference_stderr,
        risk_bound,
        scaled_bound: libm::pow(n as f64, mode.rate()) * risk_bound,
        holds: value - 2.0 * stderr <= risk_bound + 2.0 * reference_stderr,
        empirical_risk,
    })
}
