use super::population::PopulationModel;
use super::trainer::Trainer;
use super::{GenEstimate, Route};
use crate::funcderiv::DerivativeSolver;
use crate::gibbs::GibbsProblem;
use crate::losses::LossModel;
use crate::measures::{ConvexCombination, DataMeasure, DataPoint, GridDensity, ParamMeasure};
use crate::quadrature::gauss_legendre_unit;
use crate::rng::{mix, replicate_rng};
use crate::{error::invalid, par, Error, Result};
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

/// Trainer, population and loss shared by the estimators, plus estimator settings.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    /// Learning map.
    pub trainer: &'a Trainer,
    /// Data distribution.
    pub pop: &'a PopulationModel,
    /// Loss used for risks.
    pub model: &'a LossModel,
    /// Out-of-sample batch size as a multiple of `n`, used when `pop` has no quadrature.
    pub batch_factor: usize,
    /// Gauss–Legendre nodes per interpolation axis `λ`, `λ̃`.
    pub lambda_nodes: usize,
}

impl<'a> Setup<'a> {
    /// Batch factor 10 and 8 interpolation nodes.
    pub fn new(trainer: &'a Trainer, pop: &'a PopulationModel, model: &'a LossModel) -> Self {
        Self {
            trainer,
            pop,
            model,
            batch_factor: 10,
            lambda_nodes: 8,
        }
    }

    /// Runs `f` on the draws of each replicate, in replicate order.
    pub(crate) fn replicates<T, F>(&self, n: usize, replicates: usize, seed: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Draw) -> Result<T> + Sync + Send,
    {
        if replicates < 2 {
            return Err(invalid("need at least two replicates"));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let out = par::map_indexed(replicates, |r| self.draw(n, seed, r as u64).and_then(|d| f(&d)));
        out.into_iter()
            .enumerate()
            .map(|(r, v)| {
                v.map_err(|e| Error::Replicate {
                    replicate: r,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Training sample, two fresh points and (without quadrature) an out-of-sample batch,
    /// drawn in that order from the replicate's stream.
    pub(crate) fn draw(&self, n: usize, seed: u64, replicate: u64) -> Result<Draw> {
        let mut rng = replicate_rng(seed, replicate);
        let data = self.pop.sample_n(&mut rng, n)?;
        let fresh = [self.pop.sample(&mut rng)?, self.pop.sample(&mut rng)?];
        let batch = if self.pop.quadrature().is_some() {
            Vec::new()
        } else {
            self.pop.sample_n(&mut rng, self.batch_factor.max(1) * n)?
        };
        Ok(Draw {
            data,
            fresh,
            batch,
            train_seed: mix(seed, replicate),
        })
    }

    fn population_gap(&self, m: &ParamMeasure, nu: &DataMeasure, d: &Draw) -> Result<f64> {
        Ok(self.pop.risk(self.model, m, &d.batch)? - self.model.risk(m, nu)?)
    }
}

/// One replicate's random inputs.
#[derive(Debug, Clone)]
pub(crate) struct Draw {
    pub data: Vec<DataPoint>,
    pub fresh: [DataPoint; 2],
    pub batch: Vec<DataPoint>,
    pub train_seed: u64,
}

impl Draw {
    pub fn empirical(&self) -> Result<DataMeasure> {
        DataMeasure::empirical(self.data.clone())
    }
}

/// Sample mean and standard error of the mean, summed in order.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (r - 1.0) / r))
}

fn estimate(values: &[f64], n: usize, seed: u64, route: Route) -> GenEstimate {
    let (value, stderr) = mean_stderr(values);
    GenEstimate {
        value,
        stderr,
        replicates: values.len(),
        n,
        seed,
        route,
    }
}

fn column<const K: usize>(rows: &[[f64; K]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

/// Mean over replicates of `R(m(ν_n), ν_pop) − R(m(ν_n), ν_n)`.
pub fn wge_direct(s: &Setup<'_>, n: usize, replicates: usize, seed: u64) -> Result<GenEstimate> {
    let v = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let m = s.trainer.train(&nu, n, d.train_seed)?;
        s.population_gap(&m, &nu, d)
    })?;
    Ok(estimate(&v, n, seed, Route::Direct))
}

/// Mean over replicates of `ℓ(m(ν_n), Z̄₁) − ℓ(m(ν_{n,(1)}), Z̄₁)`.
pub fn wge_resampled(s: &Setup<'_>, n: usize, replicates: usize, seed: u64) -> Result<GenEstimate> {
    let v = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let z = &d.fresh[0];
        let nu1 = nu.resample(&[0], core::slice::from_ref(z))?;
        let m = s.trainer.train(&nu, n, d.train_seed)?;
        let m1 = s.trainer.train(&nu1, n, d.train_seed)?;
        Ok(s.model.loss_value(&m, z)? - s.model.loss_value(&m1, z)?)
    })?;
    Ok(estimate(&v, n, seed, Route::Resampled))
}

/// Mean over replicates of `|R(m(ν_n), ν_pop) − R(m(ν_n), ν_n)|²`.
pub fn lge(s: &Setup<'_>, n: usize, replicates: usize, seed: u64) -> Result<GenEstimate> {
    let v = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let m = s.trainer.train(&nu, n, d.train_seed)?;
        let g = s.population_gap(&m, &nu, d)?;
        Ok(g * g)
    })?;
    Ok(estimate(&v, n, seed, Route::Lge))
}

/// `P(|gap| ≥ ε) ≤ min(1, LGE/ε²)`.
pub fn markov_tail(lge_value: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(invalid("ε must be positive"));
    }
    Ok((lge_value / (eps * eps)).min(1.0))
}

/// The Gibbs problem, or `None` for the constant trainer (whose `δm/δν` vanishes).
fn gibbs_of<'t>(s: &Setup<'t>) -> Result<Option<&'t GibbsProblem>> {
    match s.trainer {
        Trainer::GibbsGrid(p) => Ok(Some(p)),
        Trainer::Constant(_) => Ok(None),
        _ => Err(Error::Incompatible("this estimator needs the grid Gibbs or the constant trainer".into())),
    }
}

/// `Σ_λ w_λ f(m₀ + λ(m₁ − m₀))(θ_i)` at every node, for `f = δℓ/δm` or its centred version.
fn lambda_average(
    rule: &crate::quadrature::Rule,
    m0: &GridDensity,
    m1: &GridDensity,
    f: impl Fn(&ParamMeasure) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; m0.grid().len()];
    for (&l, &w) in rule.nodes.iter().zip(&rule.weights) {
        let m = ParamMeasure::Grid(m0.convex_combination(m1, l)?);
        for (a, v) in acc.iter_mut().zip(f(&m)?) {
            *a += w * v;
        }
    }
    Ok(acc)
}

/// `Σ_λ̃ w_λ̃ Σ_j s_j δm/δν(ν₀ + λ̃(ν₁ − ν₀), z_j)` at every node.
fn dm_dnu_average(
    problem: &GibbsProblem,
    rule: &crate::quadrature::Rule,
    nu0: &DataMeasure,
    nu1: &DataMeasure,
    warm: &GridDensity,
    points: &[(DataPoint, f64)],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; problem.grid().len()];
    let zs: Vec<DataPoint> = points.iter().map(|p| p.0.clone()).collect();
    for (&l, &w) in rule.nodes.iter().zip(&rule.weights) {
        let nu = nu0.convex_combination(nu1, l)?;
        let sol = problem.solve_with(&nu, warm, &problem.options)?;
        let ds = DerivativeSolver::new(problem, &nu, &sol)?;
        for (dens, (_, sign)) in ds.dm_dnu(&zs)?.iter().zip(points) {
            for (a, v) in acc.iter_mut().zip(dens.values()) {
                *a += w * sign * v;
            }
        }
    }
    Ok(acc)
}

fn node_values(model: &LossModel, m: &ParamMeasure, z: &DataPoint, grid: &crate::measures::Grid) -> Result<Vec<f64>> {
    let lin = model.linearize(m, z)?;
    Ok((0..grid.len()).map(|i| lin.dm(grid.node(i))).collect())
}

fn weighted_dot(a: &[f64], b: &[f64], vols: &[f64]) -> f64 {
    a.iter().zip(b).zip(vols).map(|((x, y), v)| x * y * v).sum()
}

/// `(1/n)·E[h(Z_n, Z̄₁)]` with `h` from the δm/δν representation, by tensor
/// Gauss–Legendre quadrature in `(λ, λ̃)`. Grid Gibbs trainer (or the constant trainer, for which `h = 0`).
pub fn wge_representation(s: &Setup<'_>, n: usize, replicates: usize, seed: u64) -> Result<GenEstimate> {
    let Some(problem) = gibbs_of(s)? else {
        let v = s.replicates(n, replicates, seed, |_| Ok(0.0))?;
        return Ok(estimate(&v, n, seed, Route::Representation));
    };
    let rule = gauss_legendre_unit(s.lambda_nodes);
    let grid = problem.grid();
    let v = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let zb = &d.fresh[0];
        let nu1 = nu.resample(&[0], core::slice::from_ref(zb))?;
        let sn = problem.solve(&nu)?;
        let s1 = problem.solve(&nu1)?;
        let a = lambda_average(&rule, &s1.density, &sn.density, |m| {
            node_values(s.model, m, zb, grid)
        })?;
        let b = dm_dnu_average(
            problem,
            &rule,
            &nu1,
            &nu,
            &s1.density,
            &[(d.data[0].clone(), 1.0), (zb.clone(), -1.0)],
        )?;
        Ok(weighted_dot(&a, &b, grid.cell_volumes()) / n as f64)
    })?;
    Ok(estimate(&v, n, seed, Route::Representation))
}

/// WGE (resampled route), the convexity lower bound `E[∫ δℓ/δm(m(ν_{n,(1)}), Z̄₁, θ) m(ν_n)(dθ)]`,
/// and whether `wge ≥ lower − 2(stderr_wge + stderr_lower)`.
pub fn convex_lower_bound_check(
    s: &Setup<'_>,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<(GenEstimate, GenEstimate, bool)> {
    let rows = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let z = &d.fresh[0];
        let nu1 = nu.resample(&[0], core::slice::from_ref(z))?;
        let m = s.trainer.train(&nu, n, d.train_seed)?;
        let m1 = s.trainer.train(&nu1, n, d.train_seed)?;
        let gap = s.model.loss_value(&m, z)? - s.model.loss_value(&m1, z)?;
        let lin = s.model.linearize(&m1, z)?;
        let lower = m.integrate(|t| lin.dm(t))?;
        Ok([gap, lower])
    })?;
    let wge = estimate(&column(&rows, 0), n, seed, Route::Resampled);
    let lower = estimate(&column(&rows, 1), n, seed, Route::ConvexLower);
    let holds = wge.value >= lower.value - 2.0 * (wge.stderr + lower.stderr);
    Ok((wge, lower, holds))
}

/// Monte Carlo terms of the two LGE upper bounds and the LGE itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LgeUpperTerms {
    /// `K = max_{Z ∈ {Z₁, Z̄₁}} E[ℓ(m(ν_n), Z)²]`.
    pub k: f64,
    /// Standard error of the mean attaining the max.
    pub k_stderr: f64,
    /// `E[h₂²]`.
    pub eh2sq: f64,
    /// Standard error of `E[h₂²]`.
    pub eh2sq_stderr: f64,
    /// `E[h̃₂²]`.
    pub eh2tsq: f64,
    /// Standard error of `E[h̃₂²]`.
    pub eh2tsq_stderr: f64,
    /// `4K/n + 2K^{1/2}E[h₂²]^{1/2} + E[h₂²]`.
    pub bound_fd: f64,
    /// `(1/n)(4K + 2K^{1/2}E[h̃₂²]^{1/2} + E[h̃₂²]/n)`.
    pub bound: f64,
    /// `bound` evaluated at `K + 2·stderr` and `E[h̃₂²] + 2·stderr`.
    pub bound_with_margin: f64,
    /// LGE estimate on the same replicates.
    pub lge: GenEstimate,
    /// `lge ≤ bound_with_margin + 2·stderr_lge`.
    pub holds: bool,
}

fn lge_rep_bound(k: f64, h: f64, n: f64) -> f64 {
    (4.0 * k + 2.0 * libm::sqrt(k) * libm::sqrt(h) + h / n) / n
}

/// `K`, `E[h₂²]`, `E[h̃₂²]` and the LGE bound `(1/n)(4K + 2√K √E[h̃₂²] + E[h̃₂²]/n)`,
/// compared with the LGE on the same replicates. Grid Gibbs trainer (or the constant
/// trainer, for which `h₂ = h̃₂ = 0`); needs `n ≥ 2`.
pub fn lge_upper_terms(s: &Setup<'_>, n: usize, replicates: usize, seed: u64) -> Result<LgeUpperTerms> {
    let problem = gibbs_of(s)?;
    if n < 2 {
        return Err(invalid("two-point resampling needs n ≥ 2"));
    }
    let rule = gauss_legendre_unit(s.lambda_nodes);
    let rows = s.replicates(n, replicates, seed, |d| {
        let nu = d.empirical()?;
        let (mn, problem) = match problem {
            None => (s.trainer.train(&nu, n, d.train_seed)?, None),
            Some(p) => {
                let sn = p.solve(&nu)?;
                (sn.measure(), Some((p, sn)))
            }
        };
        let l1 = s.model.loss_value(&mn, &d.data[0])?;
        let lb = s.model.loss_value(&mn, &d.fresh[0])?;
        let gap = s.pop.risk(s.model, &mn, &d.batch)? - s.model.risk(&mn, &nu)?;
        let Some((problem, sn)) = problem else {
            return Ok([l1 * l1, lb * lb, 0.0, 0.0, gap * gap]);
        };
        let grid = problem.grid();
        let pop = s.pop.as_measure(&d.batch)?;
        let nu12 = nu.resample(&[0, 1], &d.fresh)?;
        let s12 = problem.solve(&nu12)?;
        let inner = lambda_average(&rule, &s12.density, &sn.density, |m| {
            let at = s.model.linearize(m, &d.data[0])?;
            let avg = s.model.linearize_risk(m, &pop)?;
            Ok((0..grid.len())
                .map(|i| at.dm(grid.node(i)) - avg.dm(grid.node(i)))
                .collect())
        })?;
        let diff: Vec<f64> = sn
            .density
            .values()
            .iter()
            .zip(s12.density.values())
            .map(|(a, b)| a - b)
            .collect();
        let h2 = weighted_dot(&inner, &diff, grid.cell_volumes());
        let delta = dm_dnu_average(
            problem,
            &rule,
            &nu12,
            &nu,
            &s12.density,
            &[
                (d.data[0].clone(), 1.0),
                (d.fresh[0].clone(), -1.0),
                (d.data[1].clone(), 1.0),
                (d.fresh[1].clone(), -1.0),
            ],
        )?;
        let h2t = weighted_dot(&inner, &delta, grid.cell_volumes());
        Ok([l1 * l1, lb * lb, h2 * h2, h2t * h2t, gap * gap])
    })?;
    let (k1, se1) = mean_stderr(&column(&rows, 0));
    let (kb, seb) = mean_stderr(&column(&rows, 1));
    let (k, k_stderr) = if k1 >= kb { (k1, se1) } else { (kb, seb) };
    let (eh2sq, eh2sq_stderr) = mean_stderr(&column(&rows, 2));
    let (eh2tsq, eh2tsq_stderr) = mean_stderr(&column(&rows, 3));
    let lge = estimate(&column(&rows, 4), n, seed, Route::Lge);
    let nf = n as f64;
    let bound_fd = 4.0 * k / nf + 2.0 * libm::sqrt(k) * libm::sqrt(eh2sq) + eh2sq;
    let bound = lge_rep_bound(k, eh2tsq, nf);
    let bound_with_margin = lge_rep_bound(k + 2.0 * k_stderr, eh2tsq + 2.0 * eh2tsq_stderr, nf);
    let holds = lge.value <= bound_with_margin + 2.0 * lge.stderr;
    Ok(LgeUpperTerms {
        k,
        k_stderr,
        eh2sq,
        eh2sq_stderr,
        eh2tsq,
        eh2tsq_stderr,
        bound_fd,
        bound,
        bound_with_margin,
        lge,
        holds,
    })
}
