//! Functional calculus on grid measures.
//!
//! For the Gibbs map `ν ↦ m(ν)` the measure derivative has density
//! `δm/δν(ν, z)(θ) = −(2β²/σ²) m(θ) (v(θ) − E_m v)`, where `v = δS/δν(ν, z, ·)`
//! solves `(id + (2β²/σ²) C_m) v = L`, `C_m` is the kernel operator of
//! `δ²R/δm²` and `L(θ) = δℓ/δm(m, z, θ) − ∫ δℓ/δm(m, z′, θ) ν(dz′)`.

use crate::gibbs::{GibbsProblem, GibbsSolution, SolverOptions};
use crate::linalg::{is_psd, Lu, Matrix};
use crate::losses::LossModel;
use crate::measures::{
    same_grid, ConvexCombination, DataMeasure, DataPoint, GridDensity, ParamMeasure,
};
use crate::quadrature::gauss_legendre_unit;
use crate::{error::invalid, par, Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// Largest grid on which the dense solve is attempted.
pub const MAX_DENSE_NODES: usize = 4096;

/// A functional of parameter measures with a linear derivative.
pub trait MeasureFunctional {
    /// `F(m)`.
    fn value(&self, m: &ParamMeasure) -> Result<f64>;
    /// `δF/δm(m, θ_i)` at every node of the grid carrying `m`.
    fn derivative_at_nodes(&self, m: &GridDensity) -> Result<Vec<f64>>;
}

/// `m ↦ ℓ(m, z)` for a fixed data point.
#[derive(Debug, Clone, Copy)]
pub struct PointLoss<'a> {
    /// Loss.
    pub model: &'a LossModel,
    /// Data point.
    pub z: &'a DataPoint,
}

impl MeasureFunctional for PointLoss<'_> {
    fn value(&self, m: &ParamMeasure) -> Result<f64> {
        self.model.loss_value(m, self.z)
    }

    fn derivative_at_nodes(&self, m: &GridDensity) -> Result<Vec<f64>> {
        let lin = self.model.linearize(&ParamMeasure::Grid(m.clone()), self.z)?;
        let g = m.grid();
        Ok((0..g.len()).map(|i| lin.dm(g.node(i))).collect())
    }
}

/// `m ↦ R(m, ν)`.
#[derive(Debug, Clone, Copy)]
pub struct RiskFunctional<'a> {
    /// Loss.
    pub model: &'a LossModel,
    /// Data measure.
    pub nu: &'a DataMeasure,
}

impl MeasureFunctional for RiskFunctional<'_> {
    fn value(&self, m: &ParamMeasure) -> Result<f64> {
        self.model.risk(m, self.nu)
    }

    fn derivative_at_nodes(&self, m: &GridDensity) -> Result<Vec<f64>> {
        let lin = self.model.linearize_risk(&ParamMeasure::Grid(m.clone()), self.nu)?;
        let g = m.grid();
        Ok((0..g.len()).map(|i| lin.dm(g.node(i))).collect())
    }
}

/// `m ↦ ∫ f dm`, whose derivative is `f − ∫ f dm`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFunctional<F>(pub F);

impl<F: Fn(&[f64]) -> f64> MeasureFunctional for LinearFunctional<F> {
    fn value(&self, m: &ParamMeasure) -> Result<f64> {
        m.integrate(&self.0)
    }

    fn derivative_at_nodes(&self, m: &GridDensity) -> Result<Vec<f64>> {
        let g = m.grid();
        let mean = ParamMeasure::Grid(m.clone()).integrate(&self.0)?;
        Ok((0..g.len()).map(|i| (self.0)(g.node(i)) - mean).collect())
    }
}

/// `|F(m′) − F(m) − ∫₀¹ ∫ δF/δm(m + λ(m′−m), θ)(m′−m)(dθ) dλ|` with a
/// `lambda_nodes`-point Gauss–Legendre rule in `λ`.
pub fn check_linear_derivative<F: MeasureFunctional + ?Sized>(
    functional: &F,
    m: &GridDensity,
    m2: &GridDensity,
    lambda_nodes: usize,
) -> Result<f64> {
    same_grid(m.grid(), m2.grid())?;
    if lambda_nodes == 0 {
        return Err(invalid("need at least one λ node"));
    }
    let rule = gauss_legendre_unit(lambda_nodes);
    let vols = m.grid().cell_volumes();
    let diff: Vec<f64> = m2
        .values()
        .iter()
        .zip(m.values())
        .zip(vols)
        .map(|((b, a), v)| (b - a) * v)
        .collect();
    let mut integral = 0.0;
    for (&lam, &w) in rule.nodes.iter().zip(&rule.weights) {
        let ml = m.convex_combination(m2, lam)?;
        let d = functional.derivative_at_nodes(&ml)?;
        integral += w * d.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>();
    }
    let lhs = functional.value(&ParamMeasure::Grid(m2.clone()))?
        - functional.value(&ParamMeasure::Grid(m.clone()))?;
    Ok((lhs - integral).abs())
}

/// `S(ν, θ_i) = δR/δm(m(ν), ν, θ_i)` at every grid node.
pub fn s_values(problem: &GibbsProblem, nu: &DataMeasure, solution: &GibbsSolution) -> Result<Vec<f64>> {
    let lin = problem.model().linearize_risk(&solution.measure(), nu)?;
    let g = problem.grid();
    Ok(par::map_indexed(g.len(), |i| lin.dm(g.node(i))))
}

/// `S(ν, θ)` at a single point, solving for `m(ν)` first.
pub fn s_value(problem: &GibbsProblem, nu: &DataMeasure, theta: &[f64]) -> Result<f64> {
    let sol = problem.solve(nu)?;
    let lin = problem.model().linearize_risk(&sol.measure(), nu)?;
    Ok(lin.dm(theta))
}

/// The kernel of `C_m`: `K(θ_i, θ_j) = ∫ δ²ℓ/δm²(m, z, θ_i, θ_j) ν(dz)`, with the
/// `m`-weights `w_j = m(θ_j)·vol_j`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    /// `K(θ_i, θ_j)`.
    pub entries: Matrix,
    /// `m`-weights per node.
    pub weights: Vec<f64>,
    zero: bool,
}

impl KernelMatrix {
    /// `(C_m f)(θ_i) = Σ_j K_ij f_j w_j`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let fw: Vec<f64> = f.iter().zip(&self.weights).map(|(a, b)| a * b).collect();
        self.entries.mul_vec(&fw)
    }

    /// `⟨f, C_m f⟩_{L²(m)}`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let cf = self.apply(f);
        f.iter()
            .zip(&cf)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// True when the kernel vanishes identically (linear-in-`m` losses).
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// PSD test of `W^{1/2} K W^{1/2}` allowing eigenvalues down to `−shift`.
    pub fn is_psd(&self, shift: f64) -> bool {
        if self.zero {
            return true;
        }
        let n = self.weights.len();
        let sw: Vec<f64> = self.weights.iter().map(|w| libm::sqrt(w.max(0.0))).collect();
        let mut s = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, sw[i] * self.entries.get(i, j) * sw[j]);
            }
        }
        is_psd(&s, shift)
    }
}

/// Assembles the kernel of `C_m` at the grid measure `m`.
pub fn build_cm(model: &LossModel, m: &GridDensity, nu: &DataMeasure) -> Result<KernelMatrix> {
    let grid = m.grid();
    let n = grid.len();
    if n > MAX_DENSE_NODES {
        return Err(Error::InvalidArgument(format!(
            "grid has {n} nodes; the dense kernel is capped at {MAX_DENSE_NODES}"
        )));
    }
    let pm = ParamMeasure::Grid(m.clone());
    let weights = m.masses();
    if let LossModel::ExpectedParam(_) = model {
        return Ok(KernelMatrix {
            entries: Matrix::zeros(n),
            weights,
            zero: true,
        });
    }
    let lin = model.linearize_risk(&pm, nu)?;
    // K = F diag(c) Fᵀ with F_{i,z} the centered unit and c_z = ν_z ∂²ℓ_o.
    let parts = lin.parts();
    let mut coef = Vec::with_capacity(parts.len());
    let mut factors = Vec::with_capacity(parts.len() * n);
    for (l, w) in parts {
        let (_, d2) = l.second_factors(grid.node(0));
        coef.push(w * d2);
        for i in 0..n {
            factors.push(l.second_factors(grid.node(i)).0);
        }
    }
    let rows: Vec<Vec<f64>> = par::map_indexed(n, |i| {
        let mut row = alloc::vec![0.0; n];
        for (a, c) in coef.iter().enumerate() {
            let f = &factors[a * n..(a + 1) * n];
            let s = c * f[i];
            if s == 0.0 {
                continue;
            }
            for j in 0..n {
                row[j] += s * f[j];
            }
        }
        row
    });
    let mut entries = Matrix::zeros(n);
    for (i, r) in rows.into_iter().enumerate() {
        entries.row_mut(i).copy_from_slice(&r);
    }
    Ok(KernelMatrix {
        entries,
        weights,
        zero: false,
    })
}

/// `δS/δν(ν, z, ·)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SDerivative {
    /// `v(θ_i)`.
    pub values: Vec<f64>,
    /// Right-hand side `L(θ_i)`.
    pub rhs: Vec<f64>,
    /// The data point `z`.
    pub data_point: DataPoint,
}

/// Factorized `id + (2β²/σ²) C_m` at a Gibbs solution, reusable across data points.
#[derive(Debug, Clone)]
pub struct DerivativeSolver<'a> {
    problem: &'a GibbsProblem,
    nu: &'a DataMeasure,
    m: GridDensity,
    lu: Option<Lu>,
}

impl<'a> DerivativeSolver<'a> {
    /// Builds `C_m` at `solution` and factorizes the system.
    pub fn new(problem: &'a GibbsProblem, nu: &'a DataMeasure, solution: &GibbsSolution) -> Result<Self> {
        let m = solution.density.clone();
        same_grid(m.grid(), problem.grid())?;
        let kernel = build_cm(problem.model(), &m, nu)?;
        let lu = if kernel.is_zero() {
            None
        } else {
            let n = kernel.weights.len();
            let k = problem.config().temperature();
            let mut a = Matrix::identity(n);
            for i in 0..n {
                let row = kernel.entries.row(i);
                let out = a.row_mut(i);
                for j in 0..n {
                    out[j] += k * row[j] * kernel.weights[j];
                }
            }
            Some(Lu::new(a)?)
        };
        Ok(Self { problem, nu, m, lu })
    }

    /// The Gibbs density the solver was built at.
    pub fn measure(&self) -> &GridDensity {
        &self.m
    }

    /// `v = (id + (2β²/σ²) C_m)⁻¹ L` for each data point.
    pub fn ds_dnu(&self, zs: &[DataPoint]) -> Result<Vec<SDerivative>> {
        let model = self.problem.model();
        let pm = ParamMeasure::Grid(self.m.clone());
        let grid = self.problem.grid();
        let base = model.linearize_risk(&pm, self.nu)?;
        let base_vals: Vec<f64> = par::map_indexed(grid.len(), |i| base.dm(grid.node(i)));
        zs.iter()
            .map(|z| {
                let lin = model.linearize(&pm, z)?;
                let rhs: Vec<f64> = (0..grid.len())
                    .map(|i| lin.dm(grid.node(i)) - base_vals[i])
                    .collect();
                let values = match &self.lu {
                    None => rhs.clone(),
                    Some(lu) => lu.solve(&rhs),
                };
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular {
                        condition: self.lu.as_ref().map_or(1.0, |l| l.pivot_ratio()),
                    });
                }
                Ok(SDerivative {
                    values,
                    rhs,
                    data_point: z.clone(),
                })
            })
            .collect()
    }

    /// Density of `δm/δν(ν, z)` from `v`: `−(2β²/σ²) m (v − E_m v)`.
    pub fn density_from(&self, v: &SDerivative) -> Result<GridDensity> {
        let k = self.problem.config().temperature();
        let w = self.m.masses();
        let mean: f64 = v.values.iter().zip(&w).map(|(a, b)| a * b).sum();
        let vals = self
            .m
            .values()
            .iter()
            .zip(&v.values)
            .map(|(d, vi)| -k * d * (vi - mean))
            .collect();
        GridDensity::signed(self.m.grid().clone(), vals)
    }

    /// `δm/δν(ν, z)` for each data point.
    pub fn dm_dnu(&self, zs: &[DataPoint]) -> Result<Vec<GridDensity>> {
        self.ds_dnu(zs)?.iter().map(|v| self.density_from(v)).collect()
    }
}

/// `δS/δν(ν, z, ·)`, solving for `m(ν)` first.
pub fn solve_ds_dnu(problem: &GibbsProblem, nu: &DataMeasure, z: &DataPoint) -> Result<SDerivative> {
    let sol = problem.solve(nu)?;
    let s = DerivativeSolver::new(problem, nu, &sol)?;
    Ok(s.ds_dnu(core::slice::from_ref(z))?.remove(0))
}

/// `δm/δν(ν, z)` as a signed grid density, solving for `m(ν)` first.
pub fn dm_dnu(problem: &GibbsProblem, nu: &DataMeasure, z: &DataPoint) -> Result<GridDensity> {
    let sol = problem.solve(nu)?;
    let s = DerivativeSolver::new(problem, nu, &sol)?;
    Ok(s.dm_dnu(core::slice::from_ref(z))?.remove(0))
}

/// `[m(ν + ε(δ_z − ν)) − m(ν)] / ε`, both solves at tolerance `min(tol, 1e-2 ε²)`.
pub fn finite_diff_dm_dnu(
    problem: &GibbsProblem,
    nu: &DataMeasure,
    z: &DataPoint,
    eps: f64,
) -> Result<GridDensity> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("ε must lie in (0, 1)"));
    }
    let opts = SolverOptions {
        tol: problem.options.tol.min(1e-2 * eps * eps),
        ..problem.options
    };
    let dz = DataMeasure::empirical(alloc::vec![z.clone()])?;
    let nu_eps = nu.convex_combination(&dz, eps)?;
    let g0 = &problem.prior().gamma_sigma;
    let base = problem.solve_with(nu, g0, &opts)?;
    let pert = problem.solve_with(&nu_eps, g0, &opts)?;
    let vals = pert
        .density
        .values()
        .iter()
        .zip(base.density.values())
        .map(|(a, b)| (a - b) / eps)
        .collect();
    GridDensity::signed(problem.grid().clone(), vals)
}

/// Finite differences at `ε` and `ε/10` with the Richardson combination
/// `(10 D(ε/10) − D(ε)) / 9` and the relative L¹ gap between the two steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonEstimate {
    /// `D(ε)`.
    pub coarse: GridDensity,
    /// `D(ε/10)`.
    pub fine: GridDensity,
    /// Extrapolated density.
    pub extrapolated: GridDensity,
    /// `‖D(ε) − D(ε/10)‖₁ / ‖D(ε/10)‖₁`.
    pub step_gap: f64,
}

/// Two-step finite difference with Richardson extrapolation.
pub fn richardson_dm_dnu(
    problem: &GibbsProblem,
    nu: &DataMeasure,
    z: &DataPoint,
    eps: f64,
) -> Result<RichardsonEstimate> {
    let coarse = finite_diff_dm_dnu(problem, nu, z, eps)?;
    let fine = finite_diff_dm_dnu(problem, nu, z, eps / 10.0)?;
    let vals = fine
        .values()
        .iter()
        .zip(coarse.values())
        .map(|(f, c)| (10.0 * f - c) / 9.0)
        .collect();
    let extrapolated = GridDensity::signed(problem.grid().clone(), vals)?;
    let step_gap = coarse.relative_l1(&fine)?;
    Ok(RichardsonEstimate {
        coarse,
        fine,
        extrapolated,
        step_gap,
    })
}

/// `(∫ f dm_dnu, −(2β²/σ²) Cov_m[f, v])`: the two sides of the covariance form.
pub fn covariance_form(
    problem: &GibbsProblem,
    m: &GridDensity,
    v: &SDerivative,
    density: &GridDensity,
    f: impl Fn(&[f64]) -> f64,
) -> (f64, f64) {
    let g = m.grid();
    let w = m.masses();
    let fv: Vec<f64> = (0..g.len()).map(|i| f(g.node(i))).collect();
    let lhs: f64 = fv
        .iter()
        .zip(density.values())
        .zip(g.cell_volumes())
        .map(|((a, d), c)| a * d * c)
        .sum();
    let ef: f64 = fv.iter().zip(&w).map(|(a, b)| a * b).sum();
    let ev: f64 = v.values.iter().zip(&w).map(|(a, b)| a * b).sum();
    let cov: f64 = fv
        .iter()
        .zip(&v.values)
        .zip(&w)
        .map(|((a, b), c)| (a - ef) * (b - ev) * c)
        .sum();
    (lhs, -problem.config().temperature() * cov)
}

/// `‖f‖_{L²(m)}`.
pub fn l2_norm(m: &GridDensity, f: &[f64]) -> f64 {
    libm::sqrt(f.iter().zip(m.masses()).map(|(a, w)| a * a * w).sum::<f64>())
}
