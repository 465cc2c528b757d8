//! Invariant suites behind `mfgen verify`.

use anyhow::Result;
use mfgen_core::funcderiv::*;
use mfgen_core::genbench::*;
use mfgen_core::gibbs::*;
use mfgen_core::losses::*;
use mfgen_core::measures::*;
use mfgen_core::rng::{replicate_rng, uniform, Rng};
use serde::Serialize;
use std::sync::Arc;

const SEED: u64 = 20_241;

/// One line of the verify report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check_name: String,
    pub status: &'static str,
    pub residual: f64,
    pub tolerance: f64,
}

fn check(name: &str, residual: f64, tolerance: f64) -> Check {
    Check {
        check_name: name.into(),
        status: if residual <= tolerance { "pass" } else { "fail" },
        residual,
        tolerance,
    }
}

fn range(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

fn random_density(grid: &Arc<Grid>, rng: &mut Rng) -> Result<GridDensity> {
    let c: Vec<f64> = (0..grid.dim()).map(|_| range(rng, -1.0, 1.0)).collect();
    let s = range(rng, 0.4, 1.2);
    let vals = (0..grid.len())
        .map(|i| {
            let r2: f64 = grid.node(i).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * s * s)).exp() + 1e-3
        })
        .collect();
    Ok(GridDensity::normalized(grid.clone(), vals)?)
}

fn nn(outer: OuterLoss) -> LossModel {
    LossModel::NeuralNet(NeuralNet {
        activation: Activation::Tanh,
        outer,
        features: 1,
    })
}

fn nn_problem(nodes: usize, beta: f64) -> Result<GibbsProblem> {
    let mut cfg = GibbsConfig::new(beta, 1.0, 2.0, Regularizer::new(0.3, 3)?)?;
    cfg.grid.nodes_per_axis = nodes;
    Ok(GibbsProblem::new(nn(OuterLoss::Quadratic), cfg)?)
}

fn nn_data() -> Result<DataMeasure> {
    let pts = [(-1.2, -0.6), (-0.3, -0.1), (0.5, 0.35), (1.4, 0.7)]
        .iter()
        .map(|&(x, y)| DataPoint::new(vec![x], y))
        .collect::<mfgen_core::Result<Vec<_>>>()?;
    Ok(DataMeasure::empirical(pts)?)
}

fn scalar_data(ys: &[f64]) -> Result<DataMeasure> {
    Ok(DataMeasure::empirical(ys.iter().map(|&y| DataPoint::scalar(y)).collect())?)
}

fn squared() -> LossModel {
    LossModel::ExpectedParam(ParametricLoss::SquaredError)
}

/// Runs every suite with fixed seeds and problem sizes.
pub fn run_all() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    linear_derivatives(&mut out)?;
    gibbs(&mut out)?;
    derivatives(&mut out)?;
    genbench(&mut out)?;
    Ok(out)
}

fn linear_derivatives(out: &mut Vec<Check>) -> Result<()> {
    let mut rng = replicate_rng(SEED, 1);
    let g2 = Arc::new(Grid::uniform(2, 17, 3.0)?);
    let g1 = Arc::new(Grid::uniform(1, 65, 3.0)?);
    let cases: [(&str, LossModel, &Arc<Grid>, usize, f64); 4] = [
        ("linear_derivative_nn_quadratic_4_nodes", nn(OuterLoss::Quadratic), &g2, 4, 1e-10),
        ("linear_derivative_nn_quadratic", nn(OuterLoss::Quadratic), &g2, 16, 1e-6),
        ("linear_derivative_nn_logcosh", nn(OuterLoss::LogCosh), &g2, 16, 1e-6),
        ("linear_derivative_expected_param", squared(), &g1, 16, 1e-6),
    ];
    for (name, model, grid, nodes, tol) in cases {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let m = random_density(grid, &mut rng)?;
            let m2 = random_density(grid, &mut rng)?;
            let x = if grid.dim() == 2 { vec![range(&mut rng, -2.0, 2.0)] } else { vec![] };
            let z = DataPoint::new(x, range(&mut rng, -1.0, 1.0))?;
            worst = worst.max(check_linear_derivative(&PointLoss { model: &model, z: &z }, &m, &m2, nodes)?);
        }
        out.push(check(name, worst, tol));
    }
    Ok(())
}

fn gibbs(out: &mut Vec<Check>) -> Result<()> {
    let pb = nn_problem(33, 1.0)?;
    let nu = nn_data()?;
    let sol = pb.solve(&nu)?;
    let again = pb.gibbs_map(&sol.measure(), &nu)?;
    out.push(check("gibbs_fixed_point_residual", again.sup_distance(&sol.density)?, 1e-8));

    let mut rng = replicate_rng(SEED, 2);
    let init = random_density(pb.grid(), &mut rng)?;
    let other = pb.solve_with(&nu, &init, &pb.options)?;
    out.push(check("gibbs_initialization_independence", other.density.sup_distance(&sol.density)?, 1e-6));

    let mut ep = GibbsProblem::new(squared(), GibbsConfig::new(1.3, 0.9, 2.0, Regularizer::new(0.4, 1)?)?)?;
    ep.options.damping = 1.0;
    let one = ep.solve(&scalar_data(&[0.2, -0.7, 1.1])?)?;
    out.push(check("gibbs_expected_param_single_iteration", (one.iterations as f64 - 1.0).abs(), 0.0));

    let mut worst = f64::NEG_INFINITY;
    for beta in [0.5, 1.0, 1.4] {
        let mp = GibbsProblem::new(squared(), GibbsConfig::new(beta, 1.0, 4.0, Regularizer::new(0.1, 3)?)?)?;
        let d = scalar_data(&[0.5, -1.5, 2.0, 0.1])?;
        let s = mp.solve(&d)?;
        for tilt in [1.0, mp.config().temperature()] {
            let (lhs, rhs) = mp.moment_bound(&s, &d, tilt)?;
            worst = worst.max(lhs - rhs);
        }
    }
    out.push(check("gibbs_moment_bound", worst, 1e-6));
    Ok(())
}

fn derivatives(out: &mut Vec<Check>) -> Result<()> {
    let pb = nn_problem(15, 1.0)?;
    let nu = nn_data()?;
    let sol = pb.solve(&nu)?;
    let km = build_cm(pb.model(), &sol.density, &nu)?;
    let mut rng = replicate_rng(SEED, 3);
    let mut lowest: f64 = 0.0;
    for _ in 0..50 {
        let f: Vec<f64> = (0..pb.grid().len()).map(|_| range(&mut rng, -1.0, 1.0)).collect();
        lowest = lowest.min(km.quadratic_form(&f));
    }
    out.push(check("kernel_positive_semidefinite", -lowest, 1e-8));

    let ds = DerivativeSolver::new(&pb, &nu, &sol)?;
    let v = ds.ds_dnu(&[DataPoint::new(vec![1.5], 0.0)?])?.remove(0);
    let dens = ds.density_from(&v)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a, b, c) = (range(&mut rng, -1.0, 1.0), range(&mut rng, -1.0, 1.0), range(&mut rng, 0.1, 2.0));
        let (lhs, rhs) = covariance_form(&pb, &sol.density, &v, &dens, |t| (a * t[0] + b * t[1]).sin() * c);
        worst = worst.max((lhs - rhs).abs());
    }
    out.push(check("covariance_representation", worst, 1e-8));

    let ep = GibbsProblem::new(squared(), GibbsConfig::new(0.8, 1.0, 2.0, Regularizer::new(0.5, 1)?)?)?;
    let d = scalar_data(&[0.4, -0.9, 1.3])?;
    let z = DataPoint::scalar(2.0);
    let exact = dm_dnu(&ep, &d, &z)?;
    let fd = finite_diff_dm_dnu(&ep, &d, &z, 1e-4)?;
    out.push(check("dm_dnu_expected_param_finite_difference", fd.relative_l1(&exact)?, 1e-3));

    let pb = nn_problem(21, 1.0)?;
    let z = DataPoint::new(vec![-0.4], 0.8)?;
    let exact = dm_dnu(&pb, &nu, &z)?;
    let fd = finite_diff_dm_dnu(&pb, &nu, &z, 1e-3)?;
    out.push(check("dm_dnu_nn_finite_difference", fd.relative_l1(&exact)?, 1e-2));
    Ok(())
}

fn genbench(out: &mut Vec<Check>) -> Result<()> {
    let mut cfg = GibbsConfig::new(1.0, 1.0, 4.0, Regularizer::new(0.05, 3)?)?;
    cfg.grid.nodes_per_axis = 65;
    let tr = Trainer::GibbsGrid(GibbsProblem::new(squared(), cfg)?);
    let spaces = [
        ("resampling_identity_two_point", vec![(0.0, 0.5), (1.0, 0.5)]),
        ("resampling_identity_three_point", vec![(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)]),
    ];
    for (name, atoms) in spaces {
        let space: Vec<(DataPoint, f64)> = atoms.into_iter().map(|(z, p)| (DataPoint::scalar(z), p)).collect();
        let e = enumerate_exact_gen(&tr, &space, &squared(), 2)?;
        out.push(check(name, (e.wge - e.wge_resampled).abs(), 1e-12));
        out.push(check(&format!("{name}_convex_lower"), (e.convex_lower - e.wge_resampled).max(0.0), 1e-12));
    }
    out.push(check("gaussian_oracle_formula", (gaussian_mean_oracle(2.0, 8) - 1.0).abs(), 0.0));

    let ns = [5, 10, 20, 40, 80];
    let est: Vec<GenEstimate> = ns
        .iter()
        .map(|&n| GenEstimate {
            value: 3.0 / n as f64,
            stderr: 0.0,
            replicates: 2,
            n,
            seed: 0,
            route: Route::Direct,
        })
        .collect();
    let f = rate_fit(&ns, &est)?;
    out.push(check("rate_fit_synthetic_slope", (f.slope + 1.0).abs(), 1e-12));
    Ok(())
}
