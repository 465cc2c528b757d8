mod common;

use approx::assert_relative_eq;
use mfgen_core::funcderiv::*;
use mfgen_core::genbench::{explicit_gaussian_dm_dnu, gaussian_on_grid};
use mfgen_core::gibbs::*;
use mfgen_core::losses::*;
use mfgen_core::measures::*;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

fn tanh_model() -> LossModel {
    LossModel::NeuralNet(NeuralNet {
        activation: Activation::Tanh,
        outer: OuterLoss::Quadratic,
        features: 1,
    })
}

fn nn_problem(nodes: usize) -> GibbsProblem {
    let mut cfg = GibbsConfig::new(1.0, 1.0, 2.0, Regularizer::new(0.3, 3).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = nodes;
    GibbsProblem::new(tanh_model(), cfg).unwrap()
}

fn nn_data() -> DataMeasure {
    let pts = [(-1.0, -0.5), (0.2, 0.1), (1.1, 0.6)]
        .iter()
        .map(|&(x, y)| DataPoint::new(vec![x], y).unwrap())
        .collect();
    DataMeasure::empirical(pts).unwrap()
}

#[test]
fn ds_dnu_matches_dense_solve_of_assembled_kernel() {
    let pb = nn_problem(11);
    let nu = nn_data();
    let sol = pb.solve(&nu).unwrap();
    let z = DataPoint::new(vec![0.7], -0.2).unwrap();
    let v = DerivativeSolver::new(&pb, &nu, &sol).unwrap().ds_dnu(std::slice::from_ref(&z)).unwrap().remove(0);

    let g = pb.grid();
    let n = g.len();
    let m = sol.measure();
    let model = tanh_model();
    let w = sol.density.masses();
    let k = pb.config().temperature();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut kij = 0.0;
            for (zz, nz) in nu.atoms() {
                kij += nz * model.loss_d2m(&m, zz, g.node(i), g.node(j)).unwrap();
            }
            a[(i, j)] += k * kij * w[j];
        }
    }
    let base = model.linearize_risk(&m, &nu).unwrap();
    let lz = model.linearize(&m, &z).unwrap();
    let rhs = DVector::from_iterator(n, (0..n).map(|i| lz.dm(g.node(i)) - base.dm(g.node(i))));
    let want = a.lu().solve(&rhs).unwrap();
    for i in 0..n {
        assert_relative_eq!(v.values[i], want[i], epsilon = 1e-10, max_relative = 1e-9);
    }
}

#[test]
fn kernel_is_positive_semidefinite() {
    let pb = nn_problem(9);
    let nu = nn_data();
    let sol = pb.solve(&nu).unwrap();
    let km = build_cm(pb.model(), &sol.density, &nu).unwrap();
    assert!(km.is_psd(1e-12));
    let mut r = common::rng(5);
    for _ in 0..10 {
        let f: Vec<f64> = (0..pb.grid().len()).map(|_| common::range(&mut r, -1.0, 1.0)).collect();
        assert!(km.quadratic_form(&f) >= -1e-12);
    }
}

#[test]
fn expected_param_derivative_is_centred_covariance() {
    let cfg = GibbsConfig::new(0.8, 1.0, 2.0, Regularizer::new(0.5, 1).unwrap()).unwrap();
    let model = LossModel::ExpectedParam(ParametricLoss::SquaredError);
    let pb = GibbsProblem::new(model, cfg).unwrap();
    let ys = [0.4, -0.9, 1.3];
    let nu = DataMeasure::empirical(ys.iter().map(|&y| DataPoint::scalar(y)).collect()).unwrap();
    let z = 2.0;
    let d = dm_dnu(&pb, &nu, &DataPoint::scalar(z)).unwrap();
    let sol = pb.solve(&nu).unwrap();
    // m ∝ exp(−k ∫ℓ dν − U/σ²)  ⇒  δm/δν(z) = −k m (f − E_m f), f = ℓ(·, z) − ∫ℓ dν.
    let g = pb.grid();
    let f: Vec<f64> = (0..g.len())
        .map(|i| {
            let t = g.node(i)[0];
            (t - z).powi(2) - ys.iter().map(|y| (t - y).powi(2)).sum::<f64>() / 3.0
        })
        .collect();
    let w = sol.density.masses();
    let ef: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum();
    let k = pb.config().temperature();
    for ((got, m), fi) in d.values().iter().zip(sol.density.values()).zip(&f) {
        assert_relative_eq!(*got, -k * m * (fi - ef), epsilon = 1e-12);
    }
    assert!(d.total_mass().abs() < 1e-12);
}

#[test]
fn nn_derivative_matches_richardson_finite_difference() {
    let pb = nn_problem(21);
    let nu = nn_data();
    let z = DataPoint::new(vec![-0.4], 0.8).unwrap();
    let exact = dm_dnu(&pb, &nu, &z).unwrap();
    let fd = richardson_dm_dnu(&pb, &nu, &z, 1e-2).unwrap();
    assert!(fd.extrapolated.relative_l1(&exact).unwrap() < 1e-3);
    assert!(fd.fine.relative_l1(&exact).unwrap() < 1e-2);
}

#[test]
fn covariance_representation_matches_density() {
    let pb = nn_problem(15);
    let nu = nn_data();
    let sol = pb.solve(&nu).unwrap();
    let ds = DerivativeSolver::new(&pb, &nu, &sol).unwrap();
    let z = DataPoint::new(vec![1.5], 0.0).unwrap();
    let v = ds.ds_dnu(&[z]).unwrap().remove(0);
    let dens = ds.density_from(&v).unwrap();
    let mut r = common::rng(77);
    for _ in 0..5 {
        let (a, b, c) = (common::range(&mut r, -1.0, 1.0), common::range(&mut r, -1.0, 1.0), common::range(&mut r, 0.1, 2.0));
        let (lhs, rhs) = covariance_form(&pb, &sol.density, &v, &dens, |t| (a * t[0] + b * t[1]).sin() * c);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }
}

#[test]
fn explicit_gaussian_derivative_matches_finite_difference() {
    let grid = Arc::new(Grid::uniform(1, 801, 6.0).unwrap());
    let ys = [0.3, -0.5, 1.0, 0.1];
    let n = ys.len();
    let nu = DataMeasure::empirical(ys.iter().map(|&y| DataPoint::scalar(y)).collect()).unwrap();
    let (sd, z) = (1.2, 2.0);
    let d = explicit_gaussian_dm_dnu(grid.clone(), &nu, z, sd, n).unwrap();
    let mean: f64 = ys.iter().sum::<f64>() / n as f64;
    let var = sd * sd / n as f64;
    let eps = 1e-4;
    let lo = gaussian_on_grid(grid.clone(), mean - eps * (z - mean), var).unwrap();
    let hi = gaussian_on_grid(grid.clone(), mean + eps * (z - mean), var).unwrap();
    let fd: Vec<f64> = hi.values().iter().zip(lo.values()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let fd = GridDensity::signed(grid, fd).unwrap();
    assert!(fd.relative_l1(&d).unwrap() < 1e-4);
}

#[test]
fn oversized_grid_is_rejected() {
    let pb = nn_problem(65);
    let nu = nn_data();
    let sol = pb.solve(&nu).unwrap();
    assert!(DerivativeSolver::new(&pb, &nu, &sol).is_err());
}
