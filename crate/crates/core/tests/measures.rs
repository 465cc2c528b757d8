mod common;

use approx::assert_relative_eq;
use mfgen_core::measures::*;
use mfgen_core::Error;
use proptest::prelude::*;
use std::sync::Arc;

fn gaussian(grid: &Arc<Grid>, mean: f64, sd: f64) -> GridDensity {
    let logs: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|t| -0.5 * ((t - mean) / sd).powi(2))
        .collect();
    GridDensity::from_log(grid.clone(), &logs).unwrap()
}

#[test]
fn gaussian_kl_matches_closed_form() {
    let grid = Arc::new(Grid::uniform(1, 801, 14.0).unwrap());
    let (m1, s1, m2, s2) = (0.4, 0.8, -0.3, 1.5);
    let p = gaussian(&grid, m1, s1);
    let q = gaussian(&grid, m2, s2);
    let want = (s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
    assert_relative_eq!(p.kl(&q).unwrap(), want, epsilon = 1e-9);
    assert_eq!(p.kl(&p).unwrap(), 0.0);
}

#[test]
fn empirical_measure_integrates_sample_mean() {
    let pts: Vec<DataPoint> = [1.0, 2.0, 6.0].iter().map(|&v| DataPoint::scalar(v)).collect();
    let nu = DataMeasure::empirical(pts).unwrap();
    assert_relative_eq!(nu.integrate(|z| z.y).unwrap(), 3.0, epsilon = 1e-15);
    assert_relative_eq!(nu.integrate(|z| z.y * z.y).unwrap(), 41.0 / 3.0, epsilon = 1e-14);
}

#[test]
fn resampling_requires_equal_weights() {
    let nu = DataMeasure::from_atoms(
        vec![(DataPoint::scalar(0.0), 0.25), (DataPoint::scalar(1.0), 0.75)],
        false,
    )
    .unwrap();
    assert!(matches!(
        nu.resample(&[0], &[DataPoint::scalar(2.0)]),
        Err(Error::InvalidMeasure(_))
    ));
}

#[test]
fn data_convex_combination_reweights_atoms() {
    let a = DataMeasure::empirical(vec![DataPoint::scalar(0.0)]).unwrap();
    let b = DataMeasure::empirical(vec![DataPoint::scalar(4.0), DataPoint::scalar(8.0)]).unwrap();
    let c = a.convex_combination(&b, 0.25).unwrap();
    assert_relative_eq!(c.integrate(|_| 1.0).unwrap(), 1.0, epsilon = 1e-15);
    assert_relative_eq!(c.integrate(|z| z.y).unwrap(), 0.25 * 6.0, epsilon = 1e-15);
    assert!(a.convex_combination(&b, 1.5).is_err());
}

#[test]
fn signed_grid_density_must_have_zero_mass() {
    let grid = Arc::new(Grid::uniform(1, 3, 1.0).unwrap());
    assert!(GridDensity::signed(grid.clone(), vec![1.0, 0.0, -1.0]).is_ok());
    assert!(matches!(
        GridDensity::signed(grid, vec![1.0, 0.0, 0.0]),
        Err(Error::InvalidMeasure(_))
    ));
}

#[test]
fn particle_moments() {
    let p = ParamMeasure::Particles(Particles::new(1, vec![-1.0, 1.0, 3.0]).unwrap());
    assert_relative_eq!(p.mean()[0], 1.0, epsilon = 1e-15);
    assert_relative_eq!(p.moment(2.0), 11.0 / 3.0, epsilon = 1e-15);
}

proptest! {
    #[test]
    fn grid_convex_combination_preserves_mass(seed in 0u64..1000, lambda in 0.0f64..=1.0) {
        let grid = Arc::new(Grid::uniform(2, 9, 2.0).unwrap());
        let mut r = common::rng(seed);
        let a = common::random_density(&grid, &mut r);
        let b = common::random_density(&grid, &mut r);
        let c = a.convex_combination(&b, lambda).unwrap();
        prop_assert!((c.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(c.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kl_is_nonnegative(seed in 0u64..1000) {
        let grid = Arc::new(Grid::uniform(1, 33, 3.0).unwrap());
        let mut r = common::rng(seed);
        let a = common::random_density(&grid, &mut r);
        let b = common::random_density(&grid, &mut r);
        prop_assert!(a.kl(&b).unwrap() >= -1e-14);
    }
}
