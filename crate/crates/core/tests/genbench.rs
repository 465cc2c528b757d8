use approx::assert_relative_eq;
use mfgen_core::genbench::*;
use mfgen_core::gibbs::*;
use mfgen_core::losses::*;
use mfgen_core::measures::*;
use mfgen_core::Error;

fn squared() -> LossModel {
    LossModel::ExpectedParam(ParametricLoss::SquaredError)
}

fn constant_trainer() -> Trainer {
    Trainer::Constant(ParamMeasure::point_mass(&[0.3]).unwrap())
}

fn small_gibbs(beta: f64) -> GibbsProblem {
    let mut cfg = GibbsConfig::new(beta, 1.0, 4.0, Regularizer::new(0.05, 3).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = 65;
    GibbsProblem::new(squared(), cfg).unwrap()
}

fn est(value: f64, stderr: f64, n: usize) -> GenEstimate {
    GenEstimate {
        value,
        stderr,
        replicates: 100,
        n,
        seed: 0,
        route: Route::Direct,
    }
}

#[test]
fn gaussian_oracle_values() {
    assert_eq!(gaussian_mean_oracle(1.0, 10), 0.2);
    assert_eq!(gaussian_mean_oracle(2.0, 8), 1.0);
    assert!(gaussian_mean_oracle(1.0, usize::MAX) < 1e-18);
}

#[test]
fn markov_tail_examples() {
    assert_relative_eq!(markov_tail(0.01, 1.0).unwrap(), 0.01);
    assert_eq!(markov_tail(4.0, 1.0).unwrap(), 1.0);
    assert_eq!(markov_tail(0.5, f64::INFINITY).unwrap(), 0.0);
    assert!(markov_tail(0.5, 0.0).is_err());
}

#[test]
fn constant_trainer_has_no_generalization_gap() {
    let pop = PopulationModel::gaussian(0.0, 1.0).unwrap();
    let model = squared();
    let tr = constant_trainer();
    let s = Setup::new(&tr, &pop, &model);
    let d = wge_direct(&s, 10, 2000, 1).unwrap();
    assert!(d.within(0.0, 3.0), "{d:?}");
    let r = wge_resampled(&s, 10, 50, 1).unwrap();
    assert_eq!((r.value, r.stderr), (0.0, 0.0));
    let h = wge_representation(&s, 10, 50, 1).unwrap();
    assert_eq!(h.value, 0.0);
    let (w, lo, holds) = convex_lower_bound_check(&s, 10, 50, 1).unwrap();
    assert_eq!((w.value, lo.value, holds), (0.0, 0.0, true));
}

#[test]
fn constant_trainer_lge_is_iid_variance() {
    // ℓ(δ_a, Z) = (a − Z)², Z ~ N(0, 1): Var = E(a−Z)⁴ − (E(a−Z)²)² = 4a² + 2.
    let pop = PopulationModel::gaussian(0.0, 1.0).unwrap();
    let model = squared();
    let tr = constant_trainer();
    let s = Setup::new(&tr, &pop, &model);
    let var = 4.0 * 0.09 + 2.0;
    let l10 = lge(&s, 10, 20_000, 2).unwrap();
    assert!(l10.within(var / 10.0, 3.0), "{l10:?}");
    let l20 = lge(&s, 20, 20_000, 3).unwrap();
    let ratio = l20.value / l10.value;
    assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    let terms = lge_upper_terms(&s, 10, 200, 4).unwrap();
    assert_eq!((terms.eh2sq, terms.eh2tsq), (0.0, 0.0));
    assert_relative_eq!(terms.bound, 4.0 * terms.k / 10.0, max_relative = 1e-15);
    assert!(terms.holds);
}

#[test]
fn explicit_gaussian_trainer_matches_oracle() {
    let pop = PopulationModel::gaussian(0.7, 1.0).unwrap();
    let model = squared();
    let tr = Trainer::ExplicitGaussianMean { noise_sd: 1.0 };
    let s = Setup::new(&tr, &pop, &model);
    let d = wge_direct(&s, 10, 8000, 5).unwrap();
    let r = wge_resampled(&s, 10, 8000, 5).unwrap();
    assert!(d.within(0.2, 3.0), "{d:?}");
    assert!(r.within(0.2, 3.0), "{r:?}");
}

#[test]
fn explicit_gaussian_lge_matches_direct_simulation() {
    // gap = (θ̄−μ)² − (θ̄−Z̄)² ... computed by hand from the closed-form trained measure:
    // R(m, pop) = (m̂ − μ)² + s² + σ̃²/n and R(m, ν_n) = (m̂ − ȳ)² + S² + σ̃²/n with m̂ = ȳ.
    let pop = PopulationModel::gaussian(0.0, 1.0).unwrap();
    let model = squared();
    let tr = Trainer::ExplicitGaussianMean { noise_sd: 1.0 };
    let s = Setup::new(&tr, &pop, &model);
    let n = 8;
    let est = lge(&s, n, 4000, 6).unwrap();
    let mut sum = 0.0;
    let reps = 4000;
    let mut rng = mfgen_core::rng::replicate_rng(99, 0);
    for _ in 0..reps {
        let ys: Vec<f64> = (0..n).map(|_| mfgen_core::rng::normal(&mut rng)).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let s2 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let gap = mean * mean + 1.0 - s2;
        sum += gap * gap;
    }
    let sim = sum / reps as f64;
    assert!((est.value - sim).abs() <= 4.0 * est.stderr * 2f64.sqrt(), "{} vs {sim}", est.value);
}

#[test]
fn gibbs_routes_agree() {
    let pb = small_gibbs(1.0);
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let model = squared();
    let tr = Trainer::GibbsGrid(pb);
    let s = Setup::new(&tr, &pop, &model);
    let d = wge_direct(&s, 5, 400, 8).unwrap();
    let r = wge_resampled(&s, 5, 400, 8).unwrap();
    let h = wge_representation(&s, 5, 100, 8).unwrap();
    assert!(d.overlaps(&r, 2.0), "{d:?} {r:?}");
    assert!(d.overlaps(&h, 2.0), "{d:?} {h:?}");
    let (_, _, holds) = convex_lower_bound_check(&s, 5, 100, 8).unwrap();
    assert!(holds);
}

#[test]
fn representation_is_converged_in_lambda_nodes() {
    let pb = small_gibbs(1.0);
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let model = squared();
    let tr = Trainer::GibbsGrid(pb);
    let mut s = Setup::new(&tr, &pop, &model);
    let a = wge_representation(&s, 5, 50, 10).unwrap();
    s.lambda_nodes = 16;
    let b = wge_representation(&s, 5, 50, 10).unwrap();
    assert!((a.value - b.value).abs() < a.stderr / 10.0);
}

#[test]
fn lge_terms_are_related_by_one_over_n_squared() {
    let pb = small_gibbs(1.0);
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let model = squared();
    let tr = Trainer::GibbsGrid(pb);
    let s = Setup::new(&tr, &pop, &model);
    for n in [4, 8] {
        let t = lge_upper_terms(&s, n, 60, 12).unwrap();
        assert!(t.holds);
        let scaled = t.eh2tsq / (n * n) as f64;
        assert!((t.eh2sq - scaled).abs() <= t.eh2sq_stderr + t.eh2tsq_stderr / (n * n) as f64);
    }
}

#[test]
fn bound_constants_scale_with_beta_and_n() {
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let pb = small_gibbs(1.0);
    let a = gibbs_bound_constants(&pb, &pop, 10).unwrap();
    let b = gibbs_bound_constants(&pb.with_beta(2.0).unwrap(), &pop, 10).unwrap();
    assert_relative_eq!(b.wge_bound / a.wge_bound, 4.0, max_relative = 1e-12);
    let big = gibbs_bound_constants(&pb, &pop, 1_000_000_000).unwrap();
    let huge = gibbs_bound_constants(&pb, &pop, 2_000_000_000).unwrap();
    let (x, y) = (1e9 * big.wge_bound, 2e9 * huge.wge_bound);
    assert!(x > 0.0 && x.is_finite());
    assert_relative_eq!(x, y, max_relative = 1e-6);
}

#[test]
fn bound_constants_require_enough_moments() {
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let mut cfg = GibbsConfig::new(1.0, 1.0, 2.0, Regularizer::new(0.5, 2).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = 33;
    let pb = GibbsProblem::new(squared(), cfg).unwrap();
    assert!(matches!(gibbs_bound_constants(&pb, &pop, 10), Err(Error::Incompatible(_))));
    assert!(pop.moment(9).is_err());
}

#[test]
fn enumeration_checks_resampling_identity() {
    let pb = small_gibbs(1.0);
    let tr = Trainer::GibbsGrid(pb);
    let model = squared();
    let two = vec![(DataPoint::scalar(0.0), 0.5), (DataPoint::scalar(1.0), 0.5)];
    let e = enumerate_exact_gen(&tr, &two, &model, 2).unwrap();
    assert!((e.wge - e.wge_resampled).abs() <= 1e-12);
    assert!(e.wge_resampled >= e.convex_lower - 1e-12);
    let three = vec![
        (DataPoint::scalar(-1.0), 0.2),
        (DataPoint::scalar(0.5), 0.5),
        (DataPoint::scalar(2.0), 0.3),
    ];
    let e = enumerate_exact_gen(&tr, &three, &model, 2).unwrap();
    assert!((e.wge - e.wge_resampled).abs() <= 1e-12);
    let c = enumerate_exact_gen(&constant_trainer(), &three, &model, 3).unwrap();
    assert_eq!((c.wge.abs() < 1e-15, c.wge_resampled), (true, 0.0));
}

#[test]
fn enumeration_matches_monte_carlo() {
    let tr = Trainer::GibbsGrid(small_gibbs(1.0));
    let model = squared();
    let space = vec![(DataPoint::scalar(0.0), 0.5), (DataPoint::scalar(1.0), 0.5)];
    let exact = enumerate_exact_gen(&tr, &space, &model, 2).unwrap();
    let pop = PopulationModel::discrete(space).unwrap();
    let s = Setup::new(&tr, &pop, &model);
    let mc = wge_direct(&s, 2, 2000, 13).unwrap();
    assert!(mc.within(exact.wge, 3.0), "{mc:?} vs {}", exact.wge);
}

#[test]
fn enumeration_limits() {
    let tr = constant_trainer();
    let model = squared();
    let space: Vec<(DataPoint, f64)> = (0..10).map(|i| (DataPoint::scalar(i as f64), 0.1)).collect();
    assert!(matches!(
        enumerate_exact_gen(&tr, &space, &model, 6),
        Err(Error::EnumerationTooLarge { .. })
    ));
    assert!(enumerate_exact_gen(&tr, &space, &model, 7).is_err());
}

#[test]
fn rate_fit_recovers_synthetic_exponents() {
    let ns = [5, 10, 20, 40, 80];
    let inv: Vec<GenEstimate> = ns.iter().map(|&n| est(3.0 / n as f64, 0.0, n)).collect();
    let f = rate_fit(&ns, &inv).unwrap();
    assert!((f.slope + 1.0).abs() <= 1e-12);
    assert!((f.r2 - 1.0).abs() <= 1e-12);
    assert_relative_eq!(f.intercept, 3f64.ln(), epsilon = 1e-12);
    let sqrt: Vec<GenEstimate> = ns.iter().map(|&n| est(-2.0 / (n as f64).sqrt(), 0.0, n)).collect();
    assert!((rate_fit(&ns, &sqrt).unwrap().slope + 0.5).abs() <= 1e-12);
}

#[test]
fn rate_fit_excludes_points_at_zero() {
    let ns = [5, 10, 20, 40];
    let mut e: Vec<GenEstimate> = ns.iter().map(|&n| est(1.0 / n as f64, 1e-4, n)).collect();
    e[3] = est(1e-3, 1e-3, 40);
    let f = rate_fit(&ns, &e).unwrap();
    assert_eq!(f.excluded, vec![3]);
    e[2] = est(0.0, 0.0, 20);
    assert_eq!(rate_fit(&ns, &e), Err(Error::TooFewPoints(2)));
    assert!(rate_fit(&[5, 5, 10], &e[..3]).is_err());
}

#[test]
fn replicate_failures_carry_the_index() {
    let mut cfg = GibbsConfig::new(1.0, 1.0, 2.0, Regularizer::new(0.5, 1).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = 33;
    let pb = GibbsProblem::new(squared(), cfg).unwrap();
    let tr = Trainer::Mfld {
        problem: pb,
        options: MfldOptions {
            particles: 8,
            step: 50.0,
            steps: 5,
            seed: 0,
        },
    };
    let pop = PopulationModel::gaussian(0.0, 1.0).unwrap();
    let model = squared();
    let s = Setup::new(&tr, &pop, &model);
    match wge_direct(&s, 4, 3, 0) {
        Err(Error::Replicate { replicate, .. }) => assert_eq!(replicate, 0),
        other => panic!("{other:?}"),
    }
    assert!(wge_direct(&s, 4, 1, 0).is_err());
}

#[test]
fn estimates_are_reproducible() {
    let cfg = GibbsConfig::new(1.0, 1.0, 2.0, Regularizer::new(0.5, 1).unwrap()).unwrap();
    let pb = GibbsProblem::new(squared(), cfg).unwrap();
    let tr = Trainer::Mfld {
        problem: pb,
        options: MfldOptions {
            particles: 32,
            step: 0.02,
            steps: 20,
            seed: 1,
        },
    };
    let pop = PopulationModel::gaussian(0.0, 1.0).unwrap();
    let model = squared();
    let s = Setup::new(&tr, &pop, &model);
    let a = wge_resampled(&s, 5, 8, 42).unwrap();
    let b = wge_resampled(&s, 5, 8, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, wge_resampled(&s, 5, 8, 43).unwrap());
}

#[test]
fn teacher_population_is_realizable() {
    let net = NeuralNet {
        activation: Activation::Tanh,
        outer: OuterLoss::Quadratic,
        features: 1,
    };
    let teacher = ParamMeasure::point_mass(&[1.5, 0.8]).unwrap();
    let pop = PopulationModel::teacher(net, teacher.clone(), 0.0).unwrap();
    let model = LossModel::NeuralNet(net);
    assert!(pop.risk(&model, &teacher, &[]).unwrap() < 1e-28);
    let mut rng = mfgen_core::rng::replicate_rng(1, 1);
    let z = pop.sample(&mut rng).unwrap();
    assert_relative_eq!(z.y, 1.5 * (0.8 * z.x[0]).tanh(), epsilon = 1e-15);
    // E[(1 + X² + Y²)] with X ~ N(0,1) is 2 + E[Y²].
    let ey2 = pop.quadrature().unwrap().integrate(|z| z.y * z.y).unwrap();
    assert_relative_eq!(pop.moment(1).unwrap().value, 2.0 + ey2, epsilon = 1e-12);
}
