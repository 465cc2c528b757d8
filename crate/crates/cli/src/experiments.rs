//! Experiment drivers. Each returns its artifacts instead of writing them.

use crate::config::{ExperimentConfig, ExperimentKind, RouteName};
use crate::output::{artifact, float, json, sweep_csv, table_csv, Artifact, SweepRow};
use crate::verify;
use anyhow::{bail, Context, Result};
use mfgen_core::genbench::*;
use mfgen_core::gibbs::{mfld_sample, GibbsProblem, MfldOptions};
use mfgen_core::measures::{DataMeasure, ParamMeasure};
use mfgen_core::rng::replicate_rng;
use mfgen_core::Error;
use serde::Serialize;
use std::path::Path;

/// Result of one experiment.
#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    /// Bound checks or invariant checks that failed.
    pub violations: usize,
}

/// Runs `cfg`, with `seed` replacing the config's top-level seed when given.
pub fn run(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let id = cfg.experiment_id().to_string();
    match cfg.experiment {
        ExperimentKind::Verify => verify_report(&id, out),
        ExperimentKind::GibbsSolve => gibbs_solve(cfg, &id, out, seed),
        ExperimentKind::GenSweep => gen_sweep(cfg, &id, out, seed),
        ExperimentKind::GaussianOracle => gen_sweep(cfg, &id, out, seed),
        ExperimentKind::Bounds => bounds(cfg, &id, out, seed),
        ExperimentKind::MfldVsGrid => mfld_vs_grid(cfg, &id, out, seed),
    }
}

pub fn verify_report(id: &str, out: &Path) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report<'a> {
        experiment_id: &'a str,
        checks: &'a [verify::Check],
    }
    let checks = verify::run_all()?;
    let failed = checks.iter().filter(|c| c.status == "fail").count();
    let name = format!("{id}.json");
    let summary = format!(
        "verify {id}: {} checks, {failed} failed -> {}",
        checks.len(),
        out.join(&name).display()
    );
    Ok(Outcome {
        artifacts: vec![artifact(out, name, json(&Report { experiment_id: id, checks: &checks })?)],
        summary,
        violations: failed,
    })
}

fn top_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.or(cfg.sweep.as_ref().map(|s| s.seed)).unwrap_or(0)
}

fn problem_if_any(cfg: &ExperimentConfig) -> Result<Option<GibbsProblem>> {
    cfg.gibbs.as_ref().map(|_| cfg.gibbs_problem()).transpose()
}

/// `ν`: a sample of `sweep.n[0]` points when a sweep is given, else the population quadrature.
fn training_measure(cfg: &ExperimentConfig, pop: &PopulationModel, seed: u64) -> Result<DataMeasure> {
    match &cfg.sweep {
        Some(s) => {
            let mut rng = replicate_rng(seed, 0);
            Ok(DataMeasure::empirical(pop.sample_n(&mut rng, s.n[0])?)?)
        }
        None => pop
            .quadrature()
            .cloned()
            .context("[sweep]: needed to sample data from a population without quadrature"),
    }
}

fn gen_sweep(cfg: &ExperimentConfig, id: &str, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let sweep = cfg.sweep.as_ref().context("[sweep]: missing")?;
    let seed = top_seed(cfg, seed);
    let trainer = cfg.trainer()?;
    let grid = match &trainer {
        Trainer::GibbsGrid(p) | Trainer::Mfld { problem: p, .. } => Some(p.grid().clone()),
        _ => problem_if_any(cfg)?.map(|p| p.grid().clone()),
    };
    let pop = cfg.population(grid.as_ref())?;
    let model = match &trainer {
        Trainer::GibbsGrid(p) | Trainer::Mfld { problem: p, .. } => *p.model(),
        _ => cfg.loss_model()?,
    };
    let mut setup = Setup::new(&trainer, &pop, &model);
    if let Some(b) = sweep.batch_factor {
        setup.batch_factor = b;
    }
    if let Some(l) = sweep.lambda_nodes {
        setup.lambda_nodes = l;
    }
    let routes: Vec<RouteName> = match (&cfg.experiment, &sweep.routes, &trainer) {
        (ExperimentKind::GaussianOracle, _, _) => vec![RouteName::Direct, RouteName::Resampled],
        (_, Some(r), _) => r.clone(),
        (_, None, Trainer::GibbsGrid(_)) => vec![
            RouteName::Direct,
            RouteName::Resampled,
            RouteName::Representation,
            RouteName::Lge,
            RouteName::LgeUpper,
            RouteName::ConvexLower,
        ],
        _ => vec![RouteName::Direct, RouteName::Resampled],
    };
    let oracle = |n: usize| -> Option<f64> {
        match (&trainer, pop.gaussian_parameters(), model) {
            (Trainer::Constant(_), _, _) => Some(0.0),
            (
                Trainer::ExplicitGaussianMean { .. },
                Some((_, sd)),
                mfgen_core::losses::LossModel::ExpectedParam(mfgen_core::losses::ParametricLoss::SquaredError),
            ) => Some(gaussian_mean_oracle(sd, n)),
            _ => None,
        }
    };
    let reps = sweep.replicates;
    let mut rows = Vec::new();
    let mut series: Vec<(RouteName, Vec<GenEstimate>)> = routes.iter().map(|&r| (r, Vec::new())).collect();
    for &n in &sweep.n {
        let constants = match trainer.gibbs_problem() {
            Some(p) => match gibbs_bound_constants(p, &pop, n) {
                Ok(c) => Some(c),
                Err(Error::Incompatible(_)) => None,
                Err(e) => return Err(e).context("bound constants"),
            },
            None => None,
        };
        for (ri, &route) in routes.iter().enumerate() {
            let wge_bound = constants.map(|c| c.wge_bound);
            let wge_holds = |e: &GenEstimate| wge_bound.map(|b| e.value.abs() - 2.0 * e.stderr <= b);
            let (est, oracle, bound, holds) = match route {
                RouteName::Direct | RouteName::Resampled | RouteName::Representation => {
                    let e = match route {
                        RouteName::Direct => wge_direct(&setup, n, reps, seed),
                        RouteName::Resampled => wge_resampled(&setup, n, reps, seed),
                        _ => wge_representation(&setup, n, reps, seed),
                    }
                    .with_context(|| format!("route {} at n = {n}", route.as_str()))?;
                    (e, oracle(n), wge_bound, wge_holds(&e))
                }
                RouteName::Lge => {
                    let e = lge(&setup, n, reps, seed).with_context(|| format!("route lge at n = {n}"))?;
                    let b = constants.map(|c| c.lge_bound);
                    (e, None, b, b.map(|b| e.value - 2.0 * e.stderr <= b))
                }
                RouteName::LgeUpper => {
                    let t = lge_upper_terms(&setup, n, reps, seed).with_context(|| format!("route lge_upper at n = {n}"))?;
                    (t.lge, None, Some(t.bound_with_margin), Some(t.holds))
                }
                RouteName::ConvexLower => {
                    let (_, lower, h) = convex_lower_bound_check(&setup, n, reps, seed)
                        .with_context(|| format!("route convex_lower at n = {n}"))?;
                    (lower, None, None, Some(h))
                }
            };
            series[ri].1.push(est);
            rows.push(SweepRow {
                experiment_id: id.to_string(),
                route: route.as_str(),
                n,
                replicates: reps,
                seed,
                estimate: est.value,
                stderr: est.stderr,
                oracle,
                bound,
                holds,
            });
        }
    }
    let violations = rows.iter().filter(|r| r.holds == Some(false)).count();
    let name = format!("{id}.csv");
    let mut summary = format!(
        "{} {id}: {} rows, {violations} bound violations",
        cfg.experiment.as_str(),
        rows.len()
    );
    let mut artifacts = vec![artifact(out, name.clone(), sweep_csv(&rows)?)];
    if sweep.n.len() >= 3 {
        let mut fits = Vec::new();
        for (route, est) in &series {
            if matches!(route, RouteName::LgeUpper | RouteName::ConvexLower) {
                continue;
            }
            match rate_fit(&sweep.n, est) {
                Ok(f) => {
                    summary.push_str(&format!(", slope({}) = {:.3}", route.as_str(), f.slope));
                    let ns = |ix: &[usize]| ix.iter().map(|&i| sweep.n[i].to_string()).collect::<Vec<_>>().join(" ");
                    fits.push(vec![
                        route.as_str().to_string(),
                        float(f.slope),
                        float(f.intercept),
                        float(f.r2),
                        ns(&f.used),
                        ns(&f.excluded),
                    ]);
                }
                Err(Error::TooFewPoints(k)) => {
                    summary.push_str(&format!(", slope({}) unavailable ({k} usable points)", route.as_str()));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let header = ["route", "slope", "intercept", "r2", "used_n", "excluded_n"];
        artifacts.push(artifact(out, format!("{id}_rate.csv"), table_csv(&header, &fits)?));
    }
    summary.push_str(&format!(" -> {}", out.join(name).display()));
    Ok(Outcome {
        artifacts,
        summary,
        violations,
    })
}

fn gibbs_solve(cfg: &ExperimentConfig, id: &str, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report<'a> {
        experiment_id: &'a str,
        seed: u64,
        data_points: usize,
        iterations: usize,
        residual: f64,
        log_normalizer: f64,
        objective: f64,
        mean: Vec<f64>,
        moment_p: f64,
        moment_bound: f64,
        holds: bool,
    }
    let seed = top_seed(cfg, seed);
    let pb = cfg.gibbs_problem()?;
    let pop = cfg.population(Some(pb.grid()))?;
    let nu = training_measure(cfg, &pop, seed)?;
    let sol = pb.solve(&nu)?;
    let m = sol.measure();
    let (lhs, rhs) = pb.moment_bound(&sol, &nu, 1.0)?;
    let holds = lhs <= rhs + 1e-6;
    let report = Report {
        experiment_id: id,
        seed,
        data_points: nu.len(),
        iterations: sol.iterations,
        residual: sol.residual,
        log_normalizer: sol.log_normalizer,
        objective: pb.objective(&m, &nu)?,
        mean: m.mean(),
        moment_p: lhs,
        moment_bound: rhs,
        holds,
    };
    let g = pb.grid();
    let mut header: Vec<String> = (1..=g.dim()).map(|j| format!("theta_{j}")).collect();
    header.push("density".into());
    let rows: Vec<Vec<String>> = (0..g.len())
        .map(|i| {
            let mut r: Vec<String> = g.node(i).iter().map(|&t| float(t)).collect();
            r.push(float(sol.density.values()[i]));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let summary = format!(
        "gibbs-solve {id}: {} iterations, residual {:.3e}, moment bound {} -> {}",
        sol.iterations,
        sol.residual,
        if holds { "holds" } else { "VIOLATED" },
        out.join(format!("{id}.json")).display()
    );
    Ok(Outcome {
        artifacts: vec![
            artifact(out, format!("{id}.json"), json(&report)?),
            artifact(out, format!("{id}_density.csv"), table_csv(&header, &rows)?),
        ],
        summary,
        violations: usize::from(!holds),
    })
}

fn bounds(cfg: &ExperimentConfig, id: &str, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let seed = top_seed(cfg, seed);
    let sweep = cfg.sweep.as_ref().context("[sweep]: missing")?;
    let b = cfg.bounds.as_ref().context("[bounds]: missing")?;
    let pb = cfg.gibbs_problem()?;
    let pop = cfg.population(Some(pb.grid()))?;
    let m_bar = b.reference.build(Some(pb.grid())).context("bounds.reference")?;
    let mode = b.schedule();
    let mode_name = match mode {
        ScheduleMode::WgeN14 => "wge_n14",
        ScheduleMode::LgeN16 => "lge_n16",
    };
    let mut rows = Vec::new();
    let mut scaled = Vec::new();
    let mut violations = 0;
    for &n in &sweep.n {
        let r = population_risk_bound(&pb, &pop, &m_bar, n, mode, b.beta0, sweep.replicates, seed)
            .with_context(|| format!("population risk bound at n = {n}"))?;
        violations += usize::from(!r.holds);
        scaled.push(r.scaled_bound);
        rows.push(vec![
            id.to_string(),
            mode_name.to_string(),
            n.to_string(),
            sweep.replicates.to_string(),
            seed.to_string(),
            float(r.beta),
            float(r.constants.wge_bound),
            float(r.constants.lge_bound),
            float(r.kl_term),
            float(r.reference_term),
            float(r.risk_bound),
            float(r.scaled_bound),
            float(r.empirical_risk.value),
            float(r.empirical_risk.stderr),
            r.holds.to_string(),
        ]);
    }
    let header = [
        "experiment_id",
        "mode",
        "n",
        "replicates",
        "seed",
        "beta",
        "wge_bound",
        "lge_bound",
        "kl_term",
        "reference_term",
        "risk_bound",
        "scaled_bound",
        "empirical_risk",
        "empirical_stderr",
        "holds",
    ];
    let name = format!("{id}.csv");
    let summary = format!(
        "bounds {id}: {} sizes, {violations} bound violations, scaled bound spread {:.3e} -> {}",
        rows.len(),
        relative_spread(&scaled),
        out.join(&name).display()
    );
    Ok(Outcome {
        artifacts: vec![artifact(out, name, table_csv(&header, &rows)?)],
        summary,
        violations,
    })
}

/// `(max − min) / min` of positive values.
pub fn relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

fn mfld_vs_grid(cfg: &ExperimentConfig, id: &str, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (pb, opts) = match cfg.trainer()? {
        Trainer::Mfld { problem, options } => (problem, options),
        _ => bail!("trainer.kind: mfld-vs-grid needs \"mfld\""),
    };
    let opts = MfldOptions {
        seed: seed.unwrap_or(opts.seed),
        ..opts
    };
    let pop = cfg.population(Some(pb.grid()))?;
    let nu = training_measure(cfg, &pop, top_seed(cfg, seed))?;
    let grid_m = pb.solve(&nu)?.measure();
    let parts = ParamMeasure::Particles(mfld_sample(&pb, &nu, &opts)?);
    let n = opts.particles as f64;
    let mut rows = Vec::new();
    let mut agree = 0;
    let dim = pb.grid().dim();
    for j in 0..dim {
        for (name, pow) in [("mean", 1), ("second_moment", 2)] {
            let f = |t: &[f64]| t[j].powi(pow);
            let g = grid_m.integrate(f)?;
            let p = parts.integrate(f)?;
            let p2 = parts.integrate(|t| f(t) * f(t))?;
            let se = ((p2 - p * p).max(0.0) / n).sqrt();
            let ok = (g - p).abs() <= 3.0 * se;
            agree += usize::from(ok);
            rows.push(vec![
                id.to_string(),
                name.to_string(),
                (j + 1).to_string(),
                opts.seed.to_string(),
                float(g),
                float(p),
                float(se),
                ok.to_string(),
            ]);
        }
    }
    let header = ["experiment_id", "quantity", "coordinate", "seed", "grid", "particles", "stderr", "within_3se"];
    let name = format!("{id}.csv");
    let summary = format!(
        "mfld-vs-grid {id}: {agree}/{} moments within 3 stderr -> {}",
        rows.len(),
        out.join(&name).display()
    );
    Ok(Outcome {
        artifacts: vec![artifact(out, name, table_csv(&header, &rows)?)],
        summary,
        violations: 0,
    })
}
