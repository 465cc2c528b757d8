//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1, 7, 8, 9 and 10 read the CSVs written by the `mfgen` binary for the
//! configs in `configs/`; criterion 11 runs every config a second time with a
//! different worker count and compares the files byte for byte.

use mfgen_core::funcderiv::*;
use mfgen_core::genbench::*;
use mfgen_core::gibbs::*;
use mfgen_core::losses::*;
use mfgen_core::measures::*;
use mfgen_core::rng::{replicate_rng, uniform, Rng};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Run {
    seconds: f64,
    code: Option<i32>,
    stdout: String,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config_stems() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "toml").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    v.sort();
    v
}

fn run_config(stem: &str, out: &Path, threads: Option<usize>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mfgen"));
    cmd.arg("run").arg(configs_dir().join(format!("{stem}.toml"))).arg("--out").arg(out);
    if let Some(k) = threads {
        cmd.arg("--threads").arg(k.to_string());
    }
    let t = Instant::now();
    let o = cmd.output().unwrap();
    Run {
        seconds: t.elapsed().as_secs_f64(),
        code: o.status.code(),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr),
    }
}

/// Rows of a CSV as header-keyed maps.
fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let mut lines = text.lines();
    let Some(head) = lines.next() else { return Vec::new() };
    let keys: Vec<&str> = head.split(',').collect();
    lines
        .map(|l| keys.iter().map(|k| k.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn range(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

fn random_density(grid: &Arc<Grid>, rng: &mut Rng) -> GridDensity {
    let c: Vec<f64> = (0..grid.dim()).map(|_| range(rng, -1.0, 1.0)).collect();
    let s = range(rng, 0.4, 1.2);
    let vals = (0..grid.len())
        .map(|i| {
            let r2: f64 = grid.node(i).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * s * s)).exp() + 1e-3
        })
        .collect();
    GridDensity::normalized(grid.clone(), vals).unwrap()
}

fn squared() -> LossModel {
    LossModel::ExpectedParam(ParametricLoss::SquaredError)
}

fn nn(outer: OuterLoss) -> LossModel {
    LossModel::NeuralNet(NeuralNet {
        activation: Activation::Tanh,
        outer,
        features: 1,
    })
}

fn nn_problem(nodes: usize) -> GibbsProblem {
    let mut cfg = GibbsConfig::new(1.0, 1.0, 2.0, Regularizer::new(0.3, 3).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = nodes;
    GibbsProblem::new(nn(OuterLoss::Quadratic), cfg).unwrap()
}

fn nn_data() -> DataMeasure {
    let pts = [(-1.2, -0.6), (-0.3, -0.1), (0.5, 0.35), (1.4, 0.7)]
        .iter()
        .map(|&(x, y)| DataPoint::new(vec![x], y).unwrap())
        .collect();
    DataMeasure::empirical(pts).unwrap()
}

fn scalar_data(ys: &[f64]) -> DataMeasure {
    DataMeasure::empirical(ys.iter().map(|&y| DataPoint::scalar(y)).collect()).unwrap()
}

fn ep_gibbs(beta: f64, nodes: usize) -> GibbsProblem {
    let mut cfg = GibbsConfig::new(beta, 1.0, 4.0, Regularizer::new(0.05, 3).unwrap()).unwrap();
    cfg.grid.nodes_per_axis = nodes;
    GibbsProblem::new(squared(), cfg).unwrap()
}

fn criterion_1(out: &Path, runs: &BTreeMap<String, Run>) -> Verdict {
    let rows = read_csv(&out.join("gaussian_oracle.csv"));
    let mut worst: f64 = 0.0;
    let mut seen = Vec::new();
    for r in &rows {
        let z = (num(r, "estimate") - num(r, "oracle")).abs() / num(r, "stderr");
        worst = worst.max(z);
        seen.push((r["route"].clone(), num(r, "n") as usize, num(r, "replicates") as usize));
    }
    let mut want = Vec::new();
    for n in [5, 10, 20, 50] {
        for route in ["direct", "resampled"] {
            want.push((route.to_string(), n, 20_000));
        }
    }
    let secs = runs["gaussian_oracle"].seconds;
    Verdict {
        id: 1,
        name: "Gaussian oracle reproduction",
        pass: seen == want && worst <= 3.0 && secs <= 120.0,
        detail: format!("max |estimate − 2σ̃²/n| / stderr = {worst:.2} (≤ 3), runtime {secs:.1} s (≤ 120)"),
    }
}

fn criterion_2() -> Verdict {
    let tr = Trainer::GibbsGrid(ep_gibbs(1.0, 129));
    let two = vec![(DataPoint::scalar(0.0), 0.5), (DataPoint::scalar(1.0), 0.5)];
    let three = vec![
        (DataPoint::scalar(-1.0), 0.2),
        (DataPoint::scalar(0.5), 0.5),
        (DataPoint::scalar(2.0), 0.3),
    ];
    let a = enumerate_exact_gen(&tr, &two, &squared(), 2).unwrap();
    let b = enumerate_exact_gen(&tr, &three, &squared(), 2).unwrap();
    let (da, db) = ((a.wge - a.wge_resampled).abs(), (b.wge - b.wge_resampled).abs());
    Verdict {
        id: 2,
        name: "Resampling identity by enumeration",
        pass: da <= 1e-12 && db <= 1e-12,
        detail: format!("two-point gap {da:.2e}, three-point gap {db:.2e} (≤ 1e-12)"),
    }
}

fn criterion_3() -> Verdict {
    let mut rng = replicate_rng(303, 0);
    let g2 = Arc::new(Grid::uniform(2, 17, 3.0).unwrap());
    let g1 = Arc::new(Grid::uniform(1, 65, 3.0).unwrap());
    let cases: [(&str, LossModel, &Arc<Grid>, usize, f64); 4] = [
        ("nn quadratic", nn(OuterLoss::Quadratic), &g2, 16, 1e-6),
        ("nn logcosh", nn(OuterLoss::LogCosh), &g2, 16, 1e-6),
        ("expected param", squared(), &g1, 16, 1e-6),
        ("nn quadratic 4-node", nn(OuterLoss::Quadratic), &g2, 4, 1e-10),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, grid, nodes, tol) in cases {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let m = random_density(grid, &mut rng);
            let m2 = random_density(grid, &mut rng);
            let x = if grid.dim() == 2 { vec![range(&mut rng, -2.0, 2.0)] } else { vec![] };
            let z = DataPoint::new(x, range(&mut rng, -1.0, 1.0)).unwrap();
            let r = check_linear_derivative(&PointLoss { model: &model, z: &z }, &m, &m2, nodes).unwrap();
            worst = worst.max(r);
        }
        pass &= worst <= tol;
        parts.push(format!("{name} {worst:.1e} (≤ {tol:.0e})"));
    }
    Verdict {
        id: 3,
        name: "Linear derivative identity",
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_4() -> Verdict {
    let pb = nn_problem(33);
    let nu = nn_data();
    let sol = pb.solve(&nu).unwrap();
    let map_gap = pb.gibbs_map(&sol.measure(), &nu).unwrap().sup_distance(&sol.density).unwrap();
    let residual = sol.residual.max(map_gap);

    let mut ep = GibbsProblem::new(
        squared(),
        GibbsConfig::new(1.3, 0.9, 2.0, Regularizer::new(0.4, 1).unwrap()).unwrap(),
    )
    .unwrap();
    ep.options.damping = 1.0;
    let iters = ep.solve(&scalar_data(&[0.2, -0.7, 1.1])).unwrap().iterations;

    let mut rng = replicate_rng(404, 0);
    let init = random_density(pb.grid(), &mut rng);
    let other = pb.solve_with(&nu, &init, &pb.options).unwrap();
    let sup = other.density.sup_distance(&sol.density).unwrap();

    let mut slack = f64::NEG_INFINITY;
    for beta in [0.5, 1.0, 1.4] {
        let mp = GibbsProblem::new(squared(), GibbsConfig::new(beta, 1.0, 4.0, Regularizer::new(0.1, 3).unwrap()).unwrap())
            .unwrap();
        let d = scalar_data(&[0.5, -1.5, 2.0, 0.1]);
        let s = mp.solve(&d).unwrap();
        for tilt in [1.0, mp.config().temperature()] {
            let (lhs, rhs) = mp.moment_bound(&s, &d, tilt).unwrap();
            slack = slack.max(lhs - rhs);
        }
    }
    Verdict {
        id: 4,
        name: "Gibbs fixed point",
        pass: residual <= 1e-8 && iters == 1 && sup <= 1e-6 && slack <= 1e-6,
        detail: format!(
            "residual {residual:.1e} (≤ 1e-8), α = 1 iterations {iters} (= 1), init sup gap {sup:.1e} (≤ 1e-6), moment bound excess {slack:.2e} (≤ 1e-6)"
        ),
    }
}

fn criterion_5() -> Verdict {
    let ep = GibbsProblem::new(
        squared(),
        GibbsConfig::new(0.8, 1.0, 2.0, Regularizer::new(0.5, 1).unwrap()).unwrap(),
    )
    .unwrap();
    let d = scalar_data(&[0.4, -0.9, 1.3]);
    let z = DataPoint::scalar(2.0);
    let e1 = finite_diff_dm_dnu(&ep, &d, &z, 1e-4)
        .unwrap()
        .relative_l1(&dm_dnu(&ep, &d, &z).unwrap())
        .unwrap();

    let pb = nn_problem(21);
    let nu = nn_data();
    let z = DataPoint::new(vec![-0.4], 0.8).unwrap();
    let e2 = finite_diff_dm_dnu(&pb, &nu, &z, 1e-3)
        .unwrap()
        .relative_l1(&dm_dnu(&pb, &nu, &z).unwrap())
        .unwrap();

    let pb = nn_problem(15);
    let sol = pb.solve(&nu).unwrap();
    let ds = DerivativeSolver::new(&pb, &nu, &sol).unwrap();
    let v = ds.ds_dnu(&[DataPoint::new(vec![1.5], 0.0).unwrap()]).unwrap().remove(0);
    let dens = ds.density_from(&v).unwrap();
    let mut rng = replicate_rng(505, 0);
    let mut cov: f64 = 0.0;
    for _ in 0..20 {
        let (a, b, c) = (range(&mut rng, -1.0, 1.0), range(&mut rng, -1.0, 1.0), range(&mut rng, 0.1, 2.0));
        let (lhs, rhs) = covariance_form(&pb, &sol.density, &v, &dens, |t| (a * t[0] + b * t[1]).sin() * c);
        cov = cov.max((lhs - rhs).abs());
    }
    Verdict {
        id: 5,
        name: "δm/δν correctness",
        pass: e1 <= 1e-3 && e2 <= 1e-2 && cov <= 1e-8,
        detail: format!(
            "expected param rel L1 {e1:.1e} (≤ 1e-3), NN 2-D rel L1 {e2:.1e} (≤ 1e-2), covariance gap {cov:.1e} (≤ 1e-8)"
        ),
    }
}

fn criterion_6() -> Verdict {
    let tr = Trainer::GibbsGrid(ep_gibbs(1.0, 129));
    let pop = PopulationModel::gaussian(0.5, 1.0).unwrap();
    let model = squared();
    let s = Setup::new(&tr, &pop, &model);
    let mut agree = 0;
    for seed in 0..10 {
        let d = wge_direct(&s, 5, 100, 600 + seed).unwrap();
        let h = wge_representation(&s, 5, 100, 600 + seed).unwrap();
        agree += usize::from(d.overlaps(&h, 2.0));
    }
    Verdict {
        id: 6,
        name: "Representation consistency",
        pass: agree >= 9,
        detail: format!("{agree}/10 seeded runs with overlapping 2·stderr intervals (≥ 9)"),
    }
}

fn criterion_7(out: &Path, runs: &BTreeMap<String, Run>) -> Verdict {
    let rows = read_csv(&out.join("gibbs_sweep.csv"));
    let ns: std::collections::BTreeSet<usize> = rows.iter().map(|r| num(r, "n") as usize).collect();
    let count = |route: &str| rows.iter().filter(|r| r["route"] == route).count();
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| r["holds"] != "true")
        .map(|r| format!("{}@{}", r["route"], r["n"]))
        .collect();
    let complete = ns.into_iter().collect::<Vec<_>>() == [5, 10, 20, 50]
        && ["direct", "resampled", "lge", "lge_upper", "convex_lower"].iter().all(|r| count(r) == 4);
    Verdict {
        id: 7,
        name: "Bound dominance",
        pass: complete && failing.is_empty() && runs["gibbs_sweep"].code == Some(0),
        detail: format!(
            "{} bound rows over n ∈ {{5, 10, 20, 50}}, failing: [{}], exit {:?}",
            rows.len(),
            failing.join(" "),
            runs["gibbs_sweep"].code
        ),
    }
}

fn slope(out: &Path, stem: &str, route: &str) -> Option<f64> {
    read_csv(&out.join(format!("{stem}_rate.csv")))
        .iter()
        .find(|r| r["route"] == route && r["used_n"] == "5 10 20 40 80")
        .map(|r| num(r, "slope"))
}

fn criterion_8(out: &Path) -> Verdict {
    let g = slope(out, "gaussian_rate", "direct");
    let b = slope(out, "gibbs_rate", "direct");
    let pass = g.is_some_and(|s| (-1.15..=-0.85).contains(&s)) && b.is_some_and(|s| s <= -0.7);
    Verdict {
        id: 8,
        name: "Rate check",
        pass,
        detail: format!(
            "explicit Gaussian slope {} (in [−1.15, −0.85]), grid Gibbs slope {} (≤ −0.7)",
            g.map_or("missing".into(), |s| format!("{s:.3}")),
            b.map_or("missing".into(), |s| format!("{s:.3}"))
        ),
    }
}

fn sci(v: Option<f64>) -> String {
    v.map_or("missing".into(), |x| format!("{x:.2e}"))
}

fn criterion_9(out: &Path) -> Verdict {
    let spread = |stem: &str| {
        let rows = read_csv(&out.join(format!("{stem}.csv")));
        let ns: Vec<usize> = rows.iter().map(|r| num(r, "n") as usize).collect();
        let v: Vec<f64> = rows.iter().map(|r| num(r, "scaled_bound")).collect();
        (ns == [16, 64, 256]).then(|| mfgen::experiments::relative_spread(&v))
    };
    let (a, b) = (spread("bounds_n14"), spread("bounds_n16"));
    Verdict {
        id: 9,
        name: "β-scheduling",
        pass: a.is_some_and(|s| s < 0.1) && b.is_some_and(|s| s < 0.1),
        detail: format!(
            "n^(1/2)·bound spread {} (< 0.1), n^(2/3)·squared bound spread {} (< 0.1) over n ∈ {{16, 64, 256}}",
            sci(a),
            sci(b)
        ),
    }
}

fn criterion_10(out: &Path, runs: &BTreeMap<String, Run>) -> Verdict {
    let rows = read_csv(&out.join("mfld_vs_grid.csv"));
    let ok = rows.iter().filter(|r| r["within_3se"] == "true").count();
    let z: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2}", (num(r, "grid") - num(r, "particles")).abs() / num(r, "stderr")))
        .collect();
    let secs = runs["mfld_vs_grid"].seconds;
    Verdict {
        id: 10,
        name: "Langevin vs grid",
        pass: rows.len() == 2 && ok == rows.len() && secs <= 60.0,
        detail: format!("|grid − particles| / stderr = [{}] (≤ 3), runtime {secs:.1} s (≤ 60)", z.join(", ")),
    }
}

fn criterion_11(first: &Path, second: &Path, stems: &[String]) -> Verdict {
    let mut names: Vec<String> = std::fs::read_dir(first)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut other: Vec<String> = std::fs::read_dir(second)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    other.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(first.join(n)).ok() != std::fs::read(second.join(n)).ok())
        .collect();
    Verdict {
        id: 11,
        name: "Determinism",
        pass: names == other && differing.is_empty() && names.len() >= stems.len(),
        detail: format!(
            "{} files from {} configs, second run with 3 worker threads, {} differ",
            names.len(),
            stems.len(),
            differing.len()
        ),
    }
}

#[test]
fn acceptance() {
    let stems = config_stems();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut runs = BTreeMap::new();
    for s in &stems {
        let r = run_config(s, first.path(), None);
        println!("run {s}: exit {:?} in {:.1} s: {}", r.code, r.seconds, r.stdout.trim());
        runs.insert(s.clone(), r);
    }
    let verdicts = vec![
        criterion_1(first.path(), &runs),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(first.path(), &runs),
        criterion_8(first.path()),
        criterion_9(first.path()),
        criterion_10(first.path(), &runs),
        {
            for s in &stems {
                run_config(s, second.path(), Some(3));
            }
            criterion_11(first.path(), second.path(), &stems)
        },
    ];
    // Written to the stderr handle directly so the lines survive libtest output capture.
    let mut err = std::io::stderr().lock();
    writeln!(err).unwrap();
    for v in &verdicts {
        writeln!(
            err,
            "criterion {:>2} {}: {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        )
        .unwrap();
    }
    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
