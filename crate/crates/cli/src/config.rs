//! TOML experiment configuration and its conversion into core types.

use anyhow::{bail, Context, Result};
use mfgen_core::genbench::{PopulationModel, ScheduleMode, Trainer};
use mfgen_core::gibbs::{GibbsConfig, GibbsProblem, MfldOptions, Regularizer, SolverOptions};
use mfgen_core::losses::{Activation, LossModel, NeuralNet, OuterLoss, ParametricLoss};
use mfgen_core::measures::{DataPoint, Grid, GridDensity, ParamMeasure};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

/// Experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Verify,
    GibbsSolve,
    GenSweep,
    Bounds,
    MfldVsGrid,
    GaussianOracle,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::GibbsSolve => "gibbs-solve",
            Self::GenSweep => "gen-sweep",
            Self::Bounds => "bounds",
            Self::MfldVsGrid => "mfld-vs-grid",
            Self::GaussianOracle => "gaussian-oracle",
        }
    }
}

/// One experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Used in file names and the `experiment_id` column; defaults to the file stem.
    pub id: Option<String>,
    #[serde(default)]
    pub model: ModelBlock,
    pub gibbs: Option<GibbsBlock>,
    pub population: Option<PopulationBlock>,
    pub trainer: Option<TrainerBlock>,
    pub sweep: Option<SweepBlock>,
    pub bounds: Option<BoundsBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    LeastSquares,
    NeuralNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Relu,
    Tanh,
    Sigmoid,
    Heaviside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterKind {
    Quadratic,
    LogCosh,
    ProductMargin,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub loss: LossKind,
    pub activation: Option<ActivationKind>,
    pub outer: Option<OuterKind>,
    pub features: Option<usize>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            loss: LossKind::SquaredError,
            activation: None,
            outer: None,
            features: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsBlock {
    pub beta: f64,
    pub sigma: f64,
    pub p: f64,
    pub kappa: f64,
    pub q: Option<u32>,
    pub radius: Option<f64>,
    pub nodes: Option<usize>,
    pub tail_tol: Option<f64>,
    pub damping: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Gaussian,
    Discrete,
    Teacher,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    #[serde(default)]
    pub x: Vec<f64>,
    pub y: f64,
    /// Equal weights when every atom omits it.
    pub prob: Option<f64>,
}

/// A parameter measure written in a config.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    PointMass { theta: Vec<f64> },
    /// `∝ exp(−‖θ − center‖²/(2 width²))` on the ball `‖θ − center‖ < radius`, zero outside.
    Bump { center: Vec<f64>, width: f64, radius: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationBlock {
    pub distribution: Distribution,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub atoms: Option<Vec<AtomSpec>>,
    pub teacher: Option<MeasureSpec>,
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    GibbsGrid,
    ExplicitGaussian,
    Constant,
    Mfld,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerBlock {
    pub kind: TrainerKind,
    pub noise_sd: Option<f64>,
    pub measure: Option<MeasureSpec>,
    pub particles: Option<usize>,
    pub step: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    Direct,
    Resampled,
    Representation,
    Lge,
    LgeUpper,
    ConvexLower,
}

impl RouteName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Resampled => "resampled",
            Self::Representation => "representation",
            Self::Lge => "lge",
            Self::LgeUpper => "lge_upper",
            Self::ConvexLower => "convex_lower",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub n: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    pub routes: Option<Vec<RouteName>>,
    pub batch_factor: Option<usize>,
    pub lambda_nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    WgeN14,
    LgeN16,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub mode: ModeName,
    pub beta0: f64,
    pub reference: MeasureSpec,
}

impl BoundsBlock {
    pub fn schedule(&self) -> ScheduleMode {
        match self.mode {
            ModeName::WgeN14 => ScheduleMode::WgeN14,
            ModeName::LgeN16 => ScheduleMode::LgeN16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_dir() -> String {
    "results".into()
}

impl ExperimentConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if cfg.id.is_none() {
            cfg.id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    /// Parses and validates config text.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment_id(&self) -> &str {
        self.id.as_deref().unwrap_or(self.experiment.as_str())
    }

    fn validate(&self) -> Result<()> {
        if let Some(id) = &self.id {
            if id.is_empty() || id.contains(['/', '\\', ',']) {
                bail!("id: must be non-empty without '/', '\\' or ','");
            }
        }
        if let Some(s) = &self.sweep {
            if s.n.is_empty() {
                bail!("sweep.n: must list at least one sample size");
            }
            if s.n[0] == 0 {
                bail!("sweep.n: sample sizes must be ≥ 1");
            }
            if s.n.windows(2).any(|w| w[0] >= w[1]) {
                bail!("sweep.n: must be strictly increasing");
            }
            if s.replicates < 2 {
                bail!("sweep.replicates: must be ≥ 2");
            }
            if s.batch_factor == Some(0) {
                bail!("sweep.batch_factor: must be ≥ 1");
            }
            if s.lambda_nodes == Some(0) {
                bail!("sweep.lambda_nodes: must be ≥ 1");
            }
        }
        let need = |ok: bool, block: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                bail!("[{block}]: required by experiment = \"{}\"", self.experiment.as_str())
            }
        };
        match self.experiment {
            ExperimentKind::Verify => {}
            ExperimentKind::GibbsSolve => {
                need(self.gibbs.is_some(), "gibbs")?;
                need(self.population.is_some(), "population")?;
            }
            ExperimentKind::GenSweep => {
                need(self.population.is_some(), "population")?;
                need(self.sweep.is_some(), "sweep")?;
                need(self.trainer.is_some(), "trainer")?;
            }
            ExperimentKind::GaussianOracle => {
                need(self.population.is_some(), "population")?;
                need(self.sweep.is_some(), "sweep")?;
                if self.population.as_ref().unwrap().distribution != Distribution::Gaussian {
                    bail!("population.distribution: gaussian-oracle needs \"gaussian\"");
                }
                if let Some(t) = &self.trainer {
                    if t.kind != TrainerKind::ExplicitGaussian {
                        bail!("trainer.kind: gaussian-oracle needs \"explicit-gaussian\"");
                    }
                }
            }
            ExperimentKind::Bounds => {
                need(self.gibbs.is_some(), "gibbs")?;
                need(self.population.is_some(), "population")?;
                need(self.sweep.is_some(), "sweep")?;
                need(self.bounds.is_some(), "bounds")?;
            }
            ExperimentKind::MfldVsGrid => {
                need(self.gibbs.is_some(), "gibbs")?;
                need(self.population.is_some(), "population")?;
                need(self.trainer.is_some(), "trainer")?;
                if self.trainer.as_ref().unwrap().kind != TrainerKind::Mfld {
                    bail!("trainer.kind: mfld-vs-grid needs \"mfld\"");
                }
            }
        }
        Ok(())
    }

    pub fn loss_model(&self) -> Result<LossModel> {
        let m = &self.model;
        let nn_only = [
            (m.activation.is_some(), "activation"),
            (m.outer.is_some(), "outer"),
            (m.features.is_some(), "features"),
        ];
        Ok(match m.loss {
            LossKind::SquaredError | LossKind::LeastSquares => {
                if let Some((_, f)) = nn_only.iter().find(|(set, _)| *set) {
                    bail!("model.{f}: only valid with loss = \"neural-net\"");
                }
                LossModel::ExpectedParam(if m.loss == LossKind::SquaredError {
                    ParametricLoss::SquaredError
                } else {
                    ParametricLoss::LeastSquares
                })
            }
            LossKind::NeuralNet => {
                let features = m.features.context("model.features: required for neural-net")?;
                if features == 0 {
                    bail!("model.features: must be ≥ 1");
                }
                LossModel::NeuralNet(NeuralNet {
                    activation: match m.activation.context("model.activation: required for neural-net")? {
                        ActivationKind::Relu => Activation::Relu,
                        ActivationKind::Tanh => Activation::Tanh,
                        ActivationKind::Sigmoid => Activation::Sigmoid,
                        ActivationKind::Heaviside => Activation::Heaviside,
                    },
                    outer: match m.outer.context("model.outer: required for neural-net")? {
                        OuterKind::Quadratic => OuterLoss::Quadratic,
                        OuterKind::LogCosh => OuterLoss::LogCosh,
                        OuterKind::ProductMargin => OuterLoss::ProductMargin,
                    },
                    features,
                })
            }
        })
    }

    pub fn gibbs_problem(&self) -> Result<GibbsProblem> {
        let g = self.gibbs.as_ref().context("[gibbs]: missing")?;
        let q = g.q.unwrap_or_else(|| Regularizer::default_degree(g.p));
        let reg = Regularizer::new(g.kappa, q).context("gibbs.kappa / gibbs.q")?;
        let mut cfg = GibbsConfig::new(g.beta, g.sigma, g.p, reg).context("gibbs.beta / gibbs.sigma / gibbs.p")?;
        if let Some(n) = g.nodes {
            cfg.grid.nodes_per_axis = n;
        }
        cfg.grid.radius = g.radius;
        if let Some(t) = g.tail_tol {
            cfg.grid.tail_tol = t;
        }
        cfg.validate().context("gibbs.nodes / gibbs.radius / gibbs.tail_tol")?;
        let mut pb = GibbsProblem::new(self.loss_model()?, cfg).context("[gibbs]")?;
        let d = SolverOptions::default();
        pb.options = SolverOptions {
            damping: g.damping.unwrap_or(d.damping),
            tol: g.tol.unwrap_or(d.tol),
            max_iter: g.max_iter.unwrap_or(d.max_iter),
        };
        if !(pb.options.damping > 0.0 && pb.options.damping <= 1.0) {
            bail!("gibbs.damping: must lie in (0, 1]");
        }
        if !(pb.options.tol > 0.0) {
            bail!("gibbs.tol: must be positive");
        }
        Ok(pb)
    }

    /// Population model; grid-based teacher measures live on `grid`.
    pub fn population(&self, grid: Option<&Arc<Grid>>) -> Result<PopulationModel> {
        let p = self.population.as_ref().context("[population]: missing")?;
        match p.distribution {
            Distribution::Gaussian => {
                let mean = p.mean.unwrap_or(0.0);
                let sd = p.sd.context("population.sd: required for gaussian")?;
                PopulationModel::gaussian(mean, sd).context("population.mean / population.sd")
            }
            Distribution::Discrete => {
                let atoms = p.atoms.as_ref().context("population.atoms: required for discrete")?;
                if atoms.is_empty() {
                    bail!("population.atoms: must not be empty");
                }
                let given = atoms.iter().filter(|a| a.prob.is_some()).count();
                if given != 0 && given != atoms.len() {
                    bail!("population.atoms: give prob for every atom or for none");
                }
                let eq = 1.0 / atoms.len() as f64;
                let list = atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let z = DataPoint::new(a.x.clone(), a.y).with_context(|| format!("population.atoms[{i}]"))?;
                        Ok((z, a.prob.unwrap_or(eq)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                PopulationModel::discrete(list).context("population.atoms")
            }
            Distribution::Teacher => {
                let net = match self.loss_model()? {
                    LossModel::NeuralNet(net) => net,
                    _ => bail!("population.distribution: teacher needs model.loss = \"neural-net\""),
                };
                let spec = p.teacher.as_ref().context("population.teacher: required for teacher")?;
                let m = spec.build(grid).context("population.teacher")?;
                PopulationModel::teacher(net, m, p.noise_sd.unwrap_or(0.0)).context("population.teacher / population.noise_sd")
            }
        }
    }

    /// Trainer for gen-sweep, gaussian-oracle and mfld-vs-grid.
    pub fn trainer(&self) -> Result<Trainer> {
        let Some(t) = &self.trainer else {
            let sd = self.population.as_ref().and_then(|p| p.sd).context("population.sd: required")?;
            return Ok(Trainer::ExplicitGaussianMean { noise_sd: sd });
        };
        Ok(match t.kind {
            TrainerKind::GibbsGrid => Trainer::GibbsGrid(self.gibbs_problem()?),
            TrainerKind::ExplicitGaussian => {
                let sd = t
                    .noise_sd
                    .or_else(|| self.population.as_ref().and_then(|p| p.sd))
                    .context("trainer.noise_sd: required")?;
                if !(sd > 0.0 && sd.is_finite()) {
                    bail!("trainer.noise_sd: must be positive");
                }
                Trainer::ExplicitGaussianMean { noise_sd: sd }
            }
            TrainerKind::Constant => {
                let spec = t.measure.as_ref().context("trainer.measure: required for constant")?;
                let grid = match &self.gibbs {
                    Some(_) => Some(self.gibbs_problem()?.grid().clone()),
                    None => None,
                };
                Trainer::Constant(spec.build(grid.as_ref()).context("trainer.measure")?)
            }
            TrainerKind::Mfld => Trainer::Mfld {
                problem: self.gibbs_problem()?,
                options: MfldOptions {
                    particles: t.particles.context("trainer.particles: required for mfld")?,
                    step: t.step.context("trainer.step: required for mfld")?,
                    steps: t.steps.context("trainer.steps: required for mfld")?,
                    seed: t.seed.unwrap_or(0),
                },
            },
        })
    }
}

impl MeasureSpec {
    pub fn build(&self, grid: Option<&Arc<Grid>>) -> Result<ParamMeasure> {
        match self {
            Self::PointMass { theta } => Ok(ParamMeasure::point_mass(theta)?),
            Self::Bump { center, width, radius } => {
                let grid = grid.context("bump: needs a [gibbs] block for its grid")?;
                if center.len() != grid.dim() {
                    bail!("center: has {} coordinates, the grid has {}", center.len(), grid.dim());
                }
                if !(*width > 0.0 && *radius > 0.0) {
                    bail!("width / radius: must be positive");
                }
                let vals = (0..grid.len())
                    .map(|i| {
                        let r2: f64 = grid.node(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                        if r2 < radius * radius {
                            (-r2 / (2.0 * width * width)).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Ok(ParamMeasure::Grid(GridDensity::normalized(grid.clone(), vals)?))
            }
        }
    }
}
