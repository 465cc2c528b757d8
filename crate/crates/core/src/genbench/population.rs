use crate::losses::{LossModel, NeuralNet};
use crate::measures::{DataMeasure, DataPoint, ParamMeasure};
use crate::quadrature::gauss_hermite_normal;
use crate::rng::{normal, replicate_rng, uniform};
use crate::{error::invalid, Error, Result};
use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

const HERMITE_NODES: usize = 40;
const TEACHER_NODES: usize = 24;
const MOMENT_MC_SAMPLES: u64 = 200_000;

/// `E[(1 + ‖Z‖²)^k]` with its Monte Carlo standard error (zero when computed by quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    /// Value.
    pub value: f64,
    /// Standard error.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Gaussian { mean: f64, sd: f64 },
    Discrete { cdf: Vec<f64> },
    Teacher {
        net: NeuralNet,
        teacher: ParamMeasure,
        noise_sd: f64,
    },
}

/// Data distribution `ν_pop` with a seeded sampler and a moment oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    kind: Kind,
    quadrature: Option<DataMeasure>,
    moments: [Moment; 9],
}

impl PopulationModel {
    /// Scalar `Z ~ N(mean, sd²)`; `x` is empty and `y = Z`.
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(invalid("Gaussian population needs finite mean and sd > 0"));
        }
        let rule = gauss_hermite_normal(HERMITE_NODES);
        let atoms = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| (DataPoint::scalar(mean + sd * x), w))
            .collect();
        let quad = renormalized(atoms)?;
        Ok(Self::with_quadrature(Kind::Gaussian { mean, sd }, quad))
    }

    /// Finite data space with the given probabilities.
    pub fn discrete(atoms: Vec<(DataPoint, f64)>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.1 >= 0.0)) {
            return Err(invalid("probabilities must be nonnegative"));
        }
        let quad = DataMeasure::from_atoms(atoms, false)?;
        let mut acc = 0.0;
        let cdf = quad
            .atoms()
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        Ok(Self::with_quadrature(Kind::Discrete { cdf }, quad))
    }

    /// Teacher-student regression: `x ~ N(0, I_q)`, `y = Φ(m̄, x) + noise_sd·ε`.
    ///
    /// Quadrature (tensor Gauss–Hermite) is used for `q ≤ 2`; otherwise moments are
    /// estimated by Monte Carlo and population risks use fresh batches.
    pub fn teacher(net: NeuralNet, teacher: ParamMeasure, noise_sd: f64) -> Result<Self> {
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(invalid("noise sd must be finite and ≥ 0"));
        }
        if teacher.dim() != 1 + net.features {
            return Err(Error::Incompatible("teacher dimension mismatch".into()));
        }
        let kind = Kind::Teacher {
            net,
            teacher,
            noise_sd,
        };
        if net.features <= 2 {
            let rule = gauss_hermite_normal(TEACHER_NODES);
            let q = net.features;
            let noise_axes = if noise_sd > 0.0 { 1 } else { 0 };
            let axes = q + noise_axes;
            let total = TEACHER_NODES.pow(axes as u32);
            let mut atoms = Vec::with_capacity(total);
            let teacher_m = match &kind {
                Kind::Teacher { teacher, .. } => teacher,
                _ => unreachable!(),
            };
            let model = LossModel::NeuralNet(net);
            let mut idx = alloc::vec![0usize; axes];
            for _ in 0..total {
                let x: Vec<f64> = idx[..q].iter().map(|&k| rule.nodes[k]).collect();
                let mut w: f64 = idx.iter().map(|&k| rule.weights[k]).product();
                if axes == 0 {
                    w = 1.0;
                }
                let mut y = model.predict(teacher_m, &x)?;
                if noise_axes == 1 {
                    y += noise_sd * rule.nodes[idx[q]];
                }
                atoms.push((DataPoint::new(x, y)?, w));
                for d in (0..axes).rev() {
                    idx[d] += 1;
                    if idx[d] < TEACHER_NODES {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            let quad = renormalized(atoms)?;
            Ok(Self::with_quadrature(kind, quad))
        } else {
            let mut pop = Self {
                kind,
                quadrature: None,
                moments: [Moment {
                    value: f64::NAN,
                    stderr: 0.0,
                }; 9],
            };
            pop.moments = pop.monte_carlo_moments()?;
            Ok(pop)
        }
    }

    fn with_quadrature(kind: Kind, quad: DataMeasure) -> Self {
        let moments = core::array::from_fn(|k| Moment {
            value: quad
                .atoms()
                .iter()
                .map(|(z, w)| w * libm::pow(1.0 + z.norm_sq(), k as f64))
                .sum(),
            stderr: 0.0,
        });
        Self {
            kind,
            quadrature: Some(quad),
            moments,
        }
    }

    fn monte_carlo_moments(&self) -> Result<[Moment; 9]> {
        let mut rng = replicate_rng(0x6d6f_6d65_6e74, 0);
        let mut sum = [0.0f64; 9];
        let mut sq = [0.0f64; 9];
        for _ in 0..MOMENT_MC_SAMPLES {
            let z = self.sample(&mut rng)?;
            let b = 1.0 + z.norm_sq();
            let mut v = 1.0;
            for k in 0..9 {
                sum[k] += v;
                sq[k] += v * v;
                v *= b;
            }
        }
        let n = MOMENT_MC_SAMPLES as f64;
        Ok(core::array::from_fn(|k| {
            let mean = sum[k] / n;
            let var = (sq[k] / n - mean * mean).max(0.0) * n / (n - 1.0);
            Moment {
                value: mean,
                stderr: libm::sqrt(var / n),
            }
        }))
    }

    /// One draw.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<DataPoint> {
        match &self.kind {
            Kind::Gaussian { mean, sd } => Ok(DataPoint::scalar(mean + sd * normal(rng))),
            Kind::Discrete { cdf } => {
                let u = uniform(rng) * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                Ok(self.quadrature.as_ref().map(|q| q.point(i).clone()).unwrap_or_else(|| {
                    unreachable!("discrete populations always carry their atoms")
                }))
            }
            Kind::Teacher {
                net,
                teacher,
                noise_sd,
            } => {
                let x: Vec<f64> = (0..net.features).map(|_| normal(rng)).collect();
                let mut y = LossModel::NeuralNet(*net).predict(teacher, &x)?;
                if *noise_sd > 0.0 {
                    y += noise_sd * normal(rng);
                }
                DataPoint::new(x, y)
            }
        }
    }

    /// `n` draws.
    pub fn sample_n<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<DataPoint>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Quadrature measure standing in for `ν_pop`, when one exists.
    pub fn quadrature(&self) -> Option<&DataMeasure> {
        self.quadrature.as_ref()
    }

    /// `E[(1 + ‖Z‖²)^k]` for `k ≤ 8`.
    pub fn moment(&self, k: usize) -> Result<Moment> {
        self.moments
            .get(k)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("moment order {k} exceeds 8")))
    }

    /// Exact mean and variance of `y` for the scalar Gaussian population.
    pub fn gaussian_parameters(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Gaussian { mean, sd } => Some((mean, sd)),
            _ => None,
        }
    }

    /// `R(m, ν_pop)`: by quadrature when available, else the mean over `batch`.
    pub fn risk(&self, model: &LossModel, m: &ParamMeasure, batch: &[DataPoint]) -> Result<f64> {
        match &self.quadrature {
            Some(q) => model.risk(m, q),
            None => {
                if batch.is_empty() {
                    return Err(invalid("population risk needs a Monte Carlo batch"));
                }
                model.risk(m, &DataMeasure::empirical(batch.to_vec())?)
            }
        }
    }

    /// `ν_pop` as an atomic measure: the quadrature, or the batch.
    pub fn as_measure(&self, batch: &[DataPoint]) -> Result<DataMeasure> {
        match &self.quadrature {
            Some(q) => Ok(q.clone()),
            None => DataMeasure::empirical(batch.to_vec()),
        }
    }
}

fn renormalized(mut atoms: Vec<(DataPoint, f64)>) -> Result<DataMeasure> {
    let s: f64 = atoms.iter().map(|a| a.1).sum();
    for a in &mut atoms {
        a.1 /= s;
    }
    DataMeasure::from_atoms(atoms, false)
}
