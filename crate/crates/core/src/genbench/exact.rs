use super::trainer::Trainer;
use crate::losses::LossModel;
use crate::measures::{DataMeasure, DataPoint, ParamMeasure};
use crate::{error::invalid, par, Error, Result};
use alloc::vec::Vec;

const MAX_TERMS: f64 = 1e6;

/// Exact expectations over every dataset of size `n` drawn from a finite data space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactGen {
    /// `E[R(m(ν_n), ν_pop) − R(m(ν_n), ν_n)]`.
    pub wge: f64,
    /// `E[ℓ(m(ν_n), Z̄₁) − ℓ(m(ν_{n,(1)}), Z̄₁)]`.
    pub wge_resampled: f64,
    /// `E[∫ δℓ/δm(m(ν_{n,(1)}), Z̄₁, θ) m(ν_n)(dθ)]`.
    pub convex_lower: f64,
}

/// Enumerates all `|S|ⁿ` datasets and all `Z̄₁ ∈ S`; the trainer must be deterministic.
pub fn enumerate_exact_gen(
    trainer: &Trainer,
    data_space: &[(DataPoint, f64)],
    model: &LossModel,
    n: usize,
) -> Result<ExactGen> {
    if n == 0 || n > 6 {
        return Err(invalid("enumeration supports 1 ≤ n ≤ 6"));
    }
    if !trainer.is_deterministic() {
        return Err(Error::Incompatible("enumeration needs a deterministic trainer".into()));
    }
    let pop = DataMeasure::from_atoms(data_space.to_vec(), false)?;
    let s = pop.len();
    let terms = libm::pow(s as f64, (n + 1) as f64);
    if terms > MAX_TERMS {
        return Err(Error::EnumerationTooLarge { terms });
    }
    let count = s.pow(n as u32);
    let stride = s.pow(n as u32 - 1);
    let digits = |mut k: usize| -> Vec<usize> {
        let mut d = alloc::vec![0; n];
        for slot in d.iter_mut().rev() {
            *slot = k % s;
            k /= s;
        }
        d
    };
    let trained: Vec<Result<ParamMeasure>> = par::map_indexed(count, |k| {
        let data = digits(k).iter().map(|&i| pop.point(i).clone()).collect();
        trainer.train(&DataMeasure::empirical(data)?, n, 0)
    });
    let trained: Vec<ParamMeasure> = trained.into_iter().collect::<Result<_>>()?;
    let losses: Vec<Result<Vec<f64>>> = par::map_indexed(count, |k| {
        (0..s).map(|j| model.loss_value(&trained[k], pop.point(j))).collect()
    });
    let losses: Vec<Vec<f64>> = losses.into_iter().collect::<Result<_>>()?;
    let lowers: Vec<Result<Vec<f64>>> = par::map_indexed(count, |k| {
        let first = k / stride;
        (0..s)
            .map(|j| {
                let swapped = k - first * stride + j * stride;
                let lin = model.linearize(&trained[swapped], pop.point(j))?;
                trained[k].integrate(|t| lin.dm(t))
            })
            .collect()
    });
    let lowers: Vec<Vec<f64>> = lowers.into_iter().collect::<Result<_>>()?;

    let probs: Vec<f64> = pop.atoms().iter().map(|a| a.1).collect();
    let (mut wge, mut res, mut low) = (0.0, 0.0, 0.0);
    for k in 0..count {
        let d = digits(k);
        let pd: f64 = d.iter().map(|&i| probs[i]).product();
        let pop_risk: f64 = (0..s).map(|j| probs[j] * losses[k][j]).sum();
        let emp_risk: f64 = d.iter().map(|&i| losses[k][i]).sum::<f64>() / n as f64;
        wge += pd * (pop_risk - emp_risk);
        let swapped_base = k - d[0] * stride;
        for j in 0..s {
            let w = pd * probs[j];
            res += w * (losses[k][j] - losses[swapped_base + j * stride][j]);
            low += w * lowers[k][j];
        }
    }
    Ok(ExactGen {
        wge,
        wge_resampled: res,
        convex_lower: low,
    })
}
