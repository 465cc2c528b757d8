use super::GenEstimate;
use crate::{error::invalid, Error, Result};
use alloc::vec::Vec;

/// Least-squares fit of `log|value| = intercept + slope·log n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Fitted exponent.
    pub slope: f64,
    /// Fitted log-constant.
    pub intercept: f64,
    /// Coefficient of determination.
    pub r2: f64,
    /// Indices of the points used.
    pub used: Vec<usize>,
    /// Indices dropped because `|value| ≤ 2·stderr`.
    pub excluded: Vec<usize>,
}

/// Fits the decay rate of `|value|` in `n`, skipping estimates indistinguishable from zero.
pub fn rate_fit(ns: &[usize], estimates: &[GenEstimate]) -> Result<RateFit> {
    if ns.len() != estimates.len() {
        return Err(invalid("one estimate per n is required"));
    }
    let mut distinct: Vec<usize> = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || ns.contains(&0) {
        return Err(Error::TooFewPoints(distinct.len()));
    }
    let (used, excluded): (Vec<usize>, Vec<usize>) = (0..ns.len())
        .partition(|&i| {
            let e = &estimates[i];
            e.value.abs() > 2.0 * e.stderr && e.value != 0.0 && e.value.is_finite()
        });
    let mut kept: Vec<usize> = used.iter().map(|&i| ns[i]).collect();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() < 3 {
        return Err(Error::TooFewPoints(kept.len()));
    }
    let xs: Vec<f64> = used.iter().map(|&i| libm::log(ns[i] as f64)).collect();
    let ys: Vec<f64> = used.iter().map(|&i| libm::log(estimates[i].value.abs())).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        used,
        excluded,
    })
}
