//! Gauss rules and a radial truncation search.

use alloc::vec::Vec;
use core::f64::consts::PI;

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Abscissae.
    pub nodes: Vec<f64>,
    /// Weights, same length as `nodes`.
    pub weights: Vec<f64>,
}

impl Rule {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the rule has no nodes.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i f(x_i)`, summed in node order.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule on `[0, 1]` with `n` nodes.
///
/// Exact for polynomials of degree `2n − 1`.
///
/// ```
/// let r = mfgen_core::quadrature::gauss_legendre_unit(4);
/// let v = r.integrate(|x| x.powi(7));
/// assert!((v - 0.125).abs() < 1e-15);
/// ```
pub fn gauss_legendre_unit(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Rule { nodes, weights }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Hermite rule for the standard normal law: `Σ w_i f(x_i) ≈ E[f(X)]`, `X ~ N(0,1)`.
///
/// Weights sum to one; exact for polynomials of degree `2n − 1`.
pub fn gauss_hermite_normal(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Hermite rule needs at least one node");
    // Orthonormal physicists' recurrence, Newton on each root.
    let pim4 = libm::pow(PI, -0.25);
    let nf = n as f64;
    let mut roots = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -1.0 / 6.0),
            1 => z - 1.14 * libm::pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * roots[0],
            3 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
            }
            pp = libm::sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        roots[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let sqrt2 = libm::sqrt(2.0);
    let sqrtpi = libm::sqrt(PI);
    for i in 0..m {
        nodes[i] = -roots[i] * sqrt2;
        nodes[n - 1 - i] = roots[i] * sqrt2;
        weights[i] = w[i] / sqrtpi;
        weights[n - 1 - i] = w[i] / sqrtpi;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Smallest radius `R` such that the radial tail mass beyond `R` is at most `tol`
/// for the density `exp(log_density(r))` on `R^dim` (radial profile only).
pub fn radial_tail_radius(log_density: impl Fn(f64) -> f64, dim: usize, tol: f64) -> f64 {
    assert!(dim >= 1);
    let lf = |r: f64| {
        let base = log_density(r);
        if r > 0.0 {
            base + (dim as f64 - 1.0) * libm::log(r)
        } else if dim == 1 {
            base
        } else {
            f64::NEG_INFINITY
        }
    };
    // Outer scan limit: log radial density 60 nats below its running max.
    let mut hi = 1.0;
    loop {
        let probe = 2048;
        let mut peak = f64::NEG_INFINITY;
        for k in 0..=probe {
            peak = peak.max(lf(hi * k as f64 / probe as f64));
        }
        if lf(hi) < peak - 60.0 && lf(2.0 * hi) < peak - 60.0 {
            break;
        }
        hi *= 2.0;
        if hi > 1e8 {
            return hi;
        }
    }
    let steps = 40_000;
    let dr = hi / steps as f64;
    let vals: Vec<f64> = (0..=steps).map(|k| lf(k as f64 * dr)).collect();
    let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass: Vec<f64> = vals.iter().map(|&v| libm::exp(v - peak)).collect();
    let total: f64 = mass.iter().sum();
    let mut tail = 0.0;
    for k in (0..=steps).rev() {
        tail += mass[k];
        if tail > tol * total {
            return ((k + 1) as f64 * dr).min(hi);
        }
    }
    dr
}
