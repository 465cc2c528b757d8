//! Losses `ℓ(m, z)` on parameter measures with first and second linear derivatives.
//!
//! Two families are implemented:
//! - the mean-field one-hidden-layer network, `ℓ(m,z) = ℓ_o(Φ(m,x), y)` with
//!   `Φ(m,x) = E_m[a·act(w·x)]` and `θ = (a, w)`;
//! - the expected parametric loss, `ℓ(m,z) = E_m[ℓ_p(θ,z)]`.
//!
//! Linear derivatives follow the zero-mean convention `∫ δℓ/δm(m,z,θ) m(dθ) = 0`.

use crate::measures::{norm_sq, DataMeasure, DataPoint, ParamMeasure};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// Hidden-unit activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, u)`.
    Relu,
    /// `tanh u`.
    Tanh,
    /// `1 / (1 + e^{−u})`.
    Sigmoid,
    /// `1{u ≥ 0}`.
    Heaviside,
}

impl Activation {
    /// `act(u)`.
    #[inline]
    pub fn value(self, u: f64) -> f64 {
        match self {
            Self::Relu => u.max(0.0),
            Self::Tanh => libm::tanh(u),
            Self::Sigmoid => sigmoid(u),
            Self::Heaviside => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `act′(u)`; `None` for the step function. ReLU uses `act′(0) = 0`.
    #[inline]
    pub fn derivative(self, u: f64) -> Option<f64> {
        match self {
            Self::Relu => Some(if u > 0.0 { 1.0 } else { 0.0 }),
            Self::Tanh => {
                let t = libm::tanh(u);
                Some(1.0 - t * t)
            }
            Self::Sigmoid => {
                let s = sigmoid(u);
                Some(s * (1.0 - s))
            }
            Self::Heaviside => None,
        }
    }

    /// Growth constant `L_φ` with `|act(u)| ≤ L_φ max(1, |u|)`.
    pub fn growth_constant(self) -> f64 {
        1.0
    }
}

/// Outer loss `ℓ_o(ŷ, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterLoss {
    /// `(ŷ − y)²`.
    Quadratic,
    /// `log cosh(ŷ − y)`.
    LogCosh,
    /// Logistic margin `log(1 + e^{−yŷ})`.
    ProductMargin,
}

/// Growth constants `L_ℓ, L_{ℓ,1}, L_{ℓ,2}` of an outer loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterConstants {
    /// `|ℓ_o| ≤ L_ℓ(1 + ŷ² + y²)`.
    pub value: f64,
    /// `|∂ℓ_o| ≤ L_{ℓ,1}(1 + |ŷ| + |y|)`.
    pub first: f64,
    /// `|∂²ℓ_o| ≤ L_{ℓ,2}`.
    pub second: f64,
}

impl OuterLoss {
    /// `ℓ_o(ŷ, y)`.
    #[inline]
    pub fn value(self, yhat: f64, y: f64) -> f64 {
        match self {
            Self::Quadratic => (yhat - y) * (yhat - y),
            Self::LogCosh => {
                let u = (yhat - y).abs();
                u + libm::log1p(libm::exp(-2.0 * u)) - core::f64::consts::LN_2
            }
            Self::ProductMargin => softplus(-y * yhat),
        }
    }

    /// `∂_ŷ ℓ_o`.
    #[inline]
    pub fn d1(self, yhat: f64, y: f64) -> f64 {
        match self {
            Self::Quadratic => 2.0 * (yhat - y),
            Self::LogCosh => libm::tanh(yhat - y),
            Self::ProductMargin => -y * sigmoid(-y * yhat),
        }
    }

    /// `∂²_ŷ ℓ_o`.
    #[inline]
    pub fn d2(self, yhat: f64, y: f64) -> f64 {
        match self {
            Self::Quadratic => 2.0,
            Self::LogCosh => {
                let t = libm::tanh(yhat - y);
                1.0 - t * t
            }
            Self::ProductMargin => {
                let s = sigmoid(y * yhat);
                y * y * s * (1.0 - s)
            }
        }
    }

    /// Analytic growth constants. For the margin loss `L_{ℓ,2} = 1/4` assumes labels in `[−1, 1]`.
    pub fn constants(self) -> OuterConstants {
        match self {
            Self::Quadratic => OuterConstants {
                value: 2.0,
                first: 2.0,
                second: 2.0,
            },
            Self::LogCosh => OuterConstants {
                value: 1.0,
                first: 1.0,
                second: 1.0,
            },
            Self::ProductMargin => OuterConstants {
                value: 1.0,
                first: 1.0,
                second: 0.25,
            },
        }
    }
}

/// Loss function signature `ℓ_p(θ, z)` for user-supplied parametric losses.
pub type ParamLossFn = fn(&[f64], &DataPoint) -> f64;
/// Gradient signature `∇_θ ℓ_p(θ, z)` written into the output slice.
pub type ParamGradFn = fn(&[f64], &DataPoint, &mut [f64]);

/// Per-parameter loss `ℓ_p(θ, z)` for the expected parametric family.
#[derive(Debug, Clone, Copy)]
pub enum ParametricLoss {
    /// `(θ − y)²` with `θ ∈ R`; mean estimation.
    SquaredError,
    /// `(y − a − b·x)²` with `θ = (a, b)` and scalar feature `x`.
    LeastSquares,
    /// Arbitrary loss with growth constant `m_p`.
    Custom {
        /// Dimension of `θ`.
        dim: usize,
        /// `ℓ_p`.
        value: ParamLossFn,
        /// `∇_θ ℓ_p`, needed only by the Langevin sampler.
        grad: Option<ParamGradFn>,
        /// `M_p` with `|ℓ_p(θ,z)| ≤ M_p(1 + ‖θ‖²)(1 + ‖z‖²)`.
        m_p: f64,
    },
}

impl PartialEq for ParametricLoss {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::SquaredError, Self::SquaredError) | (Self::LeastSquares, Self::LeastSquares) => {
                true
            }
            (
                Self::Custom { dim, value, m_p, .. },
                Self::Custom {
                    dim: d2,
                    value: v2,
                    m_p: m2,
                    ..
                },
            ) => dim == d2 && core::ptr::fn_addr_eq(*value, *v2) && m_p == m2,
            _ => false,
        }
    }
}

impl ParametricLoss {
    /// Dimension of `θ`.
    pub fn dim(&self) -> usize {
        match self {
            Self::SquaredError => 1,
            Self::LeastSquares => 2,
            Self::Custom { dim, .. } => *dim,
        }
    }

    /// `ℓ_p(θ, z)`.
    #[inline]
    pub fn value(&self, theta: &[f64], z: &DataPoint) -> f64 {
        match self {
            Self::SquaredError => {
                let r = theta[0] - z.y;
                r * r
            }
            Self::LeastSquares => {
                let r = z.y - theta[0] - theta[1] * z.x[0];
                r * r
            }
            Self::Custom { value, .. } => value(theta, z),
        }
    }

    /// `∇_θ ℓ_p(θ, z)`, if available.
    pub fn grad(&self, theta: &[f64], z: &DataPoint, out: &mut [f64]) -> Result<()> {
        match self {
            Self::SquaredError => out[0] = 2.0 * (theta[0] - z.y),
            Self::LeastSquares => {
                let r = z.y - theta[0] - theta[1] * z.x[0];
                out[0] = -2.0 * r;
                out[1] = -2.0 * r * z.x[0];
            }
            Self::Custom { grad: Some(g), .. } => g(theta, z, out),
            Self::Custom { grad: None, .. } => {
                return Err(Error::Incompatible("custom loss has no gradient".into()))
            }
        }
        Ok(())
    }

    /// `M_p`.
    pub fn growth_constant(&self) -> f64 {
        match self {
            Self::SquaredError => 2.0,
            Self::LeastSquares => 3.0,
            Self::Custom { m_p, .. } => *m_p,
        }
    }

    fn check_point(&self, z: &DataPoint) -> Result<()> {
        let need = match self {
            Self::SquaredError => 0,
            Self::LeastSquares => 1,
            Self::Custom { .. } => return Ok(()),
        };
        if z.x.len() == need {
            Ok(())
        } else {
            Err(Error::Incompatible(format!(
                "data point has {} features, loss expects {need}",
                z.x.len()
            )))
        }
    }
}

/// One-hidden-layer mean-field network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuralNet {
    /// Hidden activation.
    pub activation: Activation,
    /// Outer loss.
    pub outer: OuterLoss,
    /// Feature dimension `q`; `θ = (a, w) ∈ R^{1+q}`.
    pub features: usize,
}

impl NeuralNet {
    /// `φ(θ, x) = a·act(w·x)`.
    #[inline]
    pub fn unit(&self, theta: &[f64], x: &[f64]) -> f64 {
        theta[0] * self.activation.value(dot(&theta[1..], x))
    }
}

/// A loss functional on parameter measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossModel {
    /// Mean-field network loss.
    NeuralNet(NeuralNet),
    /// Expected parametric loss.
    ExpectedParam(ParametricLoss),
}

/// Per-`(m, z)` quantities from which `ℓ`, `δℓ/δm` and `δ²ℓ/δm²` are read off.
#[derive(Debug, Clone)]
pub struct Linearization<'a> {
    model: &'a LossModel,
    z: &'a DataPoint,
    value: f64,
    kind: LinKind,
}

#[derive(Debug, Clone, Copy)]
enum LinKind {
    Net { phi_bar: f64, d1: f64, d2: f64 },
    Param { mean: f64 },
}

impl Linearization<'_> {
    /// `ℓ(m, z)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `Φ(m, x)` for network losses.
    pub fn prediction(&self) -> Option<f64> {
        match self.kind {
            LinKind::Net { phi_bar, .. } => Some(phi_bar),
            LinKind::Param { .. } => None,
        }
    }

    /// `δℓ/δm(m, z, θ)`.
    #[inline]
    pub fn dm(&self, theta: &[f64]) -> f64 {
        match (self.model, self.kind) {
            (LossModel::NeuralNet(nn), LinKind::Net { phi_bar, d1, .. }) => {
                d1 * (nn.unit(theta, &self.z.x) - phi_bar)
            }
            (LossModel::ExpectedParam(p), LinKind::Param { mean }) => p.value(theta, self.z) - mean,
            _ => unreachable!("linearization built for its own model"),
        }
    }

    /// `δ²ℓ/δm²(m, z, θ, θ′)`.
    #[inline]
    pub fn d2m(&self, theta: &[f64], theta2: &[f64]) -> f64 {
        match (self.model, self.kind) {
            (LossModel::NeuralNet(nn), LinKind::Net { phi_bar, d2, .. }) => {
                d2 * (nn.unit(theta, &self.z.x) - phi_bar) * (nn.unit(theta2, &self.z.x) - phi_bar)
            }
            _ => 0.0,
        }
    }

    /// Centered unit `φ(θ,x) − Φ(m,x)` and `∂²ℓ_o`; the rank-one factors of `δ²ℓ/δm²`.
    pub fn second_factors(&self, theta: &[f64]) -> (f64, f64) {
        match (self.model, self.kind) {
            (LossModel::NeuralNet(nn), LinKind::Net { phi_bar, d2, .. }) => {
                (nn.unit(theta, &self.z.x) - phi_bar, d2)
            }
            _ => (0.0, 0.0),
        }
    }

    /// `∇_θ δℓ/δm(m, z, θ)`, added into `out` after scaling by `weight`.
    pub fn grad_dm_add(&self, theta: &[f64], weight: f64, out: &mut [f64]) -> Result<()> {
        match (self.model, self.kind) {
            (LossModel::NeuralNet(nn), LinKind::Net { d1, .. }) => {
                let x = &self.z.x;
                let u = dot(&theta[1..], x);
                let d = nn.activation.derivative(u).ok_or_else(|| {
                    Error::Incompatible("activation has no derivative in θ".into())
                })?;
                let s = weight * d1;
                out[0] += s * nn.activation.value(u);
                for k in 0..x.len() {
                    out[1 + k] += s * theta[0] * d * x[k];
                }
            }
            (LossModel::ExpectedParam(p), _) => {
                let mut g = alloc::vec![0.0; theta.len()];
                p.grad(theta, self.z, &mut g)?;
                for (o, gi) in out.iter_mut().zip(g) {
                    *o += weight * gi;
                }
            }
            _ => unreachable!("linearization built for its own model"),
        }
        Ok(())
    }
}

/// `δR/δm(m, ν, ·)` assembled from per-atom linearizations.
#[derive(Debug, Clone)]
pub struct RiskLinearization<'a> {
    parts: Vec<(Linearization<'a>, f64)>,
}

impl RiskLinearization<'_> {
    /// `R(m, ν)`.
    pub fn value(&self) -> f64 {
        self.parts.iter().map(|(l, w)| w * l.value()).sum()
    }

    /// `δR/δm(m, ν, θ) = ∫ δℓ/δm(m, z, θ) ν(dz)`.
    #[inline]
    pub fn dm(&self, theta: &[f64]) -> f64 {
        self.parts.iter().map(|(l, w)| w * l.dm(theta)).sum()
    }

    /// `δ²R/δm²(m, ν, θ, θ′)`.
    pub fn d2m(&self, theta: &[f64], theta2: &[f64]) -> f64 {
        self.parts.iter().map(|(l, w)| w * l.d2m(theta, theta2)).sum()
    }

    /// `∇_θ δR/δm(m, ν, θ)`.
    pub fn grad_dm(&self, theta: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (l, w) in &self.parts {
            l.grad_dm_add(theta, *w, out)?;
        }
        Ok(())
    }

    /// Per-atom linearizations and weights.
    pub fn parts(&self) -> &[(Linearization<'_>, f64)] {
        &self.parts
    }
}

impl LossModel {
    /// Dimension of `Θ`.
    pub fn param_dim(&self) -> usize {
        match self {
            Self::NeuralNet(nn) => 1 + nn.features,
            Self::ExpectedParam(p) => p.dim(),
        }
    }

    /// Degree of `θ ↦ g₁(m, θ)` growth used to pick the regularizer degree.
    pub fn envelope_degree(&self) -> u32 {
        match self {
            Self::NeuralNet(_) => 4,
            Self::ExpectedParam(_) => 2,
        }
    }

    fn check(&self, m: &ParamMeasure, z: &DataPoint) -> Result<()> {
        if m.dim() != self.param_dim() {
            return Err(Error::Incompatible(format!(
                "measure dimension {} differs from parameter dimension {}",
                m.dim(),
                self.param_dim()
            )));
        }
        if m.is_signed() {
            return Err(Error::SignedMeasure);
        }
        match self {
            Self::NeuralNet(nn) if z.x.len() != nn.features => Err(Error::Incompatible(format!(
                "data point has {} features, network expects {}",
                z.x.len(),
                nn.features
            ))),
            Self::ExpectedParam(p) => p.check_point(z),
            _ => Ok(()),
        }
    }

    /// Linearizes `ℓ(·, z)` at `m`.
    pub fn linearize<'a>(&'a self, m: &ParamMeasure, z: &'a DataPoint) -> Result<Linearization<'a>> {
        self.check(m, z)?;
        let (value, kind) = match self {
            Self::NeuralNet(nn) => {
                let phi_bar = m.integrate(|t| nn.unit(t, &z.x))?;
                let y = z.y;
                (
                    nn.outer.value(phi_bar, y),
                    LinKind::Net {
                        phi_bar,
                        d1: nn.outer.d1(phi_bar, y),
                        d2: nn.outer.d2(phi_bar, y),
                    },
                )
            }
            Self::ExpectedParam(p) => {
                let mean = m.integrate(|t| p.value(t, z))?;
                (mean, LinKind::Param { mean })
            }
        };
        Ok(Linearization {
            model: self,
            z,
            value,
            kind,
        })
    }

    /// Linearizes `R(·, ν)` at `m`; `ν` may be signed.
    pub fn linearize_risk<'a>(
        &'a self,
        m: &ParamMeasure,
        nu: &'a DataMeasure,
    ) -> Result<RiskLinearization<'a>> {
        let parts = nu
            .atoms()
            .iter()
            .map(|(z, w)| Ok((self.linearize(m, z)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RiskLinearization { parts })
    }

    /// `Φ(m, x)`; only for network losses.
    pub fn predict(&self, m: &ParamMeasure, x: &[f64]) -> Result<f64> {
        match self {
            Self::NeuralNet(nn) => {
                if x.len() != nn.features || m.dim() != self.param_dim() {
                    return Err(Error::Incompatible("feature dimension mismatch".into()));
                }
                m.integrate(|t| nn.unit(t, x))
            }
            Self::ExpectedParam(_) => Err(Error::Incompatible("prediction is defined for network losses only".into())),
        }
    }

    /// `ℓ(m, z)`.
    pub fn loss_value(&self, m: &ParamMeasure, z: &DataPoint) -> Result<f64> {
        Ok(self.linearize(m, z)?.value())
    }

    /// `δℓ/δm(m, z, θ)`.
    pub fn loss_dm(&self, m: &ParamMeasure, z: &DataPoint, theta: &[f64]) -> Result<f64> {
        Ok(self.linearize(m, z)?.dm(theta))
    }

    /// `δ²ℓ/δm²(m, z, θ, θ′)`.
    pub fn loss_d2m(
        &self,
        m: &ParamMeasure,
        z: &DataPoint,
        theta: &[f64],
        theta2: &[f64],
    ) -> Result<f64> {
        Ok(self.linearize(m, z)?.d2m(theta, theta2))
    }

    /// `R(m, ν) = ∫ ℓ(m, z) ν(dz)`; `ν` must be a probability measure.
    pub fn risk(&self, m: &ParamMeasure, nu: &DataMeasure) -> Result<f64> {
        if nu.is_signed() {
            return Err(Error::SignedMeasure);
        }
        let mut s = 0.0;
        for (z, w) in nu.atoms() {
            s += w * self.loss_value(m, z)?;
        }
        Ok(s)
    }

    /// Growth envelopes `(g(m), g₁(m, θ))`; `g₁` is returned when `θ` is given.
    pub fn growth_envelopes(&self, m: &ParamMeasure, theta: Option<&[f64]>) -> (f64, Option<f64>) {
        let m2 = m.moment(2.0);
        match self {
            Self::NeuralNet(nn) => {
                let c = nn.outer.constants();
                let lphi = nn.activation.growth_constant().max(1.0);
                let g = envelope_nn_g(c.value, lphi, m2);
                let g1 = theta.map(|t| envelope_nn_g1(c.first, lphi, norm_sq(t), m.moment(4.0)));
                (g, g1)
            }
            Self::ExpectedParam(p) => {
                let mp = p.growth_constant();
                let g = mp * (1.0 + m2);
                (g, theta.map(|t| mp * (2.0 + m2 + norm_sq(t))))
            }
        }
    }

    /// Envelope constant `C_θ` with `E_{m′}[g₁(m,θ)²]^{1/2} ≤ C_θ(1 + E_m‖θ‖^p + E_{m′}‖θ‖^p)`,
    /// and the smallest `p` for which that constant is valid.
    pub fn envelope_constant(&self) -> (f64, f64) {
        match self {
            Self::NeuralNet(nn) => {
                let lphi = nn.activation.growth_constant().max(1.0);
                let l1 = nn.outer.constants().first.max(1.0);
                (6.0 * 6.0 * l1 * lphi * (1.0 + lphi), 8.0)
            }
            Self::ExpectedParam(p) => (4.0 * p.growth_constant(), 4.0),
        }
    }
}

fn envelope_nn_g(l_value: f64, lphi: f64, m2: f64) -> f64 {
    let a = 1.0 + m2;
    2.0 * l_value.max(1.0) * lphi * lphi * a * a
}

fn envelope_nn_g1(l_first: f64, lphi: f64, t2: f64, m4: f64) -> f64 {
    6.0 * l_first.max(1.0) * lphi * (1.0 + lphi) * (4.0 + t2 * t2 + m4)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + libm::log1p(libm::exp(-u))
    } else {
        libm::log1p(libm::exp(u))
    }
}
