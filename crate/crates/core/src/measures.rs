//! Measures on the data space `Z = X × Y` and on the parameter space `Θ = R^d`.
//!
//! Data measures are weighted atoms. Parameter measures are either a density on a
//! fixed tensor grid or an equal-weight particle cloud. Both kinds carry a
//! `signed` flag: probability measures have total mass one, signed measures
//! (differences such as `δ_z − δ_z'` or measure derivatives) have total mass zero.

use crate::{error::invalid, Error, Result};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

const DATA_MASS_TOL: f64 = 1e-12;
const GRID_MASS_TOL: f64 = 1e-10;

/// A data point `z = (x, y)` with feature vector `x` and scalar target `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    /// Features (may be empty for scalar data).
    pub x: Vec<f64>,
    /// Target.
    pub y: f64,
}

impl DataPoint {
    /// Checked constructor; all coordinates must be finite.
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if let Some((i, &v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: v });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite { index: x.len(), value: y });
        }
        Ok(Self { x, y })
    }

    /// Scalar observation: no features, `y = z`.
    pub fn scalar(z: f64) -> Self {
        Self { x: Vec::new(), y: z }
    }

    /// `‖z‖² = ‖x‖² + y²`.
    pub fn norm_sq(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>() + self.y * self.y
    }
}

/// Weighted atomic measure on the data space.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMeasure {
    atoms: Vec<(DataPoint, f64)>,
    signed: bool,
}

impl DataMeasure {
    /// Empirical measure `(1/n) Σ δ_{z_i}`; duplicates stay separate atoms.
    ///
    /// ```
    /// use mfgen_core::measures::{DataMeasure, DataPoint};
    /// let nu = DataMeasure::empirical(vec![DataPoint::scalar(1.0), DataPoint::scalar(2.0)]).unwrap();
    /// assert_eq!(nu.integrate(|z| z.norm_sq()).unwrap(), 2.5);
    /// ```
    pub fn empirical(samples: Vec<DataPoint>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let w = 1.0 / samples.len() as f64;
        Ok(Self {
            atoms: samples.into_iter().map(|z| (z, w)).collect(),
            signed: false,
        })
    }

    /// Measure from explicit atoms; validates the mass constraint for the flag.
    pub fn from_atoms(atoms: Vec<(DataPoint, f64)>, signed: bool) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mass: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| !a.1.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite weight".into()));
        }
        if signed {
            if mass.abs() > DATA_MASS_TOL {
                return Err(Error::InvalidMeasure(format!("signed mass {mass:e} is not zero")));
            }
        } else {
            if atoms.iter().any(|a| a.1 < 0.0) {
                return Err(Error::InvalidMeasure("negative weight".into()));
            }
            if (mass - 1.0).abs() > DATA_MASS_TOL {
                return Err(Error::InvalidMeasure(format!("mass {mass} is not one")));
            }
        }
        Ok(Self { atoms, signed })
    }

    /// Signed measure `Σ δ_{plus_i} − Σ δ_{minus_i}`; both lists must have equal length.
    pub fn difference(plus: &[DataPoint], minus: &[DataPoint]) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(invalid("difference needs equally many positive and negative atoms"));
        }
        let atoms = plus
            .iter()
            .map(|z| (z.clone(), 1.0))
            .chain(minus.iter().map(|z| (z.clone(), -1.0)))
            .collect();
        Self::from_atoms(atoms, true)
    }

    /// Atoms with weights.
    pub fn atoms(&self) -> &[(DataPoint, f64)] {
        &self.atoms
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Always false for a constructed measure.
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Signed-measure flag.
    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Atom `i`.
    pub fn point(&self, i: usize) -> &DataPoint {
        &self.atoms[i].0
    }

    /// `Σ f(z_i) w_i`; fails on a non-finite `f` value.
    pub fn integrate(&self, mut f: impl FnMut(&DataPoint) -> f64) -> Result<f64> {
        let mut s = 0.0;
        for (i, (z, w)) in self.atoms.iter().enumerate() {
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
            s += v * w;
        }
        Ok(s)
    }

    /// Replaces the atoms at `indices` by `replacements`: `ν_n + (1/n) Σ (δ_{z̄_j} − δ_{z_{i_j}})`.
    pub fn resample(&self, indices: &[usize], replacements: &[DataPoint]) -> Result<Self> {
        if self.signed {
            return Err(Error::SignedMeasure);
        }
        let n = self.atoms.len();
        let w = 1.0 / n as f64;
        if self.atoms.iter().any(|a| (a.1 - w).abs() > DATA_MASS_TOL) {
            return Err(Error::InvalidMeasure("resampling needs equal weights".into()));
        }
        if indices.len() != replacements.len() || !(1..=2).contains(&indices.len()) {
            return Err(invalid("resample takes one or two index/replacement pairs"));
        }
        for (k, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if indices[..k].contains(&i) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        let mut atoms = self.atoms.clone();
        for (&i, z) in indices.iter().zip(replacements) {
            atoms[i].0 = z.clone();
        }
        Ok(Self { atoms, signed: false })
    }
}

/// Tensor-product grid on `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    nodes: Vec<f64>,
    cell_volumes: Vec<f64>,
    radius: f64,
    spacing: Option<f64>,
}

impl Grid {
    /// Uniform grid on `[−radius, radius]^dim` with `per_axis` nodes per axis and
    /// trapezoid cell volumes.
    pub fn uniform(dim: usize, per_axis: usize, radius: f64) -> Result<Self> {
        if dim == 0 || per_axis < 2 || !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("grid needs dim ≥ 1, ≥ 2 nodes per axis and a positive radius"));
        }
        let h = 2.0 * radius / (per_axis - 1) as f64;
        let axis: Vec<f64> = (0..per_axis).map(|k| -radius + k as f64 * h).collect();
        let aw: Vec<f64> = (0..per_axis)
            .map(|k| if k == 0 || k + 1 == per_axis { 0.5 * h } else { h })
            .collect();
        let total = per_axis.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total * dim);
        let mut cell_volumes = Vec::with_capacity(total);
        let mut idx = alloc::vec![0usize; dim];
        for _ in 0..total {
            let mut vol = 1.0;
            for &k in &idx {
                nodes.push(axis[k]);
                vol *= aw[k];
            }
            cell_volumes.push(vol);
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < per_axis {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Self {
            dim,
            nodes,
            cell_volumes,
            radius,
            spacing: Some(h),
        })
    }

    /// Grid from explicit nodes (flat, `dim` coordinates each) and volumes.
    pub fn from_nodes(dim: usize, nodes: Vec<f64>, cell_volumes: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * cell_volumes.len() || cell_volumes.is_empty() {
            return Err(invalid("node/volume shape mismatch"));
        }
        if cell_volumes.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("cell volumes must be positive"));
        }
        let radius = nodes.iter().fold(0.0f64, |r, v| r.max(v.abs()));
        Ok(Self {
            dim,
            nodes,
            cell_volumes,
            radius,
            spacing: None,
        })
    }

    /// Dimension of `Θ`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.cell_volumes.len()
    }

    /// Always false for a constructed grid.
    pub fn is_empty(&self) -> bool {
        self.cell_volumes.is_empty()
    }

    /// Node `i`.
    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    /// All nodes, flattened.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Cell volumes.
    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Half-width of the bounding box.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Node spacing of a uniform grid.
    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }
}

/// A density (or signed density) on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Arc<Grid>,
    values: Vec<f64>,
    signed: bool,
}

impl GridDensity {
    /// Probability density; must be nonnegative with unit mass.
    pub fn new(grid: Arc<Grid>, density: Vec<f64>) -> Result<Self> {
        check_len(&grid, &density)?;
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidMeasure("density must be finite and ≥ 0".into()));
        }
        let mass = weighted_sum(&grid, &density);
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidMeasure(format!("grid mass {mass} is not one")));
        }
        Ok(Self {
            grid,
            values: density,
            signed: false,
        })
    }

    /// Normalizes a nonnegative function on the grid to a probability density.
    pub fn normalized(grid: Arc<Grid>, mut unnormalized: Vec<f64>) -> Result<Self> {
        check_len(&grid, &unnormalized)?;
        if unnormalized.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidMeasure("density must be finite and ≥ 0".into()));
        }
        let mass = weighted_sum(&grid, &unnormalized);
        if !(mass > 0.0) {
            return Err(Error::Underflow);
        }
        for d in &mut unnormalized {
            *d /= mass;
        }
        Ok(Self {
            grid,
            values: unnormalized,
            signed: false,
        })
    }

    /// Normalizes `exp(log_values)` with a shift by the maximum.
    pub fn from_log(grid: Arc<Grid>, log_values: &[f64]) -> Result<Self> {
        check_len(&grid, log_values)?;
        let peak = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Underflow);
        }
        let w: Vec<f64> = log_values.iter().map(|&l| libm::exp(l - peak)).collect();
        Self::normalized(grid, w)
    }

    /// Signed density with zero total mass (relative to its L¹ scale).
    pub fn signed(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        if values.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidMeasure("signed density must be finite".into()));
        }
        let mass = weighted_sum(&grid, &values);
        let l1: f64 = values
            .iter()
            .zip(grid.cell_volumes())
            .map(|(v, w)| v.abs() * w)
            .sum();
        if mass.abs() > GRID_MASS_TOL * l1.max(1.0) {
            return Err(Error::InvalidMeasure(format!("signed mass {mass:e} is not zero")));
        }
        Ok(Self {
            grid,
            values,
            signed: true,
        })
    }

    /// Shared grid.
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Density values at the nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Signed flag.
    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Quadrature weights `density_i · vol_i`.
    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.cell_volumes())
            .map(|(d, v)| d * v)
            .collect()
    }

    /// Total mass `Σ density·vol`.
    pub fn total_mass(&self) -> f64 {
        weighted_sum(&self.grid, &self.values)
    }

    /// Signed measure of the node set selected by `in_set`.
    pub fn mass_of(&self, mut in_set: impl FnMut(&[f64]) -> bool) -> f64 {
        (0..self.grid.len())
            .filter(|&i| in_set(self.grid.node(i)))
            .map(|i| self.values[i] * self.grid.cell_volumes()[i])
            .sum()
    }

    /// `KL(self ‖ other)` by grid quadrature, with `0·log(0/·) = 0` and `+∞`
    /// when `self` carries mass where `other` underflows.
    pub fn kl(&self, other: &GridDensity) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        if self.signed || other.signed {
            return Err(Error::SignedMeasure);
        }
        let mut s = 0.0;
        for i in 0..self.values.len() {
            let p = self.values[i];
            if p == 0.0 {
                continue;
            }
            let q = other.values[i];
            if q < 1e-300 {
                if p > 1e-300 {
                    return Ok(f64::INFINITY);
                }
                continue;
            }
            s += p * libm::log(p / q) * self.grid.cell_volumes()[i];
        }
        Ok(s.max(0.0))
    }

    /// `‖self − other‖_∞` on the node values.
    pub fn sup_distance(&self, other: &GridDensity) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `self + λ(other − self)` without grid or flag checks.
    pub(crate) fn convex_combination_unchecked(&self, other: &GridDensity, lambda: f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + lambda * (b - a))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
            signed: self.signed,
        }
    }

    /// Relative L¹ error `∫|self − reference| / ∫|reference|`.
    pub fn relative_l1(&self, reference: &GridDensity) -> Result<f64> {
        same_grid(&self.grid, &reference.grid)?;
        let vols = self.grid.cell_volumes();
        let mut num = 0.0;
        let mut den = 0.0;
        for ((a, b), v) in self.values.iter().zip(&reference.values).zip(vols) {
            num += (a - b).abs() * v;
            den += b.abs() * v;
        }
        Ok(if den == 0.0 { num } else { num / den })
    }
}

/// Equal-weight particle cloud in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    dim: usize,
    points: Vec<f64>,
}

impl Particles {
    /// Particles from flat coordinates; must be nonempty and finite.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure("particle cloud must be nonempty".into()));
        }
        if let Some((i, &v)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index: i / dim, value: v });
        }
        Ok(Self { dim, points })
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Always false for a constructed cloud.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Particle `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Measure on the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamMeasure {
    /// Density on a grid.
    Grid(GridDensity),
    /// Equal-weight particles.
    Particles(Particles),
}

impl ParamMeasure {
    /// Dirac mass at `theta`, as a one-particle cloud.
    pub fn point_mass(theta: &[f64]) -> Result<Self> {
        Ok(Self::Particles(Particles::new(theta.len(), theta.to_vec())?))
    }

    /// Dimension of `Θ`.
    pub fn dim(&self) -> usize {
        match self {
            Self::Grid(g) => g.grid.dim(),
            Self::Particles(p) => p.dim,
        }
    }

    /// Number of support points.
    pub fn support_len(&self) -> usize {
        match self {
            Self::Grid(g) => g.grid.len(),
            Self::Particles(p) => p.len(),
        }
    }

    /// Support point `i`.
    #[inline]
    pub fn support_point(&self, i: usize) -> &[f64] {
        match self {
            Self::Grid(g) => g.grid.node(i),
            Self::Particles(p) => p.point(i),
        }
    }

    /// Quadrature weight of support point `i` (density·volume or `1/N`).
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Self::Grid(g) => g.masses(),
            Self::Particles(p) => alloc::vec![1.0 / p.len() as f64; p.len()],
        }
    }

    /// Signed flag.
    pub fn is_signed(&self) -> bool {
        matches!(self, Self::Grid(g) if g.signed)
    }

    /// Grid view, if any.
    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Self::Grid(g) => Some(g),
            Self::Particles(_) => None,
        }
    }

    /// `∫ f dm`; fails on a non-finite `f` value at a support point with nonzero weight.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        let w = self.weights();
        let mut s = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let v = f(self.support_point(i));
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
            s += v * wi;
        }
        Ok(s)
    }

    /// `E_m ‖θ‖^p`.
    ///
    /// ```
    /// use mfgen_core::measures::{ParamMeasure, Particles};
    /// let m = ParamMeasure::Particles(Particles::new(1, vec![1.0, -3.0]).unwrap());
    /// assert_eq!(m.moment(2.0), 5.0);
    /// ```
    pub fn moment(&self, p: f64) -> f64 {
        self.integrate(|t| libm::pow(norm_sq(t), 0.5 * p)).unwrap_or(f64::INFINITY)
    }

    /// Mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|k| self.integrate(|t| t[k]).unwrap_or(f64::NAN))
            .collect()
    }
}

/// Affine interpolation `μ₀ + λ(μ₁ − μ₀)` between two measures of the same kind.
pub trait ConvexCombination: Sized {
    /// Returns `μ₀ + λ(μ₁ − μ₀)`; `λ = 0` gives `self` and `λ = 1` gives `other` exactly.
    fn convex_combination(&self, other: &Self, lambda: f64) -> Result<Self>;
}

/// Free-function form of [`ConvexCombination::convex_combination`].
pub fn convex_combination<M: ConvexCombination>(mu0: &M, mu1: &M, lambda: f64) -> Result<M> {
    mu0.convex_combination(mu1, lambda)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(invalid("interpolation parameter must lie in [0, 1]"))
    }
}

impl ConvexCombination for DataMeasure {
    fn convex_combination(&self, other: &Self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if self.signed != other.signed {
            return Err(Error::InvalidMeasure("cannot merge signed and unsigned measures".into()));
        }
        if lambda == 0.0 {
            return Ok(self.clone());
        }
        if lambda == 1.0 {
            return Ok(other.clone());
        }
        let atoms = self
            .atoms
            .iter()
            .map(|(z, w)| (z.clone(), (1.0 - lambda) * w))
            .chain(other.atoms.iter().map(|(z, w)| (z.clone(), lambda * w)))
            .collect();
        Ok(Self {
            atoms,
            signed: self.signed,
        })
    }
}

impl ConvexCombination for GridDensity {
    fn convex_combination(&self, other: &Self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        same_grid(&self.grid, &other.grid)?;
        if self.signed != other.signed {
            return Err(Error::InvalidMeasure("cannot merge signed and unsigned densities".into()));
        }
        if lambda == 0.0 {
            return Ok(self.clone());
        }
        if lambda == 1.0 {
            return Ok(other.clone());
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + lambda * (b - a))
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            signed: self.signed,
        })
    }
}

impl ConvexCombination for ParamMeasure {
    fn convex_combination(&self, other: &Self, lambda: f64) -> Result<Self> {
        match (self, other) {
            (Self::Grid(a), Self::Grid(b)) => Ok(Self::Grid(a.convex_combination(b, lambda)?)),
            _ => {
                check_lambda(lambda)?;
                if lambda == 0.0 {
                    Ok(self.clone())
                } else if lambda == 1.0 {
                    Ok(other.clone())
                } else {
                    Err(Error::InvalidMeasure("interior interpolation needs two grid measures".into()))
                }
            }
        }
    }
}

/// `‖θ‖²`.
#[inline]
pub fn norm_sq(theta: &[f64]) -> f64 {
    theta.iter().map(|v| v * v).sum()
}

/// Errors unless the two grids are the same object or have identical nodes.
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::MismatchedGrids)
    }
}

fn check_len(grid: &Grid, v: &[f64]) -> Result<()> {
    if v.len() == grid.len() {
        Ok(())
    } else {
        Err(Error::MismatchedGrids)
    }
}

fn weighted_sum(grid: &Grid, v: &[f64]) -> f64 {
    v.iter().zip(grid.cell_volumes()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(v: f64) -> DataPoint {
        DataPoint::scalar(v)
    }

    #[test]
    fn empirical_weights() {
        assert_eq!(DataMeasure::empirical(vec![]), Err(Error::EmptyDataset));
        let nu = DataMeasure::empirical(vec![s(1.0)]).unwrap();
        assert_eq!(nu.atoms(), &[(s(1.0), 1.0)]);
        let nu = DataMeasure::empirical(vec![s(3.0), s(3.0)]).unwrap();
        assert_eq!(nu.len(), 2);
        assert_eq!(nu.integrate(|z| z.y).unwrap(), 3.0);
    }

    #[test]
    fn resample_examples() {
        let nu = DataMeasure::empirical(vec![s(1.0), s(2.0)]).unwrap();
        let r = nu.resample(&[0], &[s(9.0)]).unwrap();
        assert_eq!(r.atoms(), &[(s(9.0), 0.5), (s(2.0), 0.5)]);
        assert_eq!(nu.resample(&[0, 1], &[s(1.0), s(2.0)]).unwrap(), nu);
        assert_eq!(
            nu.resample(&[2], &[s(0.0)]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        );
        assert_eq!(nu.resample(&[1, 1], &[s(0.0), s(0.0)]), Err(Error::DuplicateIndex(1)));
        let nu3 = DataMeasure::empirical(vec![s(1.0), s(2.0), s(3.0)]).unwrap();
        let r = nu3.resample(&[0, 1], &[s(7.0), s(8.0)]).unwrap();
        let w = 1.0 / 3.0;
        assert_eq!(r.atoms(), &[(s(7.0), w), (s(8.0), w), (s(3.0), w)]);
    }

    #[test]
    fn signed_difference_integrates_constants_to_zero() {
        let d = DataMeasure::difference(&[s(1.0)], &[s(4.0)]).unwrap();
        assert!(d.is_signed());
        assert_eq!(d.integrate(|_| 1.0).unwrap(), 0.0);
        assert_eq!(d.integrate(|z| z.y).unwrap(), -3.0);
    }

    #[test]
    fn non_finite_integrand_rejected() {
        let nu = DataMeasure::empirical(vec![s(0.0)]).unwrap();
        assert!(matches!(nu.integrate(|_| f64::NAN), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn grid_moments_of_gaussian() {
        let g = Arc::new(Grid::uniform(1, 257, 10.0).unwrap());
        let logs: Vec<f64> = (0..g.len()).map(|i| -0.5 * g.node(i)[0].powi(2)).collect();
        let m = ParamMeasure::Grid(GridDensity::from_log(g, &logs).unwrap());
        assert!((m.moment(2.0) - 1.0).abs() < 1e-4);
        assert!((m.integrate(|_| 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_convex_endpoints_and_midpoint() {
        let g = Arc::new(Grid::uniform(1, 5, 1.0).unwrap());
        let a = GridDensity::normalized(g.clone(), vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        let b = GridDensity::normalized(g.clone(), vec![1.0; 5]).unwrap();
        assert_eq!(a.convex_combination(&b, 0.0).unwrap(), a);
        assert_eq!(a.convex_combination(&b, 1.0).unwrap(), b);
        let mid = a.convex_combination(&b, 0.5).unwrap();
        for i in 0..5 {
            assert_eq!(mid.values()[i], 0.5 * (a.values()[i] + b.values()[i]));
        }
        let other = Arc::new(Grid::uniform(1, 5, 2.0).unwrap());
        let c = GridDensity::normalized(other, vec![1.0; 5]).unwrap();
        assert_eq!(a.convex_combination(&c, 0.5), Err(Error::MismatchedGrids));
    }

    #[test]
    fn kl_support_violation_is_infinite() {
        let g = Arc::new(Grid::uniform(1, 3, 1.0).unwrap());
        let a = GridDensity::normalized(g.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        let b = GridDensity::normalized(g, vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(a.kl(&b).unwrap(), f64::INFINITY);
        assert!(b.kl(&a).unwrap().is_finite());
    }

    #[test]
    fn two_dim_grid_layout() {
        let g = Grid::uniform(2, 3, 1.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.node(0), &[-1.0, -1.0]);
        assert_eq!(g.node(1), &[-1.0, 0.0]);
        assert_eq!(g.node(8), &[1.0, 1.0]);
        let vol: f64 = g.cell_volumes().iter().sum();
        assert!((vol - 4.0).abs() < 1e-15);
    }
}
