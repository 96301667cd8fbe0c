//! Learned residual closures for truncated reduced models.
//!
//! A truncated Galerkin model misses the interaction with the discarded
//! modes. The residual `ℜ̃ = (u_t, Φ) − ℜ` is measured on the snapshots and
//! regressed on the model right-hand side `ℜ` by a small network.

mod elm;
mod narx;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use elm::{elm_predict, elm_train, ElmConfig, ElmModel};
pub use narx::{narx_closed_loop, narx_open_loop, narx_predict, narx_splits, narx_train, NarxConfig, NarxModel, NarxReport};

use crate::error::{Error, Result};
use crate::fom::SnapshotEnsemble;
use crate::galerkin::{eval_rhs_closed, GalerkinOperators, ViscosityModelSpec};
use crate::pod::{project_ensemble, PodBasis};
use crate::scalar::Real;

/// Residual regression data, one column per snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualDataset<T> {
    pub times: Vec<f64>,
    /// `[ℜ]_S`: Galerkin right-hand side at the projected coefficients.
    pub inputs: Vec<Vec<T>>,
    /// `[ℜ̃]_S = (u_t, Φ) − [ℜ]_S`.
    pub targets: Vec<Vec<T>>,
}

impl<T: Real> ResidualDataset<T> {
    pub fn new(times: Vec<f64>, inputs: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self> {
        if inputs.len() != times.len() || targets.len() != times.len() {
            return Err(Error::dim("dataset columns not aligned with times"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("dataset times must increase"));
        }
        if let Some(first) = inputs.first() {
            let r = first.len();
            if inputs.iter().chain(&targets).any(|c| c.len() != r) {
                return Err(Error::dim("input and target columns differ in length"));
            }
        }
        Ok(ResidualDataset { times, inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// RMSE of the targets against the zero predictor.
    pub fn zero_rmse(&self) -> f64 {
        rmse_between(&self.targets, None)
    }
}

/// Root mean square over all entries of `a − b` (`b = 0` when absent).
pub(crate) fn rmse_between<T: Real>(a: &[Vec<T>], b: Option<&[Vec<T>]>) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (j, col) in a.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            let d = x.as_f64() - b.map_or(0.0, |b| b[j][i].as_f64());
            s += d * d;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Stencil width of [`coefficient_derivative`].
pub const DERIVATIVE_STENCIL: usize = 7;

/// Finite-difference weights for the first derivative at `x0` from nodes
/// `z` (Fornberg's recursion).
pub fn first_derivative_weights(z: &[f64], x0: f64) -> Vec<f64> {
    let n = z.len();
    let mut c = vec![[0.0f64; 2]; n];
    if n == 0 {
        return Vec::new();
    }
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = z[0] - x0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = z[i] - x0;
        for j in 0..i {
            let c3 = z[i] - z[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Time derivative of uniformly sampled coefficients by central
/// differences on a 7-point stencil (sixth order), shifted to one side near
/// the ends. Fewer samples shrink the stencil to what is available.
pub fn coefficient_derivative<T: Real>(times: &[f64], coeffs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = coeffs.len();
    if n < 3 || times.len() != n {
        return Err(Error::Degenerate(format!(
            "differentiation needs at least 3 aligned samples, got {n}"
        )));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) || !(h > 0.0) {
        return Err(Error::config("snapshot times must be uniformly spaced"));
    }
    let w = DERIVATIVE_STENCIL.min(n);
    let r = coeffs[0].len();
    let mut out = vec![vec![T::zero(); r]; n];
    for (j, o) in out.iter_mut().enumerate() {
        let s = j.saturating_sub(w / 2).min(n - w);
        let z: Vec<f64> = (s..s + w).map(|k| k as f64 - j as f64).collect();
        let wts: Vec<T> = first_derivative_weights(&z, 0.0).iter().map(|&c| T::lit(c / h)).collect();
        // weights sum to zero, so differencing against the centre value
        // keeps constants exact
        for (i, oi) in o.iter_mut().enumerate() {
            let a0 = coeffs[j][i];
            *oi = wts
                .iter()
                .zip(&coeffs[s..s + w])
                .fold(T::zero(), |acc, (&c, a)| acc + c * (a[i] - a0));
        }
    }
    Ok(out)
}

/// Residual dataset from a coefficient trajectory.
pub fn residual_dataset_from<T: Real>(
    times: &[f64],
    coeffs: &[Vec<T>],
    operators: &GalerkinOperators<T>,
    viscosity: &ViscosityModelSpec<T>,
) -> Result<ResidualDataset<T>> {
    let dadt = coefficient_derivative(times, coeffs)?;
    let mut inputs = Vec::with_capacity(coeffs.len());
    let mut targets = Vec::with_capacity(coeffs.len());
    for ((a, d), &t) in coeffs.iter().zip(&dadt).zip(times) {
        let (rhs, _) = eval_rhs_closed(operators, a, viscosity.a1_at(t)).map_err(|e| e.at_time(t))?;
        targets.push(d.iter().zip(&rhs).map(|(&x, &y)| x - y).collect());
        inputs.push(rhs);
    }
    ResidualDataset::new(times.to_vec(), inputs, targets)
}

/// Projects the ensemble onto the velocity basis and measures the residual
/// of the reduced model at every snapshot.
pub fn build_residual_dataset<T: Real>(
    ensemble: &SnapshotEnsemble<T>,
    velocity: &PodBasis<T>,
    operators: &GalerkinOperators<T>,
    viscosity: &ViscosityModelSpec<T>,
) -> Result<ResidualDataset<T>> {
    if velocity.rank() != operators.r {
        return Err(Error::Incompatible(format!(
            "basis rank {} but operators of rank {}",
            velocity.rank(),
            operators.r
        )));
    }
    let traj = project_ensemble(ensemble, velocity)?;
    residual_dataset_from(&traj.times, &traj.coefficients, operators, viscosity)
}

/// Which network a closure uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosureKind {
    Elm,
    Narx,
}

impl fmt::Display for ClosureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClosureKind::Elm => "elm",
            ClosureKind::Narx => "narx",
        })
    }
}

impl FromStr for ClosureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elm" => Ok(ClosureKind::Elm),
            "narx" => Ok(ClosureKind::Narx),
            _ => Err(Error::config(format!("unknown closure kind '{s}'"))),
        }
    }
}

/// A trained closure.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosureModel<T> {
    Elm(ElmModel<T>),
    Narx(NarxModel<T>),
}

impl<T: Real> ClosureModel<T> {
    pub fn kind(&self) -> ClosureKind {
        match self {
            ClosureModel::Elm(_) => ClosureKind::Elm,
            ClosureModel::Narx(_) => ClosureKind::Narx,
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            ClosureModel::Elm(m) => m.n_outputs,
            ClosureModel::Narx(m) => m.n_outputs,
        }
    }

    /// Training-set predictions, closed loop for NARX.
    pub fn predict_dataset(&self, data: &ResidualDataset<T>) -> Result<Vec<Vec<T>>> {
        match self {
            ClosureModel::Elm(m) => data.inputs.iter().map(|x| elm_predict(m, x)).collect(),
            ClosureModel::Narx(m) => narx_closed_loop(m, &data.inputs),
        }
    }
}

/// Per-feature affine map of `[min, max]` onto `[−1, 1]`; a constant
/// feature has zero width and maps to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMax<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Real> MinMax<T> {
    pub fn fit(columns: &[Vec<T>]) -> Result<Self> {
        let first = columns.first().ok_or_else(|| Error::Degenerate("no samples to normalize".into()))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for c in columns {
            for (i, &x) in c.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite("training sample".into()));
                }
                if x < min[i] {
                    min[i] = x;
                }
                if x > max[i] {
                    max[i] = x;
                }
            }
        }
        Ok(MinMax { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn zero_width(&self, i: usize) -> bool {
        !(self.max[i] > self.min[i])
    }

    pub fn normalize_into(&self, x: &[T], out: &mut [T]) {
        let two = T::lit(2.0);
        for i in 0..self.len() {
            out[i] = if self.zero_width(i) {
                T::zero()
            } else {
                two * (x[i] - self.min[i]) / (self.max[i] - self.min[i]) - T::one()
            };
        }
    }

    pub fn denormalize(&self, y: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        (0..self.len())
            .map(|i| {
                if self.zero_width(i) {
                    self.min[i]
                } else {
                    self.min[i] + (y[i] + T::one()) * half * (self.max[i] - self.min[i])
                }
            })
            .collect()
    }
}
