//! Proper orthogonal decomposition by the method of snapshots.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{weighted_dot, Variable};
use crate::fom::SnapshotEnsemble;
use crate::grid::{BoundaryLabel, StructuredGrid};
use crate::scalar::{lit, Real};

/// Quantity a basis describes. Velocity components share one stacked
/// basis; pressure and eddy viscosity are scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodVariable {
    Velocity,
    Pressure,
    EddyViscosity,
}

impl PodVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            PodVariable::Velocity => "velocity",
            PodVariable::Pressure => "pressure",
            PodVariable::EddyViscosity => "eddy_viscosity",
        }
    }
}

impl fmt::Display for PodVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PodVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity" | "u" => Ok(PodVariable::Velocity),
            "pressure" | "p" => Ok(PodVariable::Pressure),
            "eddy_viscosity" | "nu_t" => Ok(PodVariable::EddyViscosity),
            _ => Err(Error::config(format!("unknown POD variable '{s}'"))),
        }
    }
}

/// Boundary lift `Σ_i b_i g_i` for time-varying boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLift<T> {
    pub labels: Vec<BoundaryLabel>,
    /// One stacked field per label.
    pub functions: Vec<Vec<T>>,
    pub values: Vec<T>,
}

impl<T: Real> BoundaryLift<T> {
    pub fn new(labels: Vec<BoundaryLabel>, functions: Vec<Vec<T>>, values: Vec<T>, grid: &StructuredGrid<T>) -> Result<Self> {
        if labels.len() != functions.len() || labels.len() != values.len() {
            return Err(Error::dim("boundary lift needs one function and value per label"));
        }
        let expected = grid.boundary_labels();
        let mut sorted = labels.clone();
        sorted.sort();
        if sorted != expected {
            return Err(Error::dim(format!(
                "lift labels {labels:?} do not match grid boundaries {expected:?}"
            )));
        }
        Ok(BoundaryLift {
            labels,
            functions,
            values,
        })
    }

    fn add_to(&self, out: &mut [T]) -> Result<()> {
        for (g, &b) in self.functions.iter().zip(&self.values) {
            if g.len() != out.len() {
                return Err(Error::dim("boundary lift function length"));
            }
            for (o, &v) in out.iter_mut().zip(g) {
                *o += b * v;
            }
        }
        Ok(())
    }
}

/// Ensemble mean, orthonormal modes and the eigenvalue spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis<T> {
    pub variable: PodVariable,
    pub n_components: usize,
    /// Stacked temporal mean.
    pub mean: Vec<T>,
    /// Retained stacked modes, most energetic first.
    pub modes: Vec<Vec<T>>,
    /// All correlation eigenvalues, non-increasing, clamped at zero.
    pub eigenvalues: Vec<T>,
    /// Cell volumes of the inner product.
    pub weights: Vec<T>,
    pub lift: Option<BoundaryLift<T>>,
}

impl<T: Real> PodBasis<T> {
    #[inline]
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        weighted_dot(a, b, &self.weights)
    }

    /// Basis keeping only the first `r` modes.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r > self.rank() {
            return Err(Error::dim(format!("rank {r} exceeds available {}", self.rank())));
        }
        let mut b = self.clone();
        b.modes.truncate(r);
        Ok(b)
    }

    /// Retained-mode energy `Σ_{i≤r} λ_i`.
    pub fn retained_energy(&self) -> T {
        self.eigenvalues[..self.rank()].iter().fold(T::zero(), |a, &v| a + v)
    }
}

fn check_snapshots<T: Real>(snapshots: &[Vec<T>]) -> Result<usize> {
    let n = snapshots
        .first()
        .ok_or_else(|| Error::Degenerate("empty ensemble".into()))?
        .len();
    if snapshots.iter().any(|s| s.len() != n) {
        return Err(Error::dim("snapshots of different length"));
    }
    Ok(n)
}

/// Arithmetic temporal mean per entry.
pub fn mean_of<T: Real>(snapshots: &[Vec<T>]) -> Result<Vec<T>> {
    let n = check_snapshots(snapshots)?;
    let mut m = vec![T::zero(); n];
    for s in snapshots {
        for (a, &b) in m.iter_mut().zip(s) {
            *a += b;
        }
    }
    let inv = T::one() / T::count(snapshots.len());
    m.iter_mut().for_each(|v| *v *= inv);
    Ok(m)
}

/// Stacked snapshots of `var`.
pub fn snapshot_matrix<T: Real>(ensemble: &SnapshotEnsemble<T>, var: PodVariable) -> Result<Vec<Vec<T>>> {
    Ok(match var {
        PodVariable::Velocity => (0..ensemble.n_snapshots()).map(|j| ensemble.velocity_stacked(j)).collect(),
        PodVariable::Pressure => ensemble.snapshots(Variable::P)?.to_vec(),
        PodVariable::EddyViscosity => ensemble.snapshots(Variable::NuT)?.to_vec(),
    })
}

fn n_components<T: Real>(ensemble: &SnapshotEnsemble<T>, var: PodVariable) -> usize {
    match var {
        PodVariable::Velocity => ensemble.n_velocity(),
        _ => 1,
    }
}

/// Temporal mean of `var` over the ensemble.
pub fn compute_mean<T: Real>(ensemble: &SnapshotEnsemble<T>, var: PodVariable) -> Result<Vec<T>> {
    mean_of(&snapshot_matrix(ensemble, var)?)
}

/// POD of one ensemble variable; `max_rank` caps the retained rank.
pub fn pod_modes<T: Real>(ensemble: &SnapshotEnsemble<T>, var: PodVariable, max_rank: Option<usize>) -> Result<PodBasis<T>> {
    let grid = ensemble.grid()?;
    let snaps = snapshot_matrix(ensemble, var)?;
    pod_from_snapshots(var, n_components(ensemble, var), &snaps, grid.cell_volumes(), max_rank)
}

/// Method of snapshots on explicit data.
///
/// `C_jk = (1/M)(ω'_j, ω'_k)` is diagonalized; modes `Σ_j v_ij ω'_j` are
/// normalized, re-orthogonalized by two modified Gram–Schmidt passes and
/// signed so their largest-magnitude entry is positive. Modes with
/// `λ_i < 1e-12 λ_1`, at round-off level, or beyond `M - 1` are dropped.
pub fn pod_from_snapshots<T: Real>(
    variable: PodVariable,
    n_components: usize,
    snapshots: &[Vec<T>],
    weights: &[T],
    max_rank: Option<usize>,
) -> Result<PodBasis<T>> {
    let n = check_snapshots(snapshots)?;
    if n != n_components * weights.len() {
        return Err(Error::dim(format!(
            "snapshot length {n} does not match {n_components} x {} cells",
            weights.len()
        )));
    }
    let m = snapshots.len();
    let mean = mean_of(snapshots)?;
    let fluct: Vec<Vec<T>> = snapshots
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(&a, &b)| a - b).collect())
        .collect();
    let inv_m = T::one() / T::count(m);
    let mut c = DMatrix::<T>::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let v = weighted_dot(&fluct[j], &fluct[k], weights) * inv_m;
            c[(j, k)] = v;
            c[(k, j)] = v;
        }
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();

    let energy = snapshots
        .iter()
        .fold(T::zero(), |a, s| a + weighted_dot(s, s, weights))
        * inv_m;
    let roundoff = {
        let e = lit::<T>(100.0) * T::eps();
        e * e * energy
    };
    let lambda1 = eigenvalues.first().copied().unwrap_or(T::zero());
    let cutoff = (lit::<T>(1e-12) * lambda1).max(roundoff);
    let mut rank = eigenvalues.iter().take_while(|&&l| l > T::zero() && l >= cutoff).count();
    rank = rank.min(m.saturating_sub(1));
    if let Some(r) = max_rank {
        rank = rank.min(r);
    }

    let mut modes: Vec<Vec<T>> = Vec::with_capacity(rank);
    for &idx in order.iter().take(rank) {
        let v = eig.eigenvectors.column(idx);
        let mut phi = vec![T::zero(); n];
        for (j, f) in fluct.iter().enumerate() {
            let w = v[j];
            for (p, &x) in phi.iter_mut().zip(f) {
                *p += w * x;
            }
        }
        modes.push(phi);
    }
    orthonormalize(&mut modes, weights)?;
    for phi in &mut modes {
        let (mut best, mut val) = (T::zero(), T::zero());
        for &x in phi.iter() {
            if x.abs() > best {
                best = x.abs();
                val = x;
            }
        }
        if val < T::zero() {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PodBasis {
        variable,
        n_components,
        mean,
        modes,
        eigenvalues,
        weights: weights.to_vec(),
        lift: None,
    })
}

/// Two passes of weighted modified Gram–Schmidt.
fn orthonormalize<T: Real>(modes: &mut [Vec<T>], weights: &[T]) -> Result<()> {
    for _ in 0..2 {
        for i in 0..modes.len() {
            let (done, rest) = modes.split_at_mut(i);
            let phi = &mut rest[0];
            for q in done.iter() {
                let proj = weighted_dot(phi, q, weights);
                for (p, &x) in phi.iter_mut().zip(q) {
                    *p -= proj * x;
                }
            }
            let norm = weighted_dot(phi, phi, weights).sqrt();
            if !(norm > T::zero()) || !norm.is_finite() {
                return Err(Error::Degenerate(format!("mode {} has zero norm", i + 1)));
            }
            phi.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(())
}

/// Modal coefficients over time.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalTrajectory<T> {
    pub variable: PodVariable,
    pub times: Vec<f64>,
    /// `coefficients[j][i]` is `a_i(t_j)`.
    pub coefficients: Vec<Vec<T>>,
}

impl<T: Real> ModalTrajectory<T> {
    pub fn new(variable: PodVariable, times: Vec<f64>, coefficients: Vec<Vec<T>>) -> Result<Self> {
        if times.len() != coefficients.len() {
            return Err(Error::dim(format!(
                "{} times for {} coefficient vectors",
                times.len(),
                coefficients.len()
            )));
        }
        if let Some(r) = coefficients.first().map(|c| c.len()) {
            if coefficients.iter().any(|c| c.len() != r) {
                return Err(Error::dim("coefficient vectors of different rank"));
            }
        }
        Ok(ModalTrajectory {
            variable,
            times,
            coefficients,
        })
    }

    pub fn rank(&self) -> usize {
        self.coefficients.first().map_or(0, |c| c.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time series of mode `i`.
    pub fn mode(&self, i: usize) -> Vec<T> {
        self.coefficients.iter().map(|c| c[i]).collect()
    }

    /// Keeps the first `r` modes.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r > self.rank() {
            return Err(Error::dim(format!("rank {r} exceeds trajectory rank {}", self.rank())));
        }
        Ok(ModalTrajectory {
            variable: self.variable,
            times: self.times.clone(),
            coefficients: self.coefficients.iter().map(|c| c[..r].to_vec()).collect(),
        })
    }
}

/// `a_i = (ω - ω₀, φ_i)`.
pub fn project_coefficients<T: Real>(field: &[T], basis: &PodBasis<T>) -> Result<Vec<T>> {
    if field.len() != basis.len() {
        return Err(Error::dim(format!(
            "field of {} values, basis of {}",
            field.len(),
            basis.len()
        )));
    }
    let fluct: Vec<T> = field.iter().zip(&basis.mean).map(|(&a, &b)| a - b).collect();
    Ok(basis.modes.iter().map(|phi| basis.inner(&fluct, phi)).collect())
}

/// `ω₀ + Σ a_i φ_i` plus the boundary lift when present.
pub fn reconstruct<T: Real>(basis: &PodBasis<T>, coefficients: &[T]) -> Result<Vec<T>> {
    if coefficients.len() != basis.rank() {
        return Err(Error::dim(format!(
            "{} coefficients for rank {}",
            coefficients.len(),
            basis.rank()
        )));
    }
    let mut out = basis.mean.clone();
    for (phi, &a) in basis.modes.iter().zip(coefficients) {
        for (o, &p) in out.iter_mut().zip(phi) {
            *o += a * p;
        }
    }
    if let Some(lift) = &basis.lift {
        lift.add_to(&mut out)?;
    }
    Ok(out)
}

/// Projects every snapshot of the basis variable.
pub fn project_ensemble<T: Real>(ensemble: &SnapshotEnsemble<T>, basis: &PodBasis<T>) -> Result<ModalTrajectory<T>> {
    let snaps = snapshot_matrix(ensemble, basis.variable)?;
    let coefficients = snaps
        .iter()
        .map(|s| project_coefficients(s, basis))
        .collect::<Result<Vec<_>>>()?;
    ModalTrajectory::new(basis.variable, ensemble.times().to_vec(), coefficients)
}

/// Rule for picking a truncation rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCriterion {
    /// Smallest rank whose cumulative energy fraction reaches `η`.
    Energy(f64),
    /// Fixed rank, clamped to the available modes.
    Explicit(usize),
}

/// Energy fractions are relative to the retained spectrum, so `η = 1`
/// returns the full retained rank.
pub fn choose_rank<T: Real>(basis: &PodBasis<T>, criterion: RankCriterion) -> Result<usize> {
    match criterion {
        RankCriterion::Explicit(r) => Ok(r.min(basis.rank())),
        RankCriterion::Energy(eta) => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::config(format!("energy fraction {eta} outside (0, 1]")));
            }
            let total = basis.retained_energy().as_f64();
            if total <= 0.0 {
                return Ok(0);
            }
            let mut acc = T::zero();
            for (i, &l) in basis.eigenvalues[..basis.rank()].iter().enumerate() {
                acc += l;
                if acc.as_f64() / total >= eta {
                    return Ok(i + 1);
                }
            }
            Ok(basis.rank())
        }
    }
}
