use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{weighted_dot, Variable};
use crate::fom::SnapshotEnsemble;
use crate::pod::{mean_of, pod_from_snapshots, PodVariable};
use crate::scalar::Real;
use crate::spline::CubicSpline;

/// How the eddy viscosity enters the reduced model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscosityVariant {
    /// `ν_M + ν̄`, one number for all space and time.
    SpatioTemporalMean,
    /// `ν_M + ⟨ν_T⟩(x)`.
    TemporalMean,
    /// `ν_M + ⟨ν_T⟩(x) + a₁(t) φ₁(x)`.
    TemporalMeanPlusMode1,
}

impl ViscosityVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ViscosityVariant::SpatioTemporalMean => "spatio_temporal_mean",
            ViscosityVariant::TemporalMean => "temporal_mean",
            ViscosityVariant::TemporalMeanPlusMode1 => "temporal_mean_plus_mode1",
        }
    }
}

impl fmt::Display for ViscosityVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViscosityVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatio_temporal_mean" | "1" => Ok(ViscosityVariant::SpatioTemporalMean),
            "temporal_mean" | "2" => Ok(ViscosityVariant::TemporalMean),
            "temporal_mean_plus_mode1" | "3" => Ok(ViscosityVariant::TemporalMeanPlusMode1),
            _ => Err(Error::config(format!("unknown viscosity variant '{s}'"))),
        }
    }
}

/// Effective-viscosity model of a reduced model.
#[derive(Clone, Debug, PartialEq)]
pub struct ViscosityModelSpec<T> {
    pub variant: ViscosityVariant,
    pub nu_m: T,
    /// Volume-weighted space-time mean of `ν_T`.
    pub nu_bar: T,
    /// Temporal mean field `⟨ν_T⟩`.
    pub nu_t_mean: Vec<T>,
    /// First `ν_T` POD mode (variant 3).
    pub mode1: Option<Vec<T>>,
    /// Interpolant of the training `a₁(t)` (variant 3).
    pub a1: Option<CubicSpline>,
}

impl<T: Real> ViscosityModelSpec<T> {
    /// Time-independent part of `ν_E`.
    pub fn static_field(&self) -> Vec<T> {
        match self.variant {
            ViscosityVariant::SpatioTemporalMean => vec![self.nu_m + self.nu_bar; self.nu_t_mean.len()],
            _ => self.nu_t_mean.iter().map(|&v| self.nu_m + v).collect(),
        }
    }

    /// Online coefficient `a₁(t)`; zero unless variant 3.
    pub fn a1_at(&self, t: f64) -> T {
        match (&self.a1, self.variant) {
            (Some(s), ViscosityVariant::TemporalMeanPlusMode1) => T::lit(s.eval(t)),
            _ => T::zero(),
        }
    }

    /// `ν_E(x, t)` at the given `a₁`.
    pub fn field_at(&self, a1: T) -> Vec<T> {
        let mut f = self.static_field();
        if let (Some(m), ViscosityVariant::TemporalMeanPlusMode1) = (&self.mode1, self.variant) {
            for (o, &p) in f.iter_mut().zip(m) {
                *o += a1 * p;
            }
        }
        f
    }

    pub fn has_mode1(&self) -> bool {
        self.variant == ViscosityVariant::TemporalMeanPlusMode1 && self.mode1.is_some()
    }
}

/// Builds the viscosity model from the `ν_T` snapshots of the ensemble;
/// an ensemble without `ν_T` counts as `ν_T ≡ 0`.
///
/// For variant 3 a `ν_T` ensemble without fluctuations yields a zero mode
/// and a zero coefficient, so the fluctuation term vanishes exactly.
pub fn build_viscosity_model<T: Real>(ensemble: &SnapshotEnsemble<T>, variant: ViscosityVariant) -> Result<ViscosityModelSpec<T>> {
    let grid = ensemble.grid()?;
    let n = grid.n_fluid();
    let snaps: Vec<Vec<T>> = match ensemble.snapshots(Variable::NuT) {
        Ok(s) => s.to_vec(),
        Err(_) => vec![vec![T::zero(); n]; ensemble.n_snapshots()],
    };
    build_viscosity_model_from(
        &snaps,
        ensemble.times(),
        grid.cell_volumes(),
        T::lit(ensemble.fluid().nu_m),
        variant,
    )
}

/// [`build_viscosity_model`] on explicit snapshots.
pub fn build_viscosity_model_from<T: Real>(
    nu_t: &[Vec<T>],
    times: &[f64],
    weights: &[T],
    nu_m: T,
    variant: ViscosityVariant,
) -> Result<ViscosityModelSpec<T>> {
    if nu_t.len() != times.len() {
        return Err(Error::dim("eddy-viscosity snapshots not aligned with times"));
    }
    if !(nu_m > T::zero()) {
        return Err(Error::config("nu_m must be positive"));
    }
    let nu_t_mean = mean_of(nu_t)?;
    let volume = weights.iter().fold(T::zero(), |a, &w| a + w);
    let ones = vec![T::one(); weights.len()];
    let nu_bar = weighted_dot(&nu_t_mean, &ones, weights) / volume;
    let (mode1, a1) = if variant == ViscosityVariant::TemporalMeanPlusMode1 {
        let basis = pod_from_snapshots(PodVariable::EddyViscosity, 1, nu_t, weights, Some(1))?;
        let (mode, coeffs): (Vec<T>, Vec<f64>) = if basis.rank() == 0 {
            (vec![T::zero(); weights.len()], vec![0.0; times.len()])
        } else {
            let phi = basis.modes[0].clone();
            let coeffs = nu_t
                .iter()
                .map(|s| {
                    let f: Vec<T> = s.iter().zip(&nu_t_mean).map(|(&a, &b)| a - b).collect();
                    weighted_dot(&f, &phi, weights).as_f64()
                })
                .collect();
            (phi, coeffs)
        };
        (Some(mode), Some(CubicSpline::new(times.to_vec(), coeffs)?))
    } else {
        (None, None)
    };
    let spec = ViscosityModelSpec {
        variant,
        nu_m,
        nu_bar,
        nu_t_mean,
        mode1,
        a1,
    };
    check_non_negative(&spec, times)?;
    Ok(spec)
}

fn check_non_negative<T: Real>(spec: &ViscosityModelSpec<T>, times: &[f64]) -> Result<()> {
    let check = |field: Vec<T>, t: f64| -> Result<()> {
        if let Some((c, v)) = field.iter().enumerate().find(|(_, v)| **v < T::zero() || !v.is_finite()) {
            return Err(Error::config(format!(
                "effective viscosity {v} < 0 at cell {c}, t = {t} for the {} model",
                spec.variant
            )));
        }
        Ok(())
    };
    if spec.has_mode1() {
        for &t in times {
            check(spec.field_at(spec.a1_at(t)), t)?;
        }
    } else {
        check(spec.static_field(), times.first().copied().unwrap_or(0.0))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights() -> Vec<f64> {
        vec![0.5, 0.25, 0.25, 1.0]
    }

    #[test]
    fn constant_eddy_viscosity_gives_same_model() {
        let nu0 = 0.03;
        let times: Vec<f64> = (0..5).map(|j| j as f64 * 0.1).collect();
        let snaps = vec![vec![nu0; 4]; 5];
        for v in [
            ViscosityVariant::SpatioTemporalMean,
            ViscosityVariant::TemporalMean,
            ViscosityVariant::TemporalMeanPlusMode1,
        ] {
            let m = build_viscosity_model_from(&snaps, &times, &weights(), 1e-4, v).unwrap();
            for t in [0.0, 0.17, 0.4] {
                for x in m.field_at(m.a1_at(t)) {
                    assert!((x - (1e-4 + nu0)).abs() < 1e-15);
                }
                assert_eq!(m.a1_at(t), 0.0);
            }
        }
    }

    #[test]
    fn spatial_mean_of_temporal_mean_is_scalar_mean() {
        let times = vec![0.0, 1.0, 2.0];
        let snaps = vec![vec![0.1, 0.2, 0.0, 0.4], vec![0.3, 0.0, 0.1, 0.2], vec![0.0, 0.5, 0.2, 0.1]];
        let w = weights();
        let m2 = build_viscosity_model_from(&snaps, &times, &w, 1e-4, ViscosityVariant::TemporalMean).unwrap();
        let m1 = build_viscosity_model_from(&snaps, &times, &w, 1e-4, ViscosityVariant::SpatioTemporalMean).unwrap();
        let vol: f64 = w.iter().sum();
        let avg: f64 = m2.static_field().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / vol;
        assert!((avg - m1.static_field()[0]).abs() < 1e-12);
    }

    #[test]
    fn mode1_reproduces_rank_one_data() {
        let times: Vec<f64> = (0..10).map(|j| j as f64 * 0.1).collect();
        let shape = [1.0, -0.5, 0.25, 0.5];
        let snaps: Vec<Vec<f64>> = times
            .iter()
            .map(|t| shape.iter().map(|s| 0.5 + 0.1 * s * (3.0 * t).sin()).collect())
            .collect();
        let m = build_viscosity_model_from(&snaps, &times, &weights(), 1e-4, ViscosityVariant::TemporalMeanPlusMode1).unwrap();
        for (j, &t) in times.iter().enumerate() {
            let f = m.field_at(m.a1_at(t));
            for (c, v) in f.iter().enumerate() {
                assert!((v - (1e-4 + snaps[j][c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_effective_viscosity_rejected() {
        let times = vec![0.0, 1.0];
        let spec = ViscosityModelSpec {
            variant: ViscosityVariant::TemporalMeanPlusMode1,
            nu_m: 1e-4,
            nu_bar: 0.1,
            nu_t_mean: vec![0.1, 0.1],
            mode1: Some(vec![1.0, -1.0]),
            a1: Some(CubicSpline::new(times.clone(), vec![0.0, 0.5]).unwrap()),
        };
        assert!(matches!(check_non_negative(&spec, &times), Err(Error::Config(_))));
        let ok = ViscosityModelSpec {
            a1: Some(CubicSpline::new(times.clone(), vec![0.0, 0.05]).unwrap()),
            ..spec
        };
        assert!(check_non_negative(&ok, &times).is_ok());
    }

    #[test]
    fn small_molecular_viscosity_accepted() {
        let times = vec![0.0, 1.0];
        let snaps = vec![vec![0.0; 4]; 2];
        assert!(build_viscosity_model_from(&snaps, &times, &weights(), 1e-4, ViscosityVariant::TemporalMean).is_ok());
    }
}
