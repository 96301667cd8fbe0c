//! Assembled reduced models and their time integration.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::closure::{elm_predict, narx_predict, ClosureKind, ClosureModel};
use crate::error::{Error, Result};
use crate::fom::SnapshotEnsemble;
use crate::galerkin::{eval_rhs_closed, GalerkinOperators, ViscosityModelSpec, ViscosityVariant};
use crate::pod::{project_coefficients, snapshot_matrix, ModalTrajectory, PodBasis, PodVariable};
use crate::scalar::Real;

/// Model ladder: viscosity treatment crossed with the residual closure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RomVariant {
    A,
    A1,
    B,
    C,
    D,
    E,
    F,
}

impl RomVariant {
    pub const ALL: [RomVariant; 7] = [
        RomVariant::A,
        RomVariant::A1,
        RomVariant::B,
        RomVariant::C,
        RomVariant::D,
        RomVariant::E,
        RomVariant::F,
    ];

    pub fn viscosity(self) -> ViscosityVariant {
        match self {
            RomVariant::A | RomVariant::A1 => ViscosityVariant::SpatioTemporalMean,
            RomVariant::B | RomVariant::D | RomVariant::F => ViscosityVariant::TemporalMean,
            RomVariant::C | RomVariant::E => ViscosityVariant::TemporalMeanPlusMode1,
        }
    }

    pub fn closure(self) -> Option<ClosureKind> {
        match self {
            RomVariant::A | RomVariant::B | RomVariant::C => None,
            RomVariant::A1 | RomVariant::D | RomVariant::E => Some(ClosureKind::Elm),
            RomVariant::F => Some(ClosureKind::Narx),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RomVariant::A => "A",
            RomVariant::A1 => "A1",
            RomVariant::B => "B",
            RomVariant::C => "C",
            RomVariant::D => "D",
            RomVariant::E => "E",
            RomVariant::F => "F",
        }
    }
}

impl fmt::Display for RomVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RomVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RomVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown model variant '{s}'")))
    }
}

/// A validated reduced model ready for integration.
#[derive(Clone, Debug, PartialEq)]
pub struct RomModel<T> {
    pub variant: RomVariant,
    pub operators: GalerkinOperators<T>,
    pub viscosity: ViscosityModelSpec<T>,
    pub closure: Option<ClosureModel<T>>,
}

impl<T: Real> RomModel<T> {
    pub fn rank(&self) -> usize {
        self.operators.r
    }

    pub fn pressure_rank(&self) -> usize {
        self.operators.rp
    }
}

/// Checks that two artifacts come from the same ensemble.
pub fn check_case_hash(expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Incompatible(format!(
            "case hash {found} does not match {expected}"
        )));
    }
    Ok(())
}

pub fn assemble_model<T: Real>(
    variant: RomVariant,
    operators: GalerkinOperators<T>,
    viscosity: ViscosityModelSpec<T>,
    closure: Option<ClosureModel<T>>,
) -> Result<RomModel<T>> {
    if viscosity.variant != variant.viscosity() {
        return Err(Error::Incompatible(format!(
            "model {variant} needs the {} viscosity model, got {}",
            variant.viscosity(),
            viscosity.variant
        )));
    }
    if operators.has_mode1_terms() != viscosity.has_mode1() {
        return Err(Error::Incompatible(
            "operators and viscosity model disagree on the fluctuating eddy-viscosity term".into(),
        ));
    }
    match (variant.closure(), &closure) {
        (None, None) => {}
        (Some(k), Some(c)) if c.kind() == k => {
            let (ni, no) = match c {
                ClosureModel::Elm(m) => (m.n_inputs, m.n_outputs),
                ClosureModel::Narx(m) => (m.n_inputs, m.n_outputs),
            };
            if ni != operators.r || no != operators.r {
                return Err(Error::Incompatible(format!(
                    "closure maps {ni} -> {no} but the model has rank {}",
                    operators.r
                )));
            }
        }
        (need, got) => {
            return Err(Error::Incompatible(format!(
                "model {variant} needs closure {}, got {}",
                need.map_or("none".to_string(), |k| k.to_string()),
                got.as_ref().map_or("none".to_string(), |c| c.kind().to_string())
            )))
        }
    }
    Ok(RomModel {
        variant,
        operators,
        viscosity,
        closure,
    })
}

/// `a₁^νT(t)` from the training spline.
pub fn spline_a1vt<T: Real>(spec: &ViscosityModelSpec<T>, t: f64) -> Result<T> {
    match &spec.a1 {
        Some(s) => Ok(T::lit(s.eval(t))),
        None => Err(Error::Degenerate("viscosity model has no a1 knots".into())),
    }
}

/// Projection of the snapshot taken at `t0`.
pub fn initial_coefficients<T: Real>(ensemble: &SnapshotEnsemble<T>, basis: &PodBasis<T>, t0: f64) -> Result<Vec<T>> {
    let tol = 1e-9 * ensemble.snapshot_interval();
    let j = ensemble
        .times()
        .iter()
        .position(|&t| (t - t0).abs() <= tol)
        .ok_or_else(|| Error::config(format!("t0 = {t0} is not a snapshot time")))?;
    let snaps = snapshot_matrix(ensemble, basis.variable)?;
    project_coefficients(&snaps[j], basis)
}

/// Step size and output cadence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub output_interval: f64,
}

impl IntegrationSettings {
    /// Twenty steps per output interval.
    pub fn for_interval(output_interval: f64) -> Self {
        IntegrationSettings {
            dt: output_interval / 20.0,
            output_interval,
        }
    }

    fn steps_per_output(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.output_interval > 0.0) {
            return Err(Error::config("time step and output interval must be positive"));
        }
        let k = (self.output_interval / self.dt).round();
        if k < 1.0 || (k * self.dt - self.output_interval).abs() > 1e-9 * self.output_interval {
            return Err(Error::config(format!(
                "output interval {} is not a multiple of dt = {}",
                self.output_interval, self.dt
            )));
        }
        Ok(k as usize)
    }
}

/// Integrated coefficient histories at the output cadence.
#[derive(Clone, Debug, PartialEq)]
pub struct RomTrajectory<T> {
    pub variant: RomVariant,
    pub times: Vec<f64>,
    pub velocity: Vec<Vec<T>>,
    pub pressure: Vec<Vec<T>>,
    /// Closure output `ℜ̃` (zeros without closure).
    pub closure: Vec<Vec<T>>,
    pub n_steps: usize,
    /// Wall-clock seconds per time step.
    pub step_cost: f64,
    /// First time the coefficients blew up, if they did.
    pub diverged_at: Option<f64>,
    /// Whether `a₁^νT` was continued past the training window.
    pub a1_extrapolated: bool,
}

impl<T: Real> RomTrajectory<T> {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn velocity_trajectory(&self) -> Result<ModalTrajectory<T>> {
        ModalTrajectory::new(PodVariable::Velocity, self.times.clone(), self.velocity.clone())
    }

    pub fn pressure_trajectory(&self) -> Result<ModalTrajectory<T>> {
        ModalTrajectory::new(PodVariable::Pressure, self.times.clone(), self.pressure.clone())
    }
}

fn norm<T: Real>(a: &[T]) -> f64 {
    a.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt()
}

struct Rhs<'a, T> {
    model: &'a RomModel<T>,
}

impl<T: Real> Rhs<'_, T> {
    fn a1(&self, t: f64) -> T {
        self.model.viscosity.a1_at(t)
    }

    /// Closed right-hand side; `frozen` replaces the closure when given.
    fn eval(&self, a: &[T], t: f64, frozen: Option<&[T]>) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let (mut rhs, ap) = eval_rhs_closed(&self.model.operators, a, self.a1(t))?;
        let corr = match (frozen, &self.model.closure) {
            (Some(c), _) => c.to_vec(),
            (None, Some(ClosureModel::Elm(m))) => elm_predict(m, &rhs)?,
            _ => vec![T::zero(); rhs.len()],
        };
        if self.model.closure.is_some() {
            for (r, &c) in rhs.iter_mut().zip(&corr) {
                *r += c;
            }
        }
        Ok((rhs, ap, corr))
    }
}

/// Classical RK4 from `t0` to `t_end`.
///
/// ELM closures are evaluated at every stage. The NARX closure is updated
/// once per step from the step-start right-hand side, with its delay equal
/// to the output interval, and held over the stages. Blow-up ends the run
/// early with `diverged_at` set.
pub fn integrate<T: Real>(
    model: &RomModel<T>,
    a0: &[T],
    t0: f64,
    t_end: f64,
    settings: IntegrationSettings,
) -> Result<RomTrajectory<T>> {
    let r = model.rank();
    if a0.len() != r {
        return Err(Error::dim(format!("{} initial coefficients for rank {r}", a0.len())));
    }
    if a0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial coefficients".into()));
    }
    let per_out = settings.steps_per_output()?;
    if !(t_end >= t0) {
        return Err(Error::config("end time before start time"));
    }
    let n_out = ((t_end - t0) / settings.output_interval + 1e-9).floor() as usize;
    let dt = settings.dt;
    let h = T::lit(dt);
    let half = T::lit(0.5 * dt);
    let sixth = T::lit(dt / 6.0);
    let two = T::lit(2.0);
    let rhs = Rhs { model };
    let narx = match &model.closure {
        Some(ClosureModel::Narx(m)) => Some(m),
        _ => None,
    };
    let limit = 1e6 * norm(a0).max(f64::MIN_POSITIVE);
    let a1_extrapolated = model.viscosity.has_mode1()
        && model.viscosity.a1.as_ref().is_some_and(|s| s.extrapolates(t_end));

    let mut a = a0.to_vec();
    let mut history: VecDeque<(Vec<T>, Vec<T>)> = VecDeque::with_capacity(per_out + 1);
    let (first_rhs, first_ap, first_corr) = rhs.eval(&a, t0, None)?;
    let mut traj = RomTrajectory {
        variant: model.variant,
        times: vec![t0],
        velocity: vec![a.clone()],
        pressure: vec![first_ap],
        closure: vec![first_corr],
        n_steps: 0,
        step_cost: 0.0,
        diverged_at: None,
        a1_extrapolated,
    };
    let seed_rhs = first_rhs;
    if let Some(m) = narx {
        let c = narx_predict(m, &seed_rhs, &seed_rhs, &vec![T::zero(); r])?;
        traj.closure[0] = c;
    }
    let start = Instant::now();
    let mut frozen: Vec<T> = Vec::new();
    'outer: for out in 1..=n_out {
        for s in 0..per_out {
            let step = (out - 1) * per_out + s;
            let t = t0 + step as f64 * dt;
            let result = (|| -> Result<Vec<T>> {
                let fz = match narx {
                    Some(m) => {
                        let (now, _) = eval_rhs_closed(&model.operators, &a, rhs.a1(t))?;
                        let (prev, out_prev) = if history.len() == per_out {
                            history.front().cloned().expect("non-empty history")
                        } else {
                            (seed_rhs.clone(), vec![T::zero(); r])
                        };
                        frozen = narx_predict(m, &now, &prev, &out_prev)?;
                        history.push_back((now, frozen.clone()));
                        if history.len() > per_out {
                            history.pop_front();
                        }
                        Some(frozen.as_slice())
                    }
                    None => None,
                };
                let (k1, _, _) = rhs.eval(&a, t, fz)?;
                let y: Vec<T> = a.iter().zip(&k1).map(|(&x, &k)| x + half * k).collect();
                let (k2, _, _) = rhs.eval(&y, t + 0.5 * dt, fz)?;
                let y: Vec<T> = a.iter().zip(&k2).map(|(&x, &k)| x + half * k).collect();
                let (k3, _, _) = rhs.eval(&y, t + 0.5 * dt, fz)?;
                let y: Vec<T> = a.iter().zip(&k3).map(|(&x, &k)| x + h * k).collect();
                let (k4, _, _) = rhs.eval(&y, t + dt, fz)?;
                Ok((0..r)
                    .map(|i| a[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
                    .collect())
            })();
            traj.n_steps += 1;
            let next = match result {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    traj.diverged_at = Some(t + dt);
                    break 'outer;
                }
                Err(e) => return Err(e.at_time(t)),
            };
            let nn = norm(&next);
            if !nn.is_finite() || nn > limit {
                traj.diverged_at = Some(t + dt);
                break 'outer;
            }
            a = next;
        }
        let t = t0 + out as f64 * settings.output_interval;
        let (_, ap, corr) = match rhs.eval(&a, t, narx.map(|_| frozen.as_slice())) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                traj.diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e.at_time(t)),
        };
        traj.times.push(t);
        traj.velocity.push(a.clone());
        traj.pressure.push(ap);
        traj.closure.push(corr);
    }
    traj.step_cost = start.elapsed().as_secs_f64() / traj.n_steps.max(1) as f64;
    Ok(traj)
}
