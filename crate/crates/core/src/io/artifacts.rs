//! POD bases, operator bundles and closure models as binary artifacts.

use std::path::Path;

use crate::closure::{ClosureKind, ClosureModel, ElmModel, MinMax, NarxModel, NarxReport};
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinOperators, ViscosityModelSpec, ViscosityVariant};
use crate::grid::BoundaryLabel;
use crate::pod::{BoundaryLift, PodBasis, PodVariable};
use crate::scalar::Real;
use crate::spline::CubicSpline;

use super::container::Container;

pub const BASIS_KIND: &str = "pod-basis";
pub const OPERATORS_KIND: &str = "operators";
pub const CLOSURE_KIND: &str = "closure";

pub fn save_basis<T: Real>(path: &Path, basis: &PodBasis<T>, case_hash: &str) -> Result<()> {
    let mut c = Container::new(BASIS_KIND);
    c.set("case_hash", case_hash)?;
    c.set("variable", basis.variable)?;
    c.set("n_components", basis.n_components)?;
    c.set("rank", basis.rank())?;
    c.push("mean", &basis.mean);
    c.push_rows("modes", &basis.modes);
    c.push("eigenvalues", &basis.eigenvalues);
    c.push("weights", &basis.weights);
    if let Some(lift) = &basis.lift {
        c.set("lift_labels", &lift.labels)?;
        c.push_rows("lift_functions", &lift.functions);
        c.push("lift_values", &lift.values);
    }
    c.save(path)
}

pub fn load_basis<T: Real>(path: &Path) -> Result<(PodBasis<T>, String)> {
    let c = Container::load(path, BASIS_KIND)?;
    let rank: usize = c.field("rank")?;
    let mean: Vec<T> = c.array("mean")?;
    let modes = c.rows::<T>("modes", rank)?;
    if modes.iter().any(|m| m.len() != mean.len()) {
        return Err(Error::Format("basis modes and mean differ in length".into()));
    }
    let lift = if c.has("lift_functions") {
        let labels: Vec<BoundaryLabel> = c.field("lift_labels")?;
        Some(BoundaryLift {
            functions: c.rows("lift_functions", labels.len())?,
            values: c.array("lift_values")?,
            labels,
        })
    } else {
        None
    };
    let basis = PodBasis {
        variable: c.field::<PodVariable>("variable")?,
        n_components: c.field("n_components")?,
        mean,
        modes,
        eigenvalues: c.array("eigenvalues")?,
        weights: c.array("weights")?,
        lift,
    };
    Ok((basis, c.field("case_hash")?))
}

/// Reduced operators with the viscosity model and the initial condition
/// they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBundle<T> {
    pub case_hash: String,
    pub operators: GalerkinOperators<T>,
    pub viscosity: ViscosityModelSpec<T>,
    pub snapshot_interval: f64,
    /// Snapshot times of the training ensemble.
    pub times: Vec<f64>,
    /// Projected velocity coefficients per snapshot.
    pub velocity: Vec<Vec<T>>,
    /// Projected pressure coefficients per snapshot.
    pub pressure: Vec<Vec<T>>,
}

impl<T: Real> OperatorBundle<T> {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Initial condition: coefficients of the first snapshot.
    pub fn a0(&self) -> &[T] {
        &self.velocity[0]
    }
}

pub fn save_bundle<T: Real>(path: &Path, b: &OperatorBundle<T>) -> Result<()> {
    let ops = &b.operators;
    let v = &b.viscosity;
    let mut c = Container::new(OPERATORS_KIND);
    c.set("case_hash", &b.case_hash)?;
    c.set("r", ops.r)?;
    c.set("rp", ops.rp)?;
    c.set("viscosity_variant", v.variant)?;
    c.set("snapshot_interval", b.snapshot_interval)?;
    c.push("times", &b.times);
    c.push_rows("velocity_coefficients", &b.velocity);
    c.push_rows("pressure_coefficients", &b.pressure);
    for (name, t) in [
        ("c", &ops.c),
        ("l", &ops.l),
        ("q", &ops.q),
        ("p", &ops.p),
        ("g", &ops.g),
        ("a_p", &ops.a_p),
        ("c_p", &ops.c_p),
        ("l_p", &ops.l_p),
        ("q_p", &ops.q_p),
    ] {
        c.push(name, t);
    }
    for (name, t) in [
        ("c_nu1", &ops.c_nu1),
        ("l_nu1", &ops.l_nu1),
        ("c_nu1_p", &ops.c_nu1_p),
        ("l_nu1_p", &ops.l_nu1_p),
    ] {
        if let Some(t) = t {
            c.push(name, t);
        }
    }
    c.push("nu_m", &[v.nu_m]);
    c.push("nu_bar", &[v.nu_bar]);
    c.push("nu_t_mean", &v.nu_t_mean);
    if let Some(m) = &v.mode1 {
        c.push("nu_t_mode1", m);
    }
    if let Some(s) = &v.a1 {
        c.push("a1_knots", s.knots());
        c.push("a1_values", s.values());
    }
    c.save(path)
}

fn scalar<T: Real>(c: &Container, name: &str) -> Result<T> {
    match c.array::<T>(name)?.as_slice() {
        [x] => Ok(*x),
        _ => Err(Error::Format(format!("'{name}' should hold one value"))),
    }
}

pub fn load_bundle<T: Real>(path: &Path) -> Result<OperatorBundle<T>> {
    let c = Container::load(path, OPERATORS_KIND)?;
    let operators = GalerkinOperators::from_parts(
        c.field("r")?,
        c.field("rp")?,
        c.array("c")?,
        c.array("l")?,
        c.array("q")?,
        c.array("p")?,
        c.array_opt("c_nu1")?,
        c.array_opt("l_nu1")?,
        c.array("g")?,
        c.array("a_p")?,
        c.array("c_p")?,
        c.array("l_p")?,
        c.array("q_p")?,
        c.array_opt("c_nu1_p")?,
        c.array_opt("l_nu1_p")?,
    )?;
    let a1 = match (c.array_opt::<f64>("a1_knots")?, c.array_opt::<f64>("a1_values")?) {
        (Some(k), Some(v)) => Some(CubicSpline::new(k, v)?),
        (None, None) => None,
        _ => return Err(Error::Format("a1 knots without values".into())),
    };
    let viscosity = ViscosityModelSpec {
        variant: c.field::<ViscosityVariant>("viscosity_variant")?,
        nu_m: scalar(&c, "nu_m")?,
        nu_bar: scalar(&c, "nu_bar")?,
        nu_t_mean: c.array("nu_t_mean")?,
        mode1: c.array_opt("nu_t_mode1")?,
        a1,
    };
    let times: Vec<f64> = c.array("times")?;
    if times.is_empty() {
        return Err(Error::Format("bundle without training times".into()));
    }
    let velocity = c.rows::<T>("velocity_coefficients", times.len())?;
    let pressure = c.rows::<T>("pressure_coefficients", times.len())?;
    if velocity.iter().any(|a| a.len() != operators.r) || pressure.iter().any(|a| a.len() != operators.rp) {
        return Err(Error::Format("training coefficients do not match the ranks".into()));
    }
    Ok(OperatorBundle {
        case_hash: c.field("case_hash")?,
        operators,
        viscosity,
        snapshot_interval: c.field("snapshot_interval")?,
        times,
        velocity,
        pressure,
    })
}

pub fn save_closure<T: Real>(path: &Path, model: &ClosureModel<T>, case_hash: &str) -> Result<()> {
    let mut c = Container::new(CLOSURE_KIND);
    c.set("case_hash", case_hash)?;
    c.set("closure", model.kind())?;
    match model {
        ClosureModel::Elm(m) => {
            c.set("config", m.config)?;
            c.set("n_inputs", m.n_inputs)?;
            c.set("n_outputs", m.n_outputs)?;
            c.set("n_cut", m.n_cut)?;
            c.push("w1", &m.w1);
            c.push("b1", &m.b1);
            c.push("w2", &m.w2);
            c.push("rmse", &[m.train_rmse, m.zero_rmse]);
        }
        ClosureModel::Narx(m) => {
            c.set("config", m.config)?;
            c.set("n_inputs", m.n_inputs)?;
            c.set("n_outputs", m.n_outputs)?;
            let mut report = m.report.clone();
            let trace = std::mem::take(&mut report.trace);
            c.set("report", &report)?;
            c.push("trace", &trace);
            c.push("w1", &m.w1);
            c.push("b1", &m.b1);
            c.push("w2", &m.w2);
            c.push("b2", &m.b2);
            c.push("input_min", &m.input_norm.min);
            c.push("input_max", &m.input_norm.max);
            c.push("output_min", &m.output_norm.min);
            c.push("output_max", &m.output_norm.max);
        }
    }
    c.save(path)
}

fn check_len<T>(v: &[T], n: usize, name: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Format(format!("closure array '{name}' has {} values, expected {n}", v.len())));
    }
    Ok(())
}

pub fn load_closure<T: Real>(path: &Path) -> Result<(ClosureModel<T>, String)> {
    let c = Container::load(path, CLOSURE_KIND)?;
    let n_inputs: usize = c.field("n_inputs")?;
    let n_outputs: usize = c.field("n_outputs")?;
    let model = match c.field::<ClosureKind>("closure")? {
        ClosureKind::Elm => {
            let config: crate::closure::ElmConfig = c.field("config")?;
            let h = config.hidden_size;
            let rmse: Vec<f64> = c.array("rmse")?;
            check_len(&rmse, 2, "rmse")?;
            let m = ElmModel {
                config,
                n_inputs,
                n_outputs,
                w1: c.array("w1")?,
                b1: c.array("b1")?,
                w2: c.array("w2")?,
                n_cut: c.field("n_cut")?,
                train_rmse: rmse[0],
                zero_rmse: rmse[1],
            };
            check_len(&m.w1, h * n_inputs, "w1")?;
            check_len(&m.b1, h, "b1")?;
            check_len(&m.w2, n_outputs * h, "w2")?;
            ClosureModel::Elm(m)
        }
        ClosureKind::Narx => {
            let config: crate::closure::NarxConfig = c.field("config")?;
            let h = config.hidden_size;
            let mut report: NarxReport = c.field("report")?;
            report.trace = c.array("trace")?;
            let m = NarxModel {
                config,
                n_inputs,
                n_outputs,
                w1: c.array("w1")?,
                b1: c.array("b1")?,
                w2: c.array("w2")?,
                b2: c.array("b2")?,
                input_norm: MinMax {
                    min: c.array("input_min")?,
                    max: c.array("input_max")?,
                },
                output_norm: MinMax {
                    min: c.array("output_min")?,
                    max: c.array("output_max")?,
                },
                report,
            };
            check_len(&m.w1, h * (2 * n_inputs + n_outputs), "w1")?;
            check_len(&m.b1, h, "b1")?;
            check_len(&m.w2, n_outputs * h, "w2")?;
            check_len(&m.b2, n_outputs, "b2")?;
            check_len(&m.input_norm.min, n_inputs, "input_min")?;
            check_len(&m.output_norm.min, n_outputs, "output_min")?;
            ClosureModel::Narx(m)
        }
    };
    Ok((model, c.field("case_hash")?))
}
