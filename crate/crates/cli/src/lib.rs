//! Pipeline stages behind the `pbrom` command. Every stage reads and writes
//! files only, so stages can run as separate processes.

use std::fs;
use std::path::{Path, PathBuf};

use pbrom_core::closure::{
    elm_train, narx_train, residual_dataset_from, ClosureKind, ClosureModel, ElmConfig, NarxConfig,
};
use pbrom_core::eval::{
    benchmark_speedup, compute_forces, field_deviation, force_series, rmse_per_mode, ForceSample, RmseReport,
    SpeedupReport,
};
use pbrom_core::fom::{run_and_collect, FomConfig};
use pbrom_core::galerkin::{build_operators, build_viscosity_model, FlowOperators};
use pbrom_core::io::{
    fmt_num, load_basis, load_bundle, load_closure, read_ensemble, read_trajectory, save_basis, save_bundle,
    save_closure, write_ensemble, write_line_plot, write_records, write_table, write_trajectory, OperatorBundle,
    Series,
};
use pbrom_core::pod::{
    choose_rank, pod_modes, project_ensemble, reconstruct, ModalTrajectory, PodBasis, PodVariable, RankCriterion,
};
use pbrom_core::rom::{assemble_model, check_case_hash, integrate, IntegrationSettings, RomModel, RomTrajectory, RomVariant};
use pbrom_core::{BoundaryLabel, Error, Field, Result, Variable, VectorField};

pub const VELOCITY_BASIS: &str = "velocity.basis";
pub const PRESSURE_BASIS: &str = "pressure.basis";

/// Reads and validates a full-order configuration.
pub fn load_config(path: &Path) -> Result<FomConfig> {
    let cfg: FomConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the full-order model and writes the ensemble directory.
pub fn fom_run(config: &FomConfig, out: &Path) -> Result<String> {
    let ens = run_and_collect::<f64>(config)?;
    write_ensemble(out, &ens)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodSummary {
    pub velocity_rank: usize,
    pub pressure_rank: Option<usize>,
}

fn write_spectrum(path: &Path, basis: &PodBasis<f64>) -> Result<()> {
    let total: f64 = basis.eigenvalues.iter().sum();
    let mut acc = 0.0;
    let rows: Vec<Vec<f64>> = basis
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            acc += l;
            vec![(i + 1) as f64, l, if total > 0.0 { acc / total } else { 0.0 }]
        })
        .collect();
    write_table(path, &["mode".into(), "eigenvalue".into(), "cumulative_energy".into()], &rows)
}

/// POD of velocity (and pressure when recorded); writes basis files and
/// eigenvalue spectra into `out`.
pub fn pod_stage(ensemble_dir: &Path, out: &Path, max_rank: Option<usize>) -> Result<PodSummary> {
    let (ens, hash) = read_ensemble::<f64>(ensemble_dir)?;
    fs::create_dir_all(out)?;
    let vb = pod_modes(&ens, PodVariable::Velocity, max_rank)?;
    save_basis(&out.join(VELOCITY_BASIS), &vb, &hash)?;
    write_spectrum(&out.join("velocity_spectrum.csv"), &vb)?;
    let pressure_rank = if ens.variables().contains(&Variable::P) {
        let pb = pod_modes(&ens, PodVariable::Pressure, max_rank)?;
        save_basis(&out.join(PRESSURE_BASIS), &pb, &hash)?;
        write_spectrum(&out.join("pressure_spectrum.csv"), &pb)?;
        Some(pb.rank())
    } else {
        None
    };
    Ok(PodSummary {
        velocity_rank: vb.rank(),
        pressure_rank,
    })
}

fn load_checked_basis(path: &Path, hash: &str) -> Result<PodBasis<f64>> {
    let (b, h) = load_basis::<f64>(path)?;
    check_case_hash(hash, &h)?;
    Ok(b)
}

/// Velocity basis and optional pressure basis of `basis_dir`.
pub fn load_bases(basis_dir: &Path, hash: &str) -> Result<(PodBasis<f64>, Option<PodBasis<f64>>)> {
    let vb = load_checked_basis(&basis_dir.join(VELOCITY_BASIS), hash)?;
    let pp = basis_dir.join(PRESSURE_BASIS);
    let pb = if pp.exists() {
        Some(load_checked_basis(&pp, hash)?)
    } else {
        None
    };
    Ok((vb, pb))
}

/// Builds the operator bundle for the viscosity model of `variant`.
pub fn build_stage(
    ensemble_dir: &Path,
    basis_dir: &Path,
    variant: RomVariant,
    rank: RankCriterion,
    pressure_rank: Option<RankCriterion>,
    out: &Path,
) -> Result<OperatorBundle<f64>> {
    let (ens, hash) = read_ensemble::<f64>(ensemble_dir)?;
    let (vb, pb) = load_bases(basis_dir, &hash)?;
    let r = choose_rank(&vb, rank)?;
    if r == 0 {
        return Err(Error::Degenerate("velocity rank 0: the ensemble has no fluctuations".into()));
    }
    let vb = vb.truncated(r)?;
    let pb = match pb {
        Some(pb) => {
            let rp = choose_rank(&pb, pressure_rank.unwrap_or(RankCriterion::Explicit(r)))?;
            Some(pb.truncated(rp)?)
        }
        None => None,
    };
    let viscosity = build_viscosity_model(&ens, variant.viscosity())?;
    let ctx = FlowOperators::new(ens.grid()?, ens.boundaries())?;
    let operators = build_operators(&ctx, &vb, pb.as_ref(), &viscosity)?;
    let velocity = project_ensemble(&ens, &vb)?.coefficients;
    let pressure = match &pb {
        Some(pb) => project_ensemble(&ens, pb)?.coefficients,
        None => vec![Vec::new(); ens.n_snapshots()],
    };
    let bundle = OperatorBundle {
        case_hash: hash,
        operators,
        viscosity,
        snapshot_interval: ens.snapshot_interval(),
        times: ens.times().to_vec(),
        velocity,
        pressure,
    };
    save_bundle(out, &bundle)?;
    Ok(bundle)
}

/// Closure hyper-parameters as read from an optional JSON file.
#[derive(Clone, Debug, Default, PartialEq, serde::Deserialize)]
#[serde(default)]
pub struct ClosureSettings {
    pub elm: ElmConfig,
    pub narx: NarxConfig,
}

/// Fits a residual closure to the training coefficients stored in the
/// bundle; the ensemble only certifies the case.
pub fn train_stage(
    bundle_path: &Path,
    ensemble_dir: &Path,
    kind: ClosureKind,
    seed: Option<u64>,
    settings: &ClosureSettings,
    out: &Path,
) -> Result<ClosureModel<f64>> {
    let bundle = load_bundle::<f64>(bundle_path)?;
    let manifest = pbrom_core::io::read_manifest(ensemble_dir)?;
    check_case_hash(&manifest.case_hash, &bundle.case_hash)?;
    let data = residual_dataset_from(&bundle.times, &bundle.velocity, &bundle.operators, &bundle.viscosity)?;
    let model = match kind {
        ClosureKind::Elm => ClosureModel::Elm(elm_train(&data, ElmConfig {
            seed: seed.unwrap_or(settings.elm.seed),
            ..settings.elm
        })?),
        ClosureKind::Narx => ClosureModel::Narx(narx_train(&data, NarxConfig {
            seed: seed.unwrap_or(settings.narx.seed),
            ..settings.narx
        })?),
    };
    save_closure(out, &model, &bundle.case_hash)?;
    Ok(model)
}

/// Loads the bundle and optional closure and assembles the variant.
pub fn load_model(bundle_path: &Path, closure: Option<&Path>, variant: RomVariant) -> Result<(RomModel<f64>, OperatorBundle<f64>)> {
    let bundle = load_bundle::<f64>(bundle_path)?;
    let closure = match closure {
        Some(p) => {
            let (m, h) = load_closure::<f64>(p)?;
            check_case_hash(&bundle.case_hash, &h)?;
            Some(m)
        }
        None => None,
    };
    let model = assemble_model(variant, bundle.operators.clone(), bundle.viscosity.clone(), closure)?;
    Ok((model, bundle))
}

/// Integrates from the first training snapshot and writes the trajectory.
pub fn rom_run_stage(
    bundle_path: &Path,
    closure: Option<&Path>,
    variant: RomVariant,
    t_end: Option<f64>,
    dt: Option<f64>,
    out: &Path,
) -> Result<RomTrajectory<f64>> {
    let (model, bundle) = load_model(bundle_path, closure, variant)?;
    let mut settings = IntegrationSettings::for_interval(bundle.snapshot_interval);
    if let Some(dt) = dt {
        settings.dt = dt;
    }
    let t0 = bundle.t0();
    let traj = integrate(&model, bundle.a0(), t0, t_end.unwrap_or(t0 + bundle.horizon()), settings)?;
    write_trajectory(out, &traj, &bundle.case_hash)?;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub velocity: RmseReport,
    pub pressure: Option<RmseReport>,
    pub files: Vec<PathBuf>,
}

fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (j, &s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = j;
        }
    }
    best
}

fn rmse_rows(report: &RmseReport) -> Vec<Vec<String>> {
    report
        .per_mode
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            vec![
                report.variant.clone().unwrap_or_default(),
                report.variable.as_str().to_string(),
                (i + 1).to_string(),
                fmt_num(v),
                report.n_samples.to_string(),
            ]
        })
        .collect()
}

fn force_row(t: f64, f: &ForceSample) -> Vec<f64> {
    let tot = f.total();
    vec![t, f.pressure[0], f.pressure[1], f.viscous[0], f.viscous[1], tot[0], tot[1]]
}

/// Compares a trajectory with the ensemble it was built from: per-mode
/// RMSE, body forces, normalized velocity deviations and optional plots.
pub fn eval_stage(
    trajectory: &Path,
    ensemble_dir: &Path,
    basis_dir: &Path,
    bundle_path: &Path,
    out: &Path,
    svg: bool,
) -> Result<EvalSummary> {
    let (ens, hash) = read_ensemble::<f64>(ensemble_dir)?;
    let (traj, meta) = read_trajectory::<f64>(trajectory)?;
    check_case_hash(&hash, &meta.case_hash)?;
    let bundle = load_bundle::<f64>(bundle_path)?;
    check_case_hash(&hash, &bundle.case_hash)?;
    let (vb, pb) = load_bases(basis_dir, &hash)?;
    let vb = vb.truncated(meta.rank)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let label = Some(meta.variant.to_string());

    let exact_u = project_ensemble(&ens, &vb)?;
    let pred_u = traj.velocity_trajectory()?;
    let mut velocity = rmse_per_mode(&pred_u, &exact_u)?;
    velocity.variant = label.clone();
    let mut rows = rmse_rows(&velocity);
    let pressure = match (&pb, meta.pressure_rank) {
        (Some(pb), rp) if rp > 0 => {
            let pb = pb.truncated(rp)?;
            let exact_p = project_ensemble(&ens, &pb)?;
            let mut rep = rmse_per_mode(&traj.pressure_trajectory()?, &exact_p)?;
            rep.variant = label.clone();
            rows.extend(rmse_rows(&rep));
            Some((rep, pb))
        }
        _ => None,
    };
    let rmse_path = out.join("rmse.csv");
    write_records(
        &rmse_path,
        &["variant", "variable", "mode", "rmse", "n_samples"].map(String::from),
        &rows,
    )?;
    files.push(rmse_path);

    let grid = ens.grid()?;
    let n = grid.n_fluid();
    let d = ens.n_velocity();
    let mean = &vb.mean;
    let scale = (0..n)
        .map(|c| (0..d).map(|a| mean[a * n + c] * mean[a * n + c]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    // deviations at every matched output time
    let mut dev_rows = Vec::new();
    let mut last_fields = None;
    for (k, &t) in traj.times.iter().enumerate() {
        let j = nearest(ens.times(), t);
        if (ens.times()[j] - t).abs() > 0.5 * ens.snapshot_interval() {
            continue;
        }
        let recon = reconstruct(&vb, &traj.velocity[k])?;
        let exact = ens.velocity_stacked(j);
        let mut fields = Vec::with_capacity(d);
        for a in 0..d {
            let var = Variable::velocity(a);
            let r = Field::new(var, recon[a * n..(a + 1) * n].to_vec());
            let e = Field::new(var, exact[a * n..(a + 1) * n].to_vec());
            let dev = field_deviation(&r, &e, scale, &grid)?;
            dev_rows.push(vec![t, a as f64, dev.max_abs, dev.mean_abs, dev.weighted_rms]);
            fields.push(dev.values);
        }
        last_fields = Some(fields);
    }
    let dev_path = out.join("deviation.csv");
    write_table(
        &dev_path,
        &["time", "component", "max_abs", "mean_abs", "weighted_rms"].map(String::from),
        &dev_rows,
    )?;
    files.push(dev_path);
    if let Some(fields) = last_fields {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                let mut row = vec![x, y];
                row.extend(fields.iter().map(|f| f[c]));
                row
            })
            .collect();
        let mut headers = vec!["x".to_string(), "y".to_string()];
        headers.extend((0..d).map(|a| format!("d{}", Variable::velocity(a).as_str())));
        let p = out.join("deviation_field.csv");
        write_table(&p, &headers, &rows)?;
        files.push(p);
    }

    let has_body = grid.faces_with_label(BoundaryLabel::Body).next().is_some();
    let mut force_plot = None;
    if has_body && d == 2 {
        if let Some((_, pb)) = &pressure {
            let fom = force_series(&ens, BoundaryLabel::Body, 0.0)?;
            let bcs = ens.boundaries();
            let fluid = ens.fluid();
            let mut rows = Vec::new();
            let mut rom_series = Vec::new();
            for (k, &t) in traj.times.iter().enumerate() {
                let u = reconstruct(&vb, &traj.velocity[k])?;
                let p = reconstruct(pb, &traj.pressure[k])?;
                let nu = bundle.viscosity.field_at(bundle.viscosity.a1_at(t));
                let f = compute_forces(
                    &grid,
                    &bcs,
                    &Field::new(Variable::P, p),
                    &VectorField::from_stacked(d, &u)?,
                    &Field::new(Variable::NuT, nu),
                    BoundaryLabel::Body,
                    fluid.rho,
                    0.0,
                )?;
                let mut row = force_row(t, &f);
                let j = nearest(&fom.times, t);
                row.extend(force_row(fom.times[j], &fom.samples[j]).into_iter().skip(1));
                rom_series.push((t, f.total()));
                rows.push(row);
            }
            let headers: Vec<String> = ["time", "rom_fp_x", "rom_fp_y", "rom_fv_x", "rom_fv_y", "rom_f_x", "rom_f_y"]
                .into_iter()
                .chain(["fom_fp_x", "fom_fp_y", "fom_fv_x", "fom_fv_y", "fom_f_x", "fom_f_y"])
                .map(String::from)
                .collect();
            let p = out.join("forces.csv");
            write_table(&p, &headers, &rows)?;
            files.push(p);
            force_plot = Some((fom, rom_series));
        }
    }

    if svg {
        let shown = meta.rank.min(4);
        let mut series = Vec::new();
        for i in 0..shown {
            series.push(Series {
                label: format!("a{} ROM", i + 1),
                x: traj.times.clone(),
                y: pred_u.mode(i),
            });
            series.push(Series {
                label: format!("a{} FOM", i + 1),
                x: exact_u.times.clone(),
                y: exact_u.mode(i),
            });
        }
        let p = out.join("modes.svg");
        write_line_plot(&p, &format!("Velocity coefficients, model {}", meta.variant), "t [s]", "a_i", &series)?;
        files.push(p);
        if let Some((fom, rom)) = force_plot {
            let series = vec![
                Series {
                    label: "drag ROM".into(),
                    x: rom.iter().map(|r| r.0).collect(),
                    y: rom.iter().map(|r| r.1[0]).collect(),
                },
                Series {
                    label: "drag FOM".into(),
                    x: fom.times.clone(),
                    y: fom.samples.iter().map(|s| s.total()[0]).collect(),
                },
                Series {
                    label: "lift ROM".into(),
                    x: rom.iter().map(|r| r.0).collect(),
                    y: rom.iter().map(|r| r.1[1]).collect(),
                },
                Series {
                    label: "lift FOM".into(),
                    x: fom.times.clone(),
                    y: fom.samples.iter().map(|s| s.total()[1]).collect(),
                },
            ];
            let p = out.join("forces.svg");
            write_line_plot(&p, "Body force per unit depth", "t [s]", "F [N/m]", &series)?;
            files.push(p);
        }
    }
    Ok(EvalSummary {
        velocity,
        pressure: pressure.map(|(r, _)| r),
        files,
    })
}

/// Wall-clock comparison of the full model of `config` with the assembled
/// reduced model; writes a one-row CSV.
#[allow(clippy::too_many_arguments)]
pub fn bench_stage(
    config: &FomConfig,
    bundle_path: &Path,
    closure: Option<&Path>,
    variant: RomVariant,
    duration: f64,
    fom_duration: Option<f64>,
    out: &Path,
) -> Result<SpeedupReport> {
    let (model, bundle) = load_model(bundle_path, closure, variant)?;
    let settings = IntegrationSettings::for_interval(bundle.snapshot_interval);
    let report = benchmark_speedup(config, &model, bundle.a0(), duration, fom_duration, settings)?;
    write_records(
        out,
        &[
            "variant",
            "n_cells",
            "n_modes",
            "fom_seconds_per_second",
            "rom_seconds_per_second",
            "ratio",
            "fom_duration",
            "rom_duration",
            "fom_scaled",
        ]
        .map(String::from),
        &[vec![
            variant.to_string(),
            report.n_cells.to_string(),
            report.n_modes.to_string(),
            fmt_num(report.fom_seconds_per_second),
            fmt_num(report.rom_seconds_per_second),
            fmt_num(report.ratio),
            fmt_num(report.fom_duration),
            fmt_num(report.rom_duration),
            report.fom_scaled.to_string(),
        ]],
    )?;
    Ok(report)
}

/// Projected training trajectory stored in a bundle.
pub fn training_trajectory(bundle: &OperatorBundle<f64>) -> Result<ModalTrajectory<f64>> {
    ModalTrajectory::new(PodVariable::Velocity, bundle.times.clone(), bundle.velocity.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_sample() {
        let t = [0.0, 0.1, 0.2, 0.3];
        assert_eq!(nearest(&t, 0.14), 1);
        assert_eq!(nearest(&t, 0.16), 2);
        assert_eq!(nearest(&t, -1.0), 0);
        assert_eq!(nearest(&t, 9.0), 3);
    }

    #[test]
    fn closure_settings_fill_defaults() {
        let s: ClosureSettings = serde_json::from_str(r#"{ "elm": { "hidden_size": 25 } }"#).unwrap();
        assert_eq!(s.elm.hidden_size, 25);
        assert_eq!(s.elm.regularization, 0.0);
        assert_eq!(s.narx, NarxConfig::default());
        let empty: ClosureSettings = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, ClosureSettings::default());
    }

    #[test]
    fn spectrum_is_cumulative() {
        let dir = tempfile::tempdir().unwrap();
        let basis = PodBasis::<f64> {
            variable: PodVariable::Pressure,
            n_components: 1,
            mean: vec![0.0; 2],
            modes: vec![vec![1.0, 0.0]],
            eigenvalues: vec![3.0, 1.0],
            weights: vec![1.0; 2],
            lift: None,
        };
        let p = dir.path().join("s.csv");
        write_spectrum(&p, &basis).unwrap();
        let (_, rows) = pbrom_core::io::read_table(&p).unwrap();
        assert_eq!(rows, vec![vec![1.0, 3.0, 0.75], vec![2.0, 1.0, 1.0]]);
    }
}
