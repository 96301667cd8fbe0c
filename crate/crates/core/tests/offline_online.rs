//! Offline/online chain on a small Burgers case, through the file formats.

use pbrom_core::closure::{build_residual_dataset, elm_train, ClosureModel, ElmConfig};
use pbrom_core::eval::rmse_per_mode;
use pbrom_core::fom::{run_and_collect, CaseKind, FomConfig, InitialCondition};
use pbrom_core::galerkin::{build_operators, build_viscosity_model, FlowOperators, ViscosityVariant};
use pbrom_core::io::{
    load_basis, load_bundle, load_closure, read_ensemble, save_basis, save_bundle, save_closure, write_ensemble,
    OperatorBundle,
};
use pbrom_core::pod::{pod_modes, project_ensemble, PodVariable};
use pbrom_core::rom::{assemble_model, integrate, IntegrationSettings, RomVariant};
use pbrom_core::GridSpec;

fn config() -> FomConfig {
    FomConfig {
        case: CaseKind::Burgers1d,
        grid: GridSpec {
            nx: 24,
            ny: 1,
            dx: 2.0 * std::f64::consts::PI / 24.0,
            dy: 1.0,
            periodic_x: true,
            periodic_y: true,
            obstacle: None,
        },
        nu_m: 0.05,
        dt: 0.0025,
        snapshot_interval: 0.05,
        horizon: 2.0,
        initial_condition: InitialCondition::RandomSpectrum {
            mean: 0.5,
            k_max: 8,
            amplitude: 0.4,
            slope: 1.0,
        },
        seed: 2,
        ..FomConfig::default()
    }
}

#[test]
fn stored_artifacts_reproduce_the_in_memory_model() {
    let dir = tempfile::tempdir().unwrap();
    let ens = run_and_collect::<f64>(&config()).unwrap();
    assert_eq!(ens.n_snapshots(), 41);
    let hash = write_ensemble(&dir.path().join("ens"), &ens).unwrap();
    let (ens, h2) = read_ensemble::<f64>(&dir.path().join("ens")).unwrap();
    assert_eq!(hash, h2);

    let vb = pod_modes(&ens, PodVariable::Velocity, Some(5)).unwrap();
    save_basis(&dir.path().join("v.basis"), &vb, &hash).unwrap();
    let (vb2, h3) = load_basis::<f64>(&dir.path().join("v.basis")).unwrap();
    assert_eq!(vb2, vb);
    assert_eq!(h3, hash);

    let ctx = FlowOperators::new(ens.grid().unwrap(), ens.boundaries()).unwrap();
    let visc = build_viscosity_model(&ens, ViscosityVariant::SpatioTemporalMean).unwrap();
    let ops = build_operators(&ctx, &vb, None, &visc).unwrap();
    let exact = project_ensemble(&ens, &vb).unwrap();
    let data = build_residual_dataset(&ens, &vb, &ops, &visc).unwrap();
    let elm = ClosureModel::Elm(elm_train(&data, ElmConfig::default()).unwrap());

    let bundle = OperatorBundle {
        case_hash: hash.clone(),
        operators: ops.clone(),
        viscosity: visc.clone(),
        snapshot_interval: ens.snapshot_interval(),
        times: exact.times.clone(),
        velocity: exact.coefficients.clone(),
        pressure: vec![Vec::new(); exact.len()],
    };
    save_bundle(&dir.path().join("a.ops"), &bundle).unwrap();
    save_closure(&dir.path().join("elm.cl"), &elm, &hash).unwrap();
    let back = load_bundle::<f64>(&dir.path().join("a.ops")).unwrap();
    let (elm2, _) = load_closure::<f64>(&dir.path().join("elm.cl")).unwrap();

    let settings = IntegrationSettings::for_interval(ens.snapshot_interval());
    let run = |ops, visc, cl| {
        let m = assemble_model(RomVariant::A1, ops, visc, Some(cl)).unwrap();
        integrate(&m, &exact.coefficients[0], 0.0, 2.0, settings).unwrap()
    };
    let a = run(ops, visc, elm);
    let b = run(back.operators, back.viscosity, elm2);
    assert_eq!(a.velocity, b.velocity);

    // the closure should not make the truncated model worse on its own training window
    let plain = assemble_model(RomVariant::A, bundle.operators.clone(), bundle.viscosity.clone(), None).unwrap();
    let p = integrate(&plain, &exact.coefficients[0], 0.0, 2.0, settings).unwrap();
    let err = |t: &pbrom_core::rom::RomTrajectory<f64>| rmse_per_mode(&t.velocity_trajectory().unwrap(), &exact).unwrap().total();
    assert!(err(&a) <= err(&p), "{} vs {}", err(&a), err(&p));
}
