//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any fails. Ensembles are generated from the bundled configs.

#![allow(clippy::type_complexity, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pbrom_cli::*;
use pbrom_core::closure::{build_residual_dataset, elm_train, narx_train, ElmConfig, NarxConfig, ResidualDataset};
use pbrom_core::eval::{compute_forces, rmse_per_mode};
use pbrom_core::fom::{FomConfig, SnapshotEnsemble};
use pbrom_core::galerkin::{
    build_operators, build_viscosity_model, build_viscosity_model_from, direct_rhs, eval_rhs, FlowOperators,
    GalerkinOperators, ViscosityVariant,
};
use pbrom_core::io::read_ensemble;
use pbrom_core::pod::{
    choose_rank, pod_modes, project_ensemble, reconstruct, snapshot_matrix, PodBasis, PodVariable, RankCriterion,
};
use pbrom_core::rom::{assemble_model, integrate, IntegrationSettings, RomVariant};
use pbrom_core::{BoundaryLabel, Field, Variable, VectorField};

type Check = Result<(bool, String), String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> FomConfig {
    load_config(&root().join("configs").join(name)).expect("bundled config")
}

fn e<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

struct Cases {
    work: PathBuf,
    burgers: PathBuf,
    obstacle: PathBuf,
}

fn pod_suite(dir: &Path) -> Result<(bool, String), String> {
    let (ens, _) = read_ensemble::<f64>(dir).map_err(e)?;
    let mut vars = vec![PodVariable::Velocity];
    if ens.variables().contains(&Variable::P) {
        vars.push(PodVariable::Pressure);
    }
    let mut ok = true;
    let mut notes = Vec::new();
    for var in vars {
        let b = pod_modes(&ens, var, None).map_err(e)?;
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for i in 0..b.rank() {
            for j in 0..=i {
                let d = b.inner(&b.modes[i], &b.modes[j]);
                if i == j {
                    diag = diag.max((d - 1.0).abs());
                } else {
                    off = off.max(d.abs());
                }
            }
        }
        let sorted = b.eigenvalues.windows(2).all(|p| p[0] >= p[1]) && b.eigenvalues.iter().all(|&l| l >= 0.0);
        let snaps = snapshot_matrix(&ens, var).map_err(e)?;
        let m = snaps.len() as f64;
        let trace: f64 = snaps
            .iter()
            .map(|s| {
                let f: Vec<f64> = s.iter().zip(&b.mean).map(|(a, c)| a - c).collect();
                b.inner(&f, &f)
            })
            .sum::<f64>()
            / m;
        let sum: f64 = b.eigenvalues.iter().sum();
        let trace_err = (sum - trace).abs() / trace;
        let mut recon = 0.0f64;
        for s in &snaps {
            let a: Vec<f64> = b
                .modes
                .iter()
                .map(|phi| {
                    let f: Vec<f64> = s.iter().zip(&b.mean).map(|(x, c)| x - c).collect();
                    b.inner(&f, phi)
                })
                .collect();
            let r = reconstruct(&b, &a).map_err(e)?;
            let err: f64 = r.iter().zip(s).zip(&b.weights.repeat(b.n_components)).map(|((x, y), w)| w * (x - y).powi(2)).sum();
            recon = recon.max(err.sqrt() / b.inner(s, s).sqrt().max(1e-300));
        }
        let pass = off <= 1e-10 && diag <= 1e-10 && sorted && trace_err <= 1e-10 && recon <= 1e-8;
        ok &= pass;
        notes.push(format!(
            "{var} rank {}: offdiag {off:.1e}, trace {trace_err:.1e}, recon {recon:.1e}",
            b.rank()
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion1(c: &Cases) -> Check {
    let (a, na) = pod_suite(&c.burgers)?;
    let (b, nb) = pod_suite(&c.obstacle)?;
    Ok((a && b, format!("burgers [{na}] obstacle [{nb}]")))
}

fn random_coeffs(b: &PodBasis<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    b.eigenvalues[..b.rank()]
        .iter()
        .map(|l| (rng.random::<f64>() * 2.0 - 1.0) * 2.0 * l.sqrt())
        .collect()
}

fn consistency(ens: &SnapshotEnsemble<f64>, r: usize, rp: usize, seed: u64) -> Result<f64, String> {
    let vb = pod_modes(ens, PodVariable::Velocity, Some(r)).map_err(e)?;
    let pb = if rp > 0 {
        Some(pod_modes(ens, PodVariable::Pressure, Some(rp)).map_err(e)?)
    } else {
        None
    };
    let ctx = FlowOperators::new(ens.grid().map_err(e)?, ens.boundaries()).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for variant in [
        ViscosityVariant::SpatioTemporalMean,
        ViscosityVariant::TemporalMean,
        ViscosityVariant::TemporalMeanPlusMode1,
    ] {
        let visc = build_viscosity_model(ens, variant).map_err(e)?;
        let ops = build_operators(&ctx, &vb, pb.as_ref(), &visc).map_err(e)?;
        for _ in 0..10 {
            let a = random_coeffs(&vb, &mut rng);
            let ap = pb.as_ref().map_or(Vec::new(), |p| random_coeffs(p, &mut rng));
            let a1 = visc.a1_at(rng.random::<f64>() * ens.horizon());
            let tensor = eval_rhs(&ops, &a, &ap, a1).map_err(e)?;
            let direct = direct_rhs(&ctx, &vb, pb.as_ref(), &visc, &a, &ap, a1).map_err(e)?;
            worst = worst.max(rel(&tensor, &direct));
        }
    }
    Ok(worst)
}

fn criterion2(c: &Cases) -> Check {
    let (b, _) = read_ensemble::<f64>(&c.burgers).map_err(e)?;
    let (o, _) = read_ensemble::<f64>(&c.obstacle).map_err(e)?;
    let wb = consistency(&b, 10, 0, 1)?;
    let wo = consistency(&o, 8, 8, 2)?;
    Ok((wb <= 1e-10 && wo <= 1e-10, format!("worst relative mismatch burgers {wb:.2e}, obstacle {wo:.2e}")))
}

fn criterion3(c: &Cases) -> Check {
    let (ens, _) = read_ensemble::<f64>(&c.burgers).map_err(e)?;
    let vb = pod_modes(&ens, PodVariable::Velocity, None).map_err(e)?;
    let ctx = FlowOperators::new(ens.grid().map_err(e)?, ens.boundaries()).map_err(e)?;
    let visc = build_viscosity_model(&ens, ViscosityVariant::SpatioTemporalMean).map_err(e)?;
    let ops = build_operators(&ctx, &vb, None, &visc).map_err(e)?;
    let exact = project_ensemble(&ens, &vb).map_err(e)?;
    let model = assemble_model(RomVariant::A, ops, visc, None).map_err(e)?;
    let t0 = ens.times()[0];
    let traj = integrate(
        &model,
        &exact.coefficients[0],
        t0,
        t0 + ens.horizon(),
        IntegrationSettings::for_interval(ens.snapshot_interval()),
    )
    .map_err(e)?;
    if traj.diverged() {
        return Ok((false, format!("diverged at {:?}", traj.diverged_at)));
    }
    let rep = rmse_per_mode(&traj.velocity_trajectory().map_err(e)?, &exact).map_err(e)?;
    let worst = (0..vb.rank())
        .map(|i| {
            let rms = (exact.coefficients.iter().map(|a| a[i] * a[i]).sum::<f64>() / exact.len() as f64).sqrt();
            rep.per_mode[i] / rms
        })
        .fold(0.0, f64::max);
    Ok((worst <= 1e-3, format!("rank {}, worst RMSE / RMS amplitude {worst:.2e}", vb.rank())))
}

fn criterion4(c: &Cases) -> Check {
    let (ens, _) = read_ensemble::<f64>(&c.burgers).map_err(e)?;
    let vb = pod_modes(&ens, PodVariable::Velocity, None).map_err(e)?;
    let r = choose_rank(&vb, RankCriterion::Energy(0.5)).map_err(e)?;
    let vb = vb.truncated(r).map_err(e)?;
    let ctx = FlowOperators::new(ens.grid().map_err(e)?, ens.boundaries()).map_err(e)?;
    let visc = build_viscosity_model(&ens, ViscosityVariant::SpatioTemporalMean).map_err(e)?;
    let ops = build_operators(&ctx, &vb, None, &visc).map_err(e)?;
    let data = build_residual_dataset(&ens, &vb, &ops, &visc).map_err(e)?;
    let elm = elm_train(&data, ElmConfig::default()).map_err(e)?;
    let narx = narx_train(&data, NarxConfig::default()).map_err(e)?;
    let re = elm.train_rmse / elm.zero_rmse;
    let rn = narx.report.train_rmse / narx.report.zero_rmse;
    let cl = narx.report.closed_loop_rmse / narx.report.zero_rmse;
    Ok((
        re <= 0.5 && rn <= 0.5,
        format!("rank {r}: ELM {re:.3}, NARX one-step {rn:.3} (closed-loop {cl:.3}) of the zero predictor"),
    ))
}

fn criterion5(c: &Cases) -> Check {
    let dir = c.work.join("ladder");
    let basis = dir.join("basis");
    pod_stage(&c.obstacle, &basis, None).map_err(e)?;
    let rank = RankCriterion::Explicit(8);
    let prank = Some(RankCriterion::Explicit(8));
    build_stage(&c.obstacle, &basis, RomVariant::A, rank, prank, &dir.join("a.ops")).map_err(e)?;
    build_stage(&c.obstacle, &basis, RomVariant::B, rank, prank, &dir.join("b.ops")).map_err(e)?;
    let settings = ClosureSettings::default();
    train_stage(&dir.join("b.ops"), &c.obstacle, pbrom_core::closure::ClosureKind::Elm, None, &settings, &dir.join("elm.cl"))
        .map_err(e)?;
    let mut totals = BTreeMap::new();
    for (v, ops, cl) in [
        (RomVariant::A, "a.ops", None),
        (RomVariant::B, "b.ops", None),
        (RomVariant::D, "b.ops", Some(dir.join("elm.cl"))),
    ] {
        let csv = dir.join(format!("{v}.csv"));
        let traj = rom_run_stage(&dir.join(ops), cl.as_deref(), v, None, None, &csv).map_err(e)?;
        if traj.diverged() {
            totals.insert(v.to_string(), f64::INFINITY);
            continue;
        }
        let s = eval_stage(&csv, &c.obstacle, &basis, &dir.join(ops), &dir.join(format!("eval_{v}")), false)
            .map_err(e)?;
        totals.insert(v.to_string(), s.velocity.total());
    }
    let (a, b, d) = (totals["A"], totals["B"], totals["D"]);
    Ok((d <= b && b <= a, format!("summed velocity RMSE A {a:.4e}, B {b:.4e}, D {d:.4e}")))
}

fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = m.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        rhs.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            for j in 0..rhs[i].len() {
                rhs[i][j] -= f * rhs[k][j];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..rhs[k].len() {
            let s: f64 = (k + 1..n).map(|i| m[k][i] * rhs[i][j]).sum();
            rhs[k][j] = (rhs[k][j] - s) / m[k][k];
        }
    }
    rhs
}

fn criterion6(_: &Cases) -> Check {
    let mut worst = 0.0f64;
    for rep in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + rep);
        let (ns, nf, h) = (25 + rep as usize, 2 + rep as usize % 3, 6 + rep as usize % 5);
        let mut draw = |n: usize| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>();
        let inputs: Vec<Vec<f64>> = (0..ns).map(|_| draw(nf)).collect();
        let targets: Vec<Vec<f64>> = (0..ns).map(|_| draw(nf)).collect();
        let data = ResidualDataset::new((0..ns).map(|j| j as f64).collect(), inputs, targets).map_err(e)?;
        let model = elm_train(&data, ElmConfig { hidden_size: h, seed: rep, regularization: 0.0 }).map_err(e)?;
        // (H Hᵀ) W²ᵀ = H Tᵀ
        let hidden: Vec<Vec<f64>> = data.inputs.iter().map(|x| model.hidden(x)).collect();
        let gram: Vec<Vec<f64>> = (0..h)
            .map(|k| (0..h).map(|l| hidden.iter().map(|g| g[k] * g[l]).sum()).collect())
            .collect();
        let rhs: Vec<Vec<f64>> = (0..h)
            .map(|k| (0..nf).map(|i| hidden.iter().zip(&data.targets).map(|(g, t)| g[k] * t[i]).sum()).collect())
            .collect();
        let x = solve_dense(gram, rhs);
        let ne: Vec<f64> = (0..nf).flat_map(|i| x.iter().map(move |row| row[i])).collect();
        worst = worst.max(rel(&model.w2, &ne));
    }
    Ok((worst <= 1e-8, format!("worst relative weight mismatch {worst:.2e} over 20 problems")))
}

fn criterion7(_: &Cases) -> Check {
    // damped rotation a' = L a
    let l = vec![-0.3, 2.0, -2.0, -0.3];
    let ops = GalerkinOperators::from_parts(
        2,
        0,
        vec![0.0; 2],
        l,
        vec![0.0; 8],
        vec![],
        None,
        None,
        vec![0.0; 2],
        vec![],
        vec![],
        vec![],
        vec![],
        None,
        None,
    )
    .map_err(e)?;
    let visc = build_viscosity_model_from(&[vec![0.0], vec![0.0]], &[0.0, 1.0], &[1.0], 0.01, ViscosityVariant::SpatioTemporalMean)
        .map_err(e)?;
    let model = assemble_model(RomVariant::A, ops, visc, None).map_err(e)?;
    let err = |dt: f64| -> Result<f64, String> {
        let tr = integrate(&model, &[1.0, 0.0], 0.0, 2.0, IntegrationSettings { dt, output_interval: 0.4 }).map_err(e)?;
        let a = tr.velocity.last().unwrap();
        let d = (-0.6f64).exp();
        Ok(((a[0] - d * 4f64.cos()).powi(2) + (a[1] + d * 4f64.sin()).powi(2)).sqrt())
    };
    let ratio = err(0.1)? / err(0.05)?;
    Ok(((12.0..=20.0).contains(&ratio), format!("error ratio {ratio:.3}")))
}

fn criterion8(c: &Cases) -> Check {
    let (ens, _) = read_ensemble::<f64>(&c.obstacle).map_err(e)?;
    let grid = ens.grid().map_err(e)?;
    let bcs = ens.boundaries();
    let n = grid.n_fluid();
    let rho = ens.fluid().rho;
    let body = BoundaryLabel::Body;
    let smax = grid
        .faces_with_label(body)
        .map(|f| f.area[0].abs().max(f.area[1].abs()))
        .fold(0.0, f64::max);
    let still = VectorField::zeros(2, n);
    let nu = Field::constant(Variable::NuT, n, ens.fluid().nu_m);
    let p0 = 2.5;
    let f = compute_forces(&grid, &bcs, &Field::constant(Variable::P, n, p0), &still, &nu, body, rho, 0.0).map_err(e)?;
    let uniform = f.pressure[0].abs().max(f.pressure[1].abs()) / (rho * p0 * smax);

    let j = ens.n_snapshots() / 2;
    let u = VectorField::from_stacked(2, &ens.velocity_stacked(j)).map_err(e)?;
    let p = ens.snapshots(Variable::P).map_err(e)?[j].clone();
    let at = |scale: f64, pref: f64| {
        let ps = Field::new(Variable::P, p.iter().map(|x| scale * x).collect());
        compute_forces(&grid, &bcs, &ps, &u, &nu, body, rho, pref)
    };
    // (3p − 0.6) − 0 = 3 (p − 0.2)
    let base = at(1.0, 0.2).map_err(e)?;
    let tripled = at(3.0, 0.6).map_err(e)?;
    let lin = (0..2)
        .map(|k| (tripled.pressure[k] - 3.0 * base.pressure[k]).abs() / base.pressure[k].abs().max(1e-300))
        .fold(0.0, f64::max);
    Ok((
        uniform <= 1e-12 && lin <= 1e-12,
        format!("uniform pressure force {uniform:.1e} of rho p max|s_f|, linearity defect {lin:.1e}"),
    ))
}

fn criterion9(c: &Cases) -> Check {
    let dir = c.work.join("bench");
    let basis = dir.join("basis");
    pod_stage(&c.obstacle, &basis, Some(20)).map_err(e)?;
    let r20 = RankCriterion::Explicit(20);
    build_stage(&c.obstacle, &basis, RomVariant::B, r20, Some(r20), &dir.join("b.ops")).map_err(e)?;
    let rep = bench_stage(&config("obstacle.json"), &dir.join("b.ops"), None, RomVariant::B, 1.0, None, &dir.join("bench.csv"))
        .map_err(e)?;
    Ok((
        rep.ratio >= 100.0 && rep.n_modes == 20,
        format!(
            "{} cells, {} modes: FOM {:.3e} s/s, ROM {:.3e} s/s, ratio {:.0}",
            rep.n_cells, rep.n_modes, rep.fom_seconds_per_second, rep.rom_seconds_per_second, rep.ratio
        ),
    ))
}

fn pbrom(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pbrom")).args(args).output().map_err(e)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("pbrom {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(config: &Path, dir: &Path, variants: &[(&str, Option<&str>)]) -> Result<(), String> {
    let d = |s: &str| dir.join(s).to_string_lossy().into_owned();
    let cfg = config.to_string_lossy().into_owned();
    pbrom(&["fom-run", "--config", &cfg, "--out", &d("ens"), "--seed", "5"])?;
    pbrom(&["pod", "--ensemble", &d("ens"), "--out", &d("basis")])?;
    for (v, kind) in variants {
        let ops = d(&format!("{v}.ops"));
        pbrom(&["build", "--ensemble", &d("ens"), "--basis", &d("basis"), "--variant", v, "--rank", "4", "--out", &ops])?;
        let traj = d(&format!("{v}.csv"));
        let mut run = vec!["rom-run", "--bundle", &ops, "--variant", v, "--out", &traj];
        let cl = d(&format!("{v}.closure"));
        if let Some(kind) = kind {
            pbrom(&["train-closure", "--bundle", &ops, "--ensemble", &d("ens"), "--kind", kind, "--seed", "9", "--out", &cl])?;
            run.extend(["--closure", &cl]);
        }
        pbrom(&run)?;
        let ev = d(&format!("eval_{v}"));
        pbrom(&["eval", "--trajectory", &traj, "--ensemble", &d("ens"), "--basis", &d("basis"), "--bundle", &ops, "--out", &ev, "--svg"])?;
    }
    Ok(())
}

fn tree(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in fs::read_dir(&p).map_err(e)? {
            let path = entry.map_err(e)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).map_err(e)?);
            }
        }
    }
    Ok(out)
}

fn criterion10(c: &Cases) -> Check {
    let mut short = config("obstacle.json");
    short.horizon = 1.0;
    short.spin_up = 0.5;
    let short_path = c.work.join("obstacle_short.json");
    fs::write(&short_path, serde_json::to_string_pretty(&short).map_err(e)?).map_err(e)?;
    let cases: [(&str, PathBuf, Vec<(&str, Option<&str>)>); 2] = [
        (
            "burgers",
            root().join("configs/burgers.json"),
            vec![("A", None), ("A1", Some("elm")), ("F", Some("narx"))],
        ),
        ("obstacle", short_path, vec![("C", None), ("E", Some("elm"))]),
    ];
    let mut n_files = 0;
    let mut diffs = Vec::new();
    for (name, cfg, variants) in &cases {
        let runs: Vec<PathBuf> = (0..2).map(|k| c.work.join(format!("det_{name}_{k}"))).collect();
        for r in &runs {
            pipeline(cfg, r, variants)?;
        }
        let (a, b) = (tree(&runs[0])?, tree(&runs[1])?);
        n_files += a.len();
        if a.keys().ne(b.keys()) {
            diffs.push(format!("{name}: file sets differ"));
        }
        for (k, v) in &a {
            if b.get(k) != Some(v) {
                diffs.push(format!("{name}/{}", k.display()));
            }
        }
    }
    if diffs.is_empty() {
        Ok((true, format!("{n_files} artifact files bit-identical across reruns")))
    } else {
        Ok((false, format!("differing: {}", diffs.join(", "))))
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let work = tmp.path().to_path_buf();
    let started = Instant::now();
    let cases = Cases {
        burgers: work.join("burgers"),
        obstacle: work.join("obstacle"),
        work,
    };
    for (name, dir) in [("burgers.json", &cases.burgers), ("obstacle.json", &cases.obstacle)] {
        let t = Instant::now();
        if let Err(err) = fom_run(&config(name), dir) {
            eprintln!("cannot generate the {name} ensemble: {err}");
            std::process::exit(1);
        }
        println!("generated {name} ensemble in {:.1} s", t.elapsed().as_secs_f64());
    }
    let criteria: [(&str, fn(&Cases) -> Check); 10] = [
        ("POD correctness", criterion1),
        ("Galerkin consistency", criterion2),
        ("full-rank Burgers fidelity", criterion3),
        ("closure training floor", criterion4),
        ("closure ladder D <= B <= A", criterion5),
        ("ELM least-squares exactness", criterion6),
        ("RK4 order", criterion7),
        ("force sanity", criterion8),
        ("speedup >= 100", criterion9),
        ("determinism", criterion10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match f(&cases) {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of 10 passed in {:.0} s",
        10 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
