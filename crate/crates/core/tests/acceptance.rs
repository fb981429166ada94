//! Acceptance suite. Runs every criterion sequentially (timing criteria
//! must not compete with other tests for cores), prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use barycentric_rom::manifold::{
    exp_map, itsgm_interpolate, karcher_barycenter, log_map, subspace_distance, BarycenterInit,
    BarycenterOptions, BasisMatrix,
};
use barycentric_rom::pod::{compute_pod, SnapshotMatrix};
use barycentric_rom::rom::{
    direct_project, initial_condition, integrate_rom_sampled, interpolated_basis,
    update_reduced_model,
};
use barycentric_rom::solver::{run, BurgersSolver, Grid1D, InitialProfile, SolverConfig};
use barycentric_rom::study::{
    bench_operators, build_offline, compare_target, generate_snapshots, interpolation_weights,
    predict_barycentric, resample_periodic, InitialState, OfflineModel, OnlineOptions,
    StudyConfig, WeightSettings,
};
use barycentric_rom::weights::WeightVector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0))
}

/// Default study data shared by several criteria.
struct Study {
    cfg: StudyConfig,
    trained: Vec<SnapshotMatrix>,
    tests: Vec<SnapshotMatrix>,
    off: OfflineModel,
}

fn build_study() -> Study {
    let cfg = StudyConfig::default();
    let trained = generate_snapshots(&cfg, &cfg.trained_nu).expect("trained runs");
    let tests = generate_snapshots(&cfg, &cfg.test_nu).expect("test runs");
    let off = build_offline(cfg.grid().unwrap(), cfg.window(), &trained, cfg.q).expect("offline");
    Study {
        cfg,
        trained,
        tests,
        off,
    }
}

fn geometry_roundtrip() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 100 {
        let phi = BasisMatrix::new(random_matrix(&mut rng, 50, 5)).unwrap();
        let psi = BasisMatrix::new(random_matrix(&mut rng, 50, 5)).unwrap();
        let Ok((xi, _)) = log_map(&phi, &psi) else {
            continue;
        };
        let back = exp_map(&phi, &xi).unwrap();
        worst = worst.max(subspace_distance(back.matrix(), psi.matrix()).unwrap());
        pairs += 1;
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 5.0,
        format!("max subspace distance {worst:.2e}, {secs:.3} s"),
    )
}

fn barycenter_nodes(study: &Study) -> Outcome {
    let off = &study.off;
    let bases = off.basis_matrices();
    let settings = WeightSettings::default();
    let mut worst_dist: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    let mut worst_iter = 0;
    let mut ok = true;
    for (h, &nu) in off.params.iter().enumerate() {
        let (neighbors, w) = interpolation_weights(&off.params, nu, &settings).unwrap();
        let local: Vec<BasisMatrix> = neighbors.iter().map(|&i| bases[i].clone()).collect();
        let lw: Vec<f64> = neighbors.iter().map(|&i| w.values[i]).collect();
        let init = neighbors.iter().position(|&i| i == h).unwrap();
        let opts = BarycenterOptions {
            init: BarycenterInit::Index(init),
            ..BarycenterOptions::default()
        };
        match karcher_barycenter(&local, &lw, &opts) {
            Ok(r) => {
                let d = subspace_distance(r.representative.matrix(), bases[h].matrix()).unwrap();
                worst_dist = worst_dist.max(d);
                worst_grad = worst_grad.max(r.final_gradient_norm);
                worst_iter = worst_iter.max(r.iterations);
            }
            Err(_) => ok = false,
        }
    }
    outcome(
        ok && worst_dist < 1e-8 && worst_grad <= 1e-10 && worst_iter <= 5,
        format!("distance {worst_dist:.2e}, gradient {worst_grad:.2e}, iterations {worst_iter}"),
    )
}

fn update_exactness(study: &Study) -> Outcome {
    let clock = Instant::now();
    let off = &study.off;
    let bases = off.basis_matrices();
    let ip = off.inner_product();
    let np = off.params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for trial in 0..20 {
        // Convex weights for half the trials, signed (Lagrange-like) for the rest.
        let raw: Vec<f64> = (0..np)
            .map(|_| {
                if trial % 2 == 0 {
                    rng.random_range(0.05..1.0)
                } else {
                    rng.random_range(-0.4..1.0)
                }
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        let w = WeightVector {
            values: raw.iter().map(|x| x / sum).collect(),
            target: 0.08,
        };
        let opts = BarycenterOptions::default();
        let rotations = match karcher_barycenter(&bases, &w.values, &opts) {
            Ok(r) => r.rotations,
            Err(barycentric_rom::Error::NotConverged { last, .. }) => last.rotations,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let nu = rng.random_range(0.05..0.11);
        let updated = update_reduced_model(&off.tensors, &w, &rotations, nu).unwrap();
        let basis = interpolated_basis(&bases, &w, &rotations).unwrap();
        let direct = direct_project(&basis, &off.mean, &ip, &off.grid, nu, None).unwrap();
        worst = worst.max(updated.relative_difference(&direct));
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        failures == 0 && worst < 1e-10 && secs < 30.0,
        format!("max relative Frobenius mismatch {worst:.2e}, {secs:.2} s"),
    )
}

fn parametric_accuracy(study: &Study, setup_s: f64) -> Outcome {
    let clock = Instant::now();
    let cfg = &study.cfg;
    let mut ok = true;
    let mut lines = Vec::new();
    for truth in &study.tests {
        match compare_target(&study.off, truth, &cfg.weights, cfg.tol, cfg.max_iter) {
            Ok(row) => {
                let floor = (2.0 * row.truth_pod).max(1.0);
                ok &= row.barycentric <= floor && row.barycentric <= 2.0 * row.itsgm;
                lines.push(format!(
                    "nu={} bary={:.4}% itsgm={:.4}% truth-pod={:.4}%",
                    row.nu, row.barycentric, row.itsgm, row.truth_pod
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("nu={} error: {e}", truth.param));
            }
        }
    }
    let secs = setup_s + clock.elapsed().as_secs_f64();
    outcome(
        ok && secs < 300.0,
        format!("{}; {secs:.1} s incl. data generation", lines.join("; ")),
    )
}

fn trained_consistency(study: &Study) -> Outcome {
    let off = &study.off;
    let ip = off.inner_product();
    let w = &off.window;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (h, snaps) in study.trained.iter().enumerate() {
        let u0 = snaps.values.column(0).into_owned();
        let opts = OnlineOptions::from_config(&study.cfg, InitialState::Field(u0.clone()));
        let pred = match predict_barycentric(off, snaps.param, &opts) {
            Ok(p) => p,
            Err(_) => {
                ok = false;
                continue;
            }
        };
        let basis = &off.bases[h].modes;
        let model = direct_project(basis, &off.mean, &ip, &off.grid, snaps.param, None).unwrap();
        let a0 = initial_condition(basis, &off.mean, &ip, &u0).unwrap();
        let single = integrate_rom_sampled(&model, &a0, w.t0, w.dt, w.steps(), w.save_every)
            .unwrap()
            .rotated(&pred.rotations[h]);
        for (a, b) in pred.trajectory.alphas.iter().zip(&single.alphas) {
            worst = worst.max((a - b).amax());
        }
    }
    outcome(
        ok && worst < 1e-8,
        format!("max reduced-coordinate deviation {worst:.2e}"),
    )
}

fn update_scaling(study: &Study) -> Outcome {
    let clock = Instant::now();
    let settings = WeightSettings::default();
    let mut rows = Vec::new();
    for nx in [2_000, 20_000] {
        let trained: Vec<SnapshotMatrix> = study
            .trained
            .iter()
            .map(|s| resample_periodic(s, nx).unwrap())
            .collect();
        let grid = Grid1D::new(nx, study.cfg.length).unwrap();
        let off = build_offline(grid, study.cfg.window(), &trained, study.cfg.q).unwrap();
        rows.push(bench_operators(&off, 0.08, &settings, 21, 50).unwrap());
    }
    let update_ratio = rows[1].barycentric_update_s / rows[0].barycentric_update_s;
    let direct_ratio = rows[1].direct_projection_s / rows[0].direct_projection_s;
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        update_ratio < 1.5 && direct_ratio > 5.0 && secs < 120.0,
        format!(
            "update {:.2e}s -> {:.2e}s (x{update_ratio:.2}), direct {:.2e}s -> {:.2e}s (x{direct_ratio:.1}), {secs:.1} s",
            rows[0].barycentric_update_s,
            rows[1].barycentric_update_s,
            rows[0].direct_projection_s,
            rows[1].direct_projection_s
        ),
    )
}

/// Heat-limit runs started from `sin x`: returns the final field and the
/// grid.
fn heat_run(n: usize, nu: f64, dt: f64, steps: usize) -> (DVector<f64>, Grid1D) {
    let grid = Grid1D::new(n, 2.0 * std::f64::consts::PI).unwrap();
    let cfg = SolverConfig {
        nu,
        dt,
        steps,
        initial: InitialProfile::Sine,
        save_every: steps,
        transient: 0,
        convection: false,
    };
    let snaps = run(&cfg, &grid).unwrap();
    (snaps.values.column(snaps.len() - 1).into_owned(), grid)
}

fn solver_verification() -> Outcome {
    let nu = 0.1;
    let t_end: f64 = 1.0;

    // Temporal: against the semi-discrete solution, so only the time error remains.
    let mut temporal = Vec::new();
    for dt in [0.02f64, 0.01, 0.005] {
        let steps = (t_end / dt).round() as usize;
        let (u, grid) = heat_run(64, nu, dt, steps);
        let dx = grid.dx();
        let mu = 4.0 / (dx * dx) * (0.5 * dx).sin().powi(2);
        let exact = grid.points().map(|x| x.sin() * (-nu * mu * t_end).exp());
        temporal.push((u - exact).amax());
    }
    // Spatial: against the time-discrete solution with the exact eigenvalue,
    // so only the space error remains.
    let mut spatial = Vec::new();
    let dt: f64 = 0.01;
    let steps = (t_end / dt).round() as usize;
    for n in [16, 32, 64] {
        let (u, grid) = heat_run(n, nu, dt, steps);
        let amp = (1.0 + nu * dt).powi(-(steps as i32));
        let exact = grid.points().map(|x| x.sin() * amp);
        spatial.push((u - exact).amax());
    }
    let t_ratios = [temporal[0] / temporal[1], temporal[1] / temporal[2]];
    let s_ratios = [spatial[0] / spatial[1], spatial[1] / spatial[2]];

    // Momentum: full nonlinear stepping of the default profile.
    let grid = Grid1D::new(256, 2.0 * std::f64::consts::PI).unwrap();
    let solver = BurgersSolver::new(grid, 0.05, 1e-3, true).unwrap();
    let mut prev = InitialProfile::TwoMode.sample(&grid).unwrap();
    let mut cur = prev.clone();
    let momentum = |u: &DVector<f64>| u.sum() * grid.dx();
    let mut drift: f64 = 0.0;
    for _ in 0..500 {
        let next = solver.advance(&cur, &prev).unwrap();
        drift = drift.max((momentum(&next) - momentum(&cur)).abs());
        prev = std::mem::replace(&mut cur, next);
    }

    let first_order = t_ratios.iter().all(|r| (1.8..2.2).contains(r));
    let second_order = s_ratios.iter().all(|r| (3.6..4.4).contains(r));
    outcome(
        first_order && second_order && drift < 1e-12,
        format!(
            "dt ratios {:.3}/{:.3}, dx ratios {:.3}/{:.3}, momentum drift {drift:.2e} per step",
            t_ratios[0], t_ratios[1], s_ratios[0], s_ratios[1]
        ),
    )
}

fn pod_oracle(study: &Study) -> Outcome {
    let ip = study.off.inner_product();
    let q = study.cfg.q;
    let mut worst_eig: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for snaps in &study.trained {
        let fluct = snaps.fluctuations(&study.off.mean).unwrap();
        let pod = compute_pod(&fluct, &ip, q).unwrap();
        let sv = ip.sqrt_apply(&fluct.values).singular_values();
        let mut sq: Vec<f64> = sv.iter().map(|s| s * s).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        for k in 0..q {
            worst_eig = worst_eig.max((pod.eigenvalues[k] - sq[k]).abs() / sq[k]);
        }
        let gram = ip.gram(pod.modes.matrix(), pod.modes.matrix());
        worst_orth = worst_orth.max((gram - DMatrix::identity(q, q)).amax());
    }
    outcome(
        worst_eig < 1e-10 && worst_orth < 1e-10,
        format!("eigenvalue mismatch {worst_eig:.2e}, W-orthonormality defect {worst_orth:.2e}"),
    )
}

fn itsgm_nodes(study: &Study) -> Outcome {
    let bases = study.off.basis_matrices();
    let params = &study.off.params;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (h, &nu) in params.iter().enumerate() {
        for reference in 0..params.len() {
            match itsgm_interpolate(&bases, params, nu, reference) {
                Ok(b) => {
                    worst = worst.max(subspace_distance(b.matrix(), bases[h].matrix()).unwrap())
                }
                Err(_) => ok = false,
            }
        }
    }
    outcome(ok && worst < 1e-8, format!("max subspace distance {worst:.2e}"))
}

fn main() -> ExitCode {
    let setup = Instant::now();
    let study = build_study();
    let setup_s = setup.elapsed().as_secs_f64();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 geometry roundtrip", Box::new(geometry_roundtrip)),
        ("2 barycenter node reproduction", Box::new(|| barycenter_nodes(&study))),
        ("3 barycentric update exactness", Box::new(|| update_exactness(&study))),
        ("4 parametric accuracy", Box::new(|| parametric_accuracy(&study, setup_s))),
        ("5 trained-point consistency", Box::new(|| trained_consistency(&study))),
        ("6 online-update scaling", Box::new(|| update_scaling(&study))),
        ("7 solver verification", Box::new(solver_verification)),
        ("8 POD oracle", Box::new(|| pod_oracle(&study))),
        ("9 ITSGM node reproduction", Box::new(|| itsgm_nodes(&study))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
