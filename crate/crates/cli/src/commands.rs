use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use barycentric_rom::manifold::BasisMatrix;
use barycentric_rom::metrics::{format_f64, mean_error, Method};
use barycentric_rom::pod::{MeanField, PodBasis, SnapshotMatrix};
use barycentric_rom::rom::ReducedTrajectory;
use barycentric_rom::solver::Grid1D;
use barycentric_rom::study::{
    bench_operators, build_offline, compare_target, generate_snapshots, predict_barycentric,
    predict_itsgm, resample_periodic, InitialState, OfflineModel, OnlineOptions, StudyConfig,
    Timings,
};
use barycentric_rom::weights::WeightKind;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::archive;
use crate::error::{CliError, Result};
use crate::manifest::{
    read_verified, resolve, write_tracked, FileRef, OfflineEntry, RunEntry, RunManifest, RunRole,
    FILE_NAME,
};
use crate::matrix_file;
use crate::{Cli, Command, InitialArg, MethodArg, WeightArg};

pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    if cli.config.is_some() && !matches!(cli.command, Command::Generate) {
        return Err(CliError::Config(
            "--config applies to `generate`; later stages read the manifest".into(),
        ));
    }
    match &cli.command {
        Command::Generate => cmd_generate(cli),
        Command::Offline { manifest } => cmd_offline(cli, manifest.as_deref()),
        Command::Predict {
            manifest,
            nu,
            max_iter,
            allow_nonconverged,
            initial,
        } => cmd_predict(
            cli,
            manifest.as_deref(),
            *nu,
            *max_iter,
            *allow_nonconverged,
            *initial,
        ),
        Command::Compare { manifest, nu } => cmd_compare(cli, manifest.as_deref(), nu),
        Command::Bench {
            manifest,
            sizes,
            reps,
            batch,
            nu,
        } => cmd_bench(cli, manifest.as_deref(), sizes, *reps, *batch, *nu),
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn load_config(path: Option<&Path>) -> Result<StudyConfig> {
    let Some(path) = path else {
        return Ok(StudyConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn apply_overrides(cfg: &mut StudyConfig, cli: &Cli) -> Result<()> {
    if let Some(w) = cli.weights {
        cfg.weights.kind = match w {
            WeightArg::Lagrange => WeightKind::Lagrange,
            WeightArg::Idw => WeightKind::InverseDistance,
        };
    }
    if let Some(n) = cli.neighbors {
        cfg.weights.neighbors = n;
    }
    if let Some(q) = cli.q {
        cfg.q = q;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(CliError::Config("--tol must be positive".into()));
        }
        cfg.tol = tol;
    }
    cfg.validate().map_err(config_err)
}

fn manifest_location(cli: &Cli, explicit: Option<&Path>) -> (PathBuf, PathBuf) {
    let path = explicit.map_or_else(|| cli.out.join(FILE_NAME), Path::to_path_buf);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    (path, dir)
}

fn load_manifest(path: &Path) -> Result<RunManifest> {
    RunManifest::load(path).map_err(|e| match e {
        CliError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingData(format!("{} not found", path.display()))
        }
        other => other,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_matrix(dir: &Path, file: &FileRef) -> Result<DMatrix<f64>> {
    let bytes = read_verified(dir, file)?;
    matrix_file::decode(&bytes).map_err(|reason| CliError::Format {
        path: resolve(dir, file),
        reason,
    })
}

fn expect_shape(dir: &Path, file: &FileRef, m: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if m.shape() == shape {
        Ok(())
    } else {
        Err(CliError::Format {
            path: resolve(dir, file),
            reason: format!("is {:?}, expected {shape:?}", m.shape()),
        })
    }
}

/// Sample times of the stored snapshots, matching the solver's bookkeeping.
fn snapshot_times(cfg: &StudyConfig) -> Vec<f64> {
    (0..cfg.snapshots)
        .map(|j| (cfg.transient + j * cfg.save_every) as f64 * cfg.dt)
        .collect()
}

fn load_snapshots(dir: &Path, run: &RunEntry, cfg: &StudyConfig) -> Result<SnapshotMatrix> {
    let values = read_matrix(dir, &run.snapshots)?;
    expect_shape(dir, &run.snapshots, &values, (cfg.nx, cfg.snapshots))?;
    Ok(SnapshotMatrix::new(values, snapshot_times(cfg), run.nu)?)
}

fn nu_tag(nu: f64) -> String {
    format!("nu{nu}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn cmd_generate(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_overrides(&mut cfg, cli)?;
    let mut sorted = cfg.trained_nu.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("duplicate trained viscosities".into()));
    }
    if cfg.trained_nu.iter().chain(&cfg.test_nu).any(|&nu| !(nu > 0.0)) {
        return Err(CliError::Config("viscosities must be positive".into()));
    }
    let out = &cli.out;
    create_dir(out)?;

    let roles: Vec<(f64, RunRole)> = cfg
        .trained_nu
        .iter()
        .map(|&nu| (nu, RunRole::Trained))
        .chain(cfg.test_nu.iter().map(|&nu| (nu, RunRole::Test)))
        .collect();
    let nus: Vec<f64> = roles.iter().map(|r| r.0).collect();
    let snaps = generate_snapshots(&cfg, &nus)?;

    let mut manifest = RunManifest::new(cfg);
    let mut written = Vec::new();
    for (i, ((nu, role), s)) in roles.into_iter().zip(&snaps).enumerate() {
        let kind = match role {
            RunRole::Trained => "trained",
            RunRole::Test => "test",
        };
        let rel = format!("snapshots/{kind}_{i:02}_{}.bin", nu_tag(nu));
        let file = write_tracked(out, &rel, &matrix_file::encode(&s.values))?;
        written.push(out.join(&rel));
        manifest.runs.push(RunEntry {
            nu,
            role,
            snapshots: file,
        });
    }
    let path = out.join(FILE_NAME);
    manifest.save(&path)?;
    written.push(path);
    Ok(written)
}

pub fn cmd_offline(cli: &Cli, manifest: Option<&Path>) -> Result<Vec<PathBuf>> {
    let (path, dir) = manifest_location(cli, manifest);
    let mut m = load_manifest(&path)?;
    let mut cfg = m.config.clone();
    apply_overrides(&mut cfg, cli)?;
    let runs: Vec<RunEntry> = m.trained().cloned().collect();
    if runs.is_empty() {
        return Err(CliError::MissingData("manifest lists no trained runs".into()));
    }
    let trained = runs
        .iter()
        .map(|r| load_snapshots(&dir, r, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let off = build_offline(cfg.grid().map_err(config_err)?, cfg.window(), &trained, cfg.q)?;

    let mut written = Vec::new();
    let mut track = |rel: String, bytes: Vec<u8>| -> Result<FileRef> {
        let f = write_tracked(&dir, &rel, &bytes)?;
        written.push(dir.join(rel));
        Ok(f)
    };
    let mut pod_modes = Vec::new();
    let mut pod_eigenvalues = Vec::new();
    for (i, b) in off.bases.iter().enumerate() {
        let tag = nu_tag(b.param);
        pod_modes.push(track(
            format!("pod/modes_{i:02}_{tag}.bin"),
            matrix_file::encode(b.modes.matrix()),
        )?);
        let eig = DMatrix::from_row_slice(1, b.eigenvalues.len(), &b.eigenvalues);
        pod_eigenvalues.push(track(
            format!("pod/eigenvalues_{i:02}_{tag}.bin"),
            matrix_file::encode(&eig),
        )?);
    }
    let mean = track(
        "mean.bin".into(),
        matrix_file::encode(&DMatrix::from_column_slice(off.mean.len(), 1, off.mean.values().as_slice())),
    )?;
    let initial_states = track(
        "initial_states.bin".into(),
        matrix_file::encode(&DMatrix::from_columns(&off.initial_states)),
    )?;
    let archive = track("tensors.bin".into(), archive::encode(&off.tensors, &off.initials))?;

    m.offline = Some(OfflineEntry {
        q: cfg.q,
        params: off.params.clone(),
        pod_modes,
        pod_eigenvalues,
        mean,
        initial_states,
        archive,
    });
    m.config = cfg;
    m.save(&path)?;
    written.push(path);
    Ok(written)
}

/// Rebuilds the offline model from the stored artifacts only; snapshot files
/// are not read.
pub fn load_offline(dir: &Path, m: &RunManifest, cfg: &StudyConfig) -> Result<OfflineModel> {
    let e = m.offline()?;
    let grid = Grid1D::new(cfg.nx, cfg.length).map_err(config_err)?;
    let np = e.params.len();
    if e.pod_modes.len() != np || e.pod_eigenvalues.len() != np {
        return Err(CliError::MissingData("offline entry lists an incomplete set of bases".into()));
    }
    let mut bases = Vec::with_capacity(np);
    for ((modes, eig), &param) in e.pod_modes.iter().zip(&e.pod_eigenvalues).zip(&e.params) {
        let phi = read_matrix(dir, modes)?;
        expect_shape(dir, modes, &phi, (grid.n, e.q))?;
        let lambda = read_matrix(dir, eig)?;
        bases.push(PodBasis {
            modes: BasisMatrix::new(phi)?,
            eigenvalues: lambda.iter().copied().collect(),
            param,
        });
    }
    let mean = read_matrix(dir, &e.mean)?;
    expect_shape(dir, &e.mean, &mean, (grid.n, 1))?;
    let states = read_matrix(dir, &e.initial_states)?;
    expect_shape(dir, &e.initial_states, &states, (grid.n, np))?;
    let bytes = read_verified(dir, &e.archive)?;
    let (tensors, initials) = archive::decode(&bytes).map_err(|reason| CliError::Format {
        path: resolve(dir, &e.archive),
        reason,
    })?;
    if tensors.np != np || tensors.q != e.q {
        return Err(CliError::Format {
            path: resolve(dir, &e.archive),
            reason: format!("holds np={}, q={}; manifest says np={np}, q={}", tensors.np, tensors.q, e.q),
        });
    }
    Ok(OfflineModel {
        grid,
        params: e.params.clone(),
        bases,
        mean: MeanField(mean.column(0).into_owned()),
        tensors,
        initials,
        initial_states: states.column_iter().map(|c| c.into_owned()).collect(),
        window: cfg.window(),
    })
}

fn trajectory_csv(traj: &ReducedTrajectory) -> String {
    let q = traj.alphas.first().map_or(0, DVector::len);
    let mut out = String::from("t");
    for k in 1..=q {
        write!(out, ",alpha{k}").unwrap();
    }
    out.push('\n');
    for (t, a) in traj.times.iter().zip(&traj.alphas) {
        out.push_str(&format_f64(*t));
        for v in a.iter() {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct BarycenterReport {
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct PredictFiles {
    trajectory: String,
    field: String,
}

#[derive(Debug, Serialize)]
struct PredictReport {
    tool_version: String,
    method: Method,
    nu: f64,
    q: usize,
    initial: &'static str,
    neighbors: Vec<usize>,
    neighbor_nu: Vec<f64>,
    neighbor_weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    barycenter: Option<BarycenterReport>,
    /// Mean error against the truth run at this viscosity, when present.
    truth_mean_error_percent: Option<f64>,
    seed: Option<u64>,
    files: PredictFiles,
    timings: Timings,
}

fn find_truth(dir: &Path, m: &RunManifest, cfg: &StudyConfig, nu: f64) -> Result<Option<SnapshotMatrix>> {
    match m.run_at(nu) {
        Some(run) if resolve(dir, &run.snapshots).exists() => load_snapshots(dir, run, cfg).map(Some),
        _ => Ok(None),
    }
}

pub fn cmd_predict(
    cli: &Cli,
    manifest: Option<&Path>,
    nu: f64,
    max_iter: Option<usize>,
    allow_nonconverged: bool,
    initial: InitialArg,
) -> Result<Vec<PathBuf>> {
    if !(nu > 0.0) {
        return Err(CliError::Config("--nu must be positive".into()));
    }
    let (path, dir) = manifest_location(cli, manifest);
    let m = load_manifest(&path)?;
    let mut cfg = m.config.clone();
    apply_overrides(&mut cfg, cli)?;
    let entry = m.offline()?;
    if cfg.q != entry.q {
        return Err(CliError::Config(format!(
            "offline stage used q = {}, got q = {}",
            entry.q, cfg.q
        )));
    }
    let max_iter = max_iter.unwrap_or(cfg.max_iter);
    if max_iter == 0 {
        return Err(CliError::Config("--max-iter must be at least 1".into()));
    }
    let off = load_offline(&dir, &m, &cfg)?;
    let truth = find_truth(&dir, &m, &cfg, nu)?;

    let (initial_state, initial_name) = match initial {
        InitialArg::Weighted => (InitialState::WeightedTrained, "weighted"),
        InitialArg::Truth => {
            let t = truth.as_ref().ok_or_else(|| {
                CliError::MissingData(format!("no truth snapshots at nu = {nu}"))
            })?;
            (InitialState::Field(t.values.column(0).into_owned()), "truth")
        }
    };
    let opts = OnlineOptions {
        weights: cfg.weights,
        tol: cfg.tol,
        max_iter,
        initial: initial_state,
        allow_nonconverged,
    };
    let method = cli.method.unwrap_or(MethodArg::Barycentric);
    let pred = match method {
        MethodArg::Barycentric => predict_barycentric(&off, nu, &opts)?,
        MethodArg::Itsgm => predict_itsgm(&off, nu, &opts)?,
    };

    create_dir(&cli.out)?;
    let tag = format!("{}_{}", pred.method.as_str(), nu_tag(nu));
    let traj_name = format!("{tag}_trajectory.csv");
    let field_name = format!("{tag}_field.bin");
    let report_path = cli.out.join(format!("{tag}_report.json"));
    write_text(&cli.out.join(&traj_name), &trajectory_csv(&pred.trajectory))?;
    matrix_file::write(&cli.out.join(&field_name), &pred.field.values)?;

    let truth_error = match &truth {
        Some(t) => Some(mean_error(t, &pred.field, &off.inner_product())?),
        None => None,
    };
    let report = PredictReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        method: pred.method,
        nu,
        q: off.q(),
        initial: initial_name,
        neighbor_nu: pred.neighbors.iter().map(|&i| off.params[i]).collect(),
        neighbor_weights: pred.neighbors.iter().map(|&i| pred.weights.values[i]).collect(),
        neighbors: pred.neighbors.clone(),
        barycenter: (pred.method == Method::Barycentric).then_some(BarycenterReport {
            iterations: pred.iterations,
            gradient_norm: pred.gradient_norm,
            converged: pred.converged,
        }),
        truth_mean_error_percent: truth_error,
        seed: cli.seed,
        files: PredictFiles {
            trajectory: traj_name.clone(),
            field: field_name.clone(),
        },
        timings: pred.timings,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    write_text(&report_path, &text)?;
    Ok(vec![cli.out.join(traj_name), cli.out.join(field_name), report_path])
}

pub fn cmd_compare(cli: &Cli, manifest: Option<&Path>, targets: &[f64]) -> Result<Vec<PathBuf>> {
    let (path, dir) = manifest_location(cli, manifest);
    let m = load_manifest(&path)?;
    let mut cfg = m.config.clone();
    apply_overrides(&mut cfg, cli)?;
    if cfg.q != m.offline()?.q {
        return Err(CliError::Config("--q differs from the offline stage".into()));
    }
    let targets = if targets.is_empty() {
        cfg.test_nu.clone()
    } else {
        targets.to_vec()
    };
    if targets.is_empty() {
        return Err(CliError::Config("no comparison targets".into()));
    }
    let off = load_offline(&dir, &m, &cfg)?;

    let mut csv = String::from("nu,barycentric,itsgm,truth_pod,barycentric_over_itsgm\n");
    for &nu in &targets {
        let run = m
            .run_at(nu)
            .ok_or_else(|| CliError::MissingData(format!("no truth run at nu = {nu}")))?;
        let truth = load_snapshots(&dir, run, &cfg)?;
        let row = compare_target(&off, &truth, &cfg.weights, cfg.tol, cfg.max_iter)?;
        let fields = [
            row.nu,
            row.barycentric,
            row.itsgm,
            row.truth_pod,
            row.barycentric_over_itsgm(),
        ];
        let line: Vec<String> = fields.iter().map(|&v| format_f64(v)).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    create_dir(&cli.out)?;
    let out = cli.out.join("compare.csv");
    write_text(&out, &csv)?;
    Ok(vec![out])
}

pub fn cmd_bench(
    cli: &Cli,
    manifest: Option<&Path>,
    sizes: &[usize],
    reps: usize,
    batch: usize,
    nu: Option<f64>,
) -> Result<Vec<PathBuf>> {
    if sizes.is_empty() || reps == 0 || batch == 0 {
        return Err(CliError::Config("--sizes, --reps and --batch must be non-empty/positive".into()));
    }
    let (path, dir) = manifest_location(cli, manifest);
    let m = load_manifest(&path)?;
    let mut cfg = m.config.clone();
    apply_overrides(&mut cfg, cli)?;
    let runs: Vec<RunEntry> = m.trained().cloned().collect();
    if runs.is_empty() {
        return Err(CliError::MissingData("manifest lists no trained runs".into()));
    }
    let trained = runs
        .iter()
        .map(|r| load_snapshots(&dir, r, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let nu = nu
        .or_else(|| cfg.test_nu.first().copied())
        .unwrap_or_else(|| trained.iter().map(|s| s.param).sum::<f64>() / trained.len() as f64);

    let mut csv = String::from("method,nx,median_s\n");
    for &nx in sizes {
        let resampled = trained
            .iter()
            .map(|s| resample_periodic(s, nx))
            .collect::<barycentric_rom::Result<Vec<_>>>()?;
        let grid = Grid1D::new(nx, cfg.length).map_err(config_err)?;
        let off = build_offline(grid, cfg.window(), &resampled, cfg.q)?;
        let row = bench_operators(&off, nu, &cfg.weights, reps, batch)?;
        writeln!(csv, "barycentric,{nx},{}", format_f64(row.barycentric_update_s)).unwrap();
        writeln!(csv, "direct_projection,{nx},{}", format_f64(row.direct_projection_s)).unwrap();
    }
    create_dir(&cli.out)?;
    let out = cli.out.join("bench.csv");
    write_text(&out, &csv)?;
    Ok(vec![out])
}
