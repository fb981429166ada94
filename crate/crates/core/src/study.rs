//! Offline/online pipeline over a parametric Burgers study.
//!
//! Offline: run the full-order model for each trained viscosity, subtract a
//! shared mean, compute one POD basis per viscosity and assemble the cross
//! tensors. Online: pick neighbours and weights for the requested
//! viscosity, compute the barycenter, update the reduced operators, integrate
//! and reconstruct. The ITSGM and truth-POD routes are provided for
//! comparison; both re-project onto their basis over the mesh.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{
    itsgm_interpolate_weighted, karcher_barycenter, AlignmentRotation, BarycenterInit,
    BarycenterOptions, BasisMatrix,
};
use crate::metrics::{mean_error, Method};
use crate::pod::{compute_pod, global_mean, InnerProduct, MeanField, PodBasis, SnapshotMatrix};
use crate::rom::{
    assemble_cross_tensors, direct_project, initial_condition, integrate_rom_sampled,
    interpolated_basis, reconstruct_field, update_reduced_model, CrossGalerkinTensors,
    InitialProjections, ReducedModel, ReducedTrajectory,
};
use crate::solver::{self, Grid1D, InitialProfile, SolverConfig};
use crate::weights::{evaluate_weights, select_neighbors, WeightKind, WeightScheme, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSettings {
    pub kind: WeightKind,
    pub power: f64,
    pub neighbors: usize,
}

impl Default for WeightSettings {
    fn default() -> Self {
        WeightSettings {
            kind: WeightKind::Lagrange,
            power: WeightScheme::DEFAULT_POWER,
            neighbors: 3,
        }
    }
}

/// Full description of a parametric study. All quantities in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Grid points.
    pub nx: usize,
    /// Domain length (m).
    pub length: f64,
    /// Time step (s).
    pub dt: f64,
    /// Steps discarded before the first snapshot.
    pub transient: usize,
    pub save_every: usize,
    /// Snapshots kept per viscosity.
    pub snapshots: usize,
    pub initial: InitialProfile,
    /// Trained viscosities (m^2/s).
    pub trained_nu: Vec<f64>,
    /// Untrained viscosities for which truth data is generated.
    pub test_nu: Vec<f64>,
    /// POD modes per basis.
    pub q: usize,
    pub weights: WeightSettings,
    /// Barycenter stopping threshold on the gradient norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            nx: 256,
            length: 2.0 * std::f64::consts::PI,
            dt: 1e-3,
            transient: 500,
            save_every: 10,
            snapshots: 200,
            initial: InitialProfile::TwoMode,
            trained_nu: vec![0.05, 0.07, 0.09, 0.11],
            test_nu: vec![0.06, 0.08, 0.10],
            q: 7,
            weights: WeightSettings::default(),
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

impl StudyConfig {
    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.nx, self.length)
    }

    pub fn solver_config(&self, nu: f64) -> SolverConfig {
        SolverConfig {
            nu,
            dt: self.dt,
            steps: self.transient + self.snapshots.saturating_sub(1) * self.save_every,
            initial: self.initial.clone(),
            save_every: self.save_every,
            transient: self.transient,
            convection: true,
        }
    }

    pub fn window(&self) -> TimeWindow {
        TimeWindow {
            t0: self.transient as f64 * self.dt,
            dt: self.dt,
            save_every: self.save_every,
            samples: self.snapshots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.snapshots == 0 {
            return Err(Error::InvalidInput("snapshots must be >= 1".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidInput("q must be >= 1".into()));
        }
        if self.weights.neighbors == 0 {
            return Err(Error::InvalidInput("neighbors must be >= 1".into()));
        }
        self.solver_config(self.trained_nu.first().copied().unwrap_or(1.0))
            .validate()
    }
}

/// Sampling window shared by the snapshots and the reduced trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t0: f64,
    pub dt: f64,
    pub save_every: usize,
    pub samples: usize,
}

impl TimeWindow {
    pub fn steps(&self) -> usize {
        self.samples.saturating_sub(1) * self.save_every
    }
}

/// Runs the full-order model for each viscosity, in parallel.
pub fn generate_snapshots(cfg: &StudyConfig, nus: &[f64]) -> Result<Vec<SnapshotMatrix>> {
    let grid = cfg.grid()?;
    nus.par_iter()
        .map(|&nu| solver::run(&cfg.solver_config(nu), &grid))
        .collect()
}

/// Everything the online stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineModel {
    pub grid: Grid1D,
    pub params: Vec<f64>,
    pub bases: Vec<PodBasis>,
    pub mean: MeanField,
    pub tensors: CrossGalerkinTensors,
    pub initials: InitialProjections,
    /// First stored state of every trained run; only the re-projection
    /// routes use it.
    pub initial_states: Vec<DVector<f64>>,
    pub window: TimeWindow,
}

impl OfflineModel {
    pub fn inner_product(&self) -> InnerProduct {
        self.grid.inner_product()
    }

    pub fn q(&self) -> usize {
        self.tensors.q
    }

    pub fn basis_matrices(&self) -> Vec<BasisMatrix> {
        self.bases.iter().map(|b| b.modes.clone()).collect()
    }
}

/// POD of every trained set around the shared mean, then tensor assembly.
pub fn build_offline(
    grid: Grid1D,
    window: TimeWindow,
    trained: &[SnapshotMatrix],
    q: usize,
) -> Result<OfflineModel> {
    if trained.is_empty() {
        return Err(Error::InvalidInput("no trained snapshot sets".into()));
    }
    if trained.iter().any(|s| s.dofs() != grid.n) {
        return Err(Error::shape("snapshot rows differ from grid size"));
    }
    let ip = grid.inner_product();
    let mean = global_mean(trained)?;
    let bases: Vec<PodBasis> = trained
        .par_iter()
        .map(|s| compute_pod(&s.fluctuations(&mean)?, &ip, q))
        .collect::<Result<_>>()?;
    let tensors = assemble_cross_tensors(&bases, &mean, &ip, &grid, None)?;
    let initial_states: Vec<DVector<f64>> =
        trained.iter().map(|s| s.values.column(0).into_owned()).collect();
    let initials = InitialProjections::assemble(&bases, &mean, &ip, &initial_states)?;
    Ok(OfflineModel {
        grid,
        params: trained.iter().map(|s| s.param).collect(),
        bases,
        mean,
        tensors,
        initials,
        initial_states,
        window,
    })
}

/// How the reduced initial state is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Project a known full-order state (e.g. the truth at `t0`).
    Field(DVector<f64>),
    /// Project the weighted combination of trained initial states.
    WeightedTrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOptions {
    pub weights: WeightSettings,
    pub tol: f64,
    pub max_iter: usize,
    pub initial: InitialState,
    /// Return the last iterate instead of failing when the barycenter does
    /// not converge.
    pub allow_nonconverged: bool,
}

impl OnlineOptions {
    pub fn from_config(cfg: &StudyConfig, initial: InitialState) -> Self {
        OnlineOptions {
            weights: cfg.weights,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            initial,
            allow_nonconverged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Subspace interpolation (barycenter or ITSGM).
    pub interpolation_s: f64,
    /// Reduced operator update or re-projection.
    pub operators_s: f64,
    pub integration_s: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub method: Method,
    pub nu: f64,
    pub neighbors: Vec<usize>,
    /// Weights over all trained points.
    pub weights: WeightVector,
    pub basis: BasisMatrix,
    /// Barycenter alignments over all trained points (identity where the
    /// weight is zero); empty for the other routes.
    pub rotations: Vec<AlignmentRotation>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub model: ReducedModel,
    pub trajectory: ReducedTrajectory,
    pub field: SnapshotMatrix,
    pub timings: Timings,
}

/// Neighbour indices and their weights scattered over all trained points.
pub fn interpolation_weights(
    params: &[f64],
    nu: f64,
    settings: &WeightSettings,
) -> Result<(Vec<usize>, WeightVector)> {
    let neighbors = select_neighbors(params, nu, settings.neighbors);
    let nodes: Vec<f64> = neighbors.iter().map(|&i| params[i]).collect();
    let scheme = WeightScheme {
        kind: settings.kind,
        power: settings.power,
        nodes,
    };
    let local = evaluate_weights(&scheme, nu)?;
    let full = local.scatter(&neighbors, params.len());
    Ok((neighbors, full))
}

fn nearest(params: &[f64], nu: f64) -> usize {
    select_neighbors(params, nu, 1)[0]
}

fn integrate_window(
    model: &ReducedModel,
    alpha0: &DVector<f64>,
    window: &TimeWindow,
) -> Result<ReducedTrajectory> {
    integrate_rom_sampled(model, alpha0, window.t0, window.dt, window.steps(), window.save_every)
}

/// Barycentric route: no mesh-sized work between the barycenter and the
/// reconstruction.
pub fn predict_barycentric(off: &OfflineModel, nu: f64, opts: &OnlineOptions) -> Result<Prediction> {
    let (neighbors, weights) = interpolation_weights(&off.params, nu, &opts.weights)?;
    let all_bases = off.basis_matrices();
    let local_bases: Vec<BasisMatrix> = neighbors.iter().map(|&i| all_bases[i].clone()).collect();
    let local_weights: Vec<f64> = neighbors.iter().map(|&i| weights.values[i]).collect();
    let init = neighbors
        .iter()
        .position(|&i| i == nearest(&off.params, nu))
        .unwrap_or(0);
    let bopts = BarycenterOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        init: BarycenterInit::Index(init),
    };

    let clock = Instant::now();
    let bary = match karcher_barycenter(&local_bases, &local_weights, &bopts) {
        Ok(r) => r,
        Err(Error::NotConverged { last, .. }) if opts.allow_nonconverged => *last,
        Err(e) => return Err(e),
    };
    let interpolation_s = clock.elapsed().as_secs_f64();

    let q = off.q();
    let mut rotations = vec![AlignmentRotation::identity(q); off.params.len()];
    for (&i, r) in neighbors.iter().zip(&bary.rotations) {
        rotations[i] = r.clone();
    }

    let clock = Instant::now();
    let model = update_reduced_model(&off.tensors, &weights, &rotations, nu)?;
    let operators_s = clock.elapsed().as_secs_f64();

    let basis = bary.representative.clone();
    let ip = off.inner_product();
    let alpha0 = match &opts.initial {
        InitialState::Field(u0) => initial_condition(&basis, &off.mean, &ip, u0)?,
        InitialState::WeightedTrained => {
            off.initials.weighted_initial(&weights, &rotations, &model.mass)?
        }
    };

    let clock = Instant::now();
    let trajectory = integrate_window(&model, &alpha0, &off.window)?;
    let integration_s = clock.elapsed().as_secs_f64();
    let field = reconstruct_field(&basis, &off.mean, &trajectory)?;

    Ok(Prediction {
        method: Method::Barycentric,
        nu,
        neighbors,
        weights,
        basis,
        rotations,
        iterations: bary.iterations,
        gradient_norm: bary.final_gradient_norm,
        converged: bary.converged,
        model,
        trajectory,
        field,
        timings: Timings {
            interpolation_s,
            operators_s,
            integration_s,
        },
    })
}

/// Rescales a basis so that `Phi^T W Phi = I`.
pub fn w_orthonormalize(basis: &DMatrix<f64>, ip: &InnerProduct) -> Result<BasisMatrix> {
    let gram = ip.gram(basis, basis);
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    BasisMatrix::new(basis * inv_sqrt)
}

/// Model, trajectory, reconstructed field, operator and integration seconds.
type RunOutput = (ReducedModel, ReducedTrajectory, SnapshotMatrix, f64, f64);

fn project_and_run(
    off: &OfflineModel,
    basis: BasisMatrix,
    nu: f64,
    initial: &InitialState,
    weights: &WeightVector,
) -> Result<RunOutput> {
    let ip = off.inner_product();
    let clock = Instant::now();
    let model = direct_project(&basis, &off.mean, &ip, &off.grid, nu, None)?;
    let operators_s = clock.elapsed().as_secs_f64();
    let u0 = match initial {
        InitialState::Field(u0) => u0.clone(),
        InitialState::WeightedTrained => {
            let mut u = DVector::zeros(off.grid.n);
            for (w, s) in weights.values.iter().zip(&off.initial_states) {
                u += s * *w;
            }
            u
        }
    };
    let alpha0 = initial_condition(&basis, &off.mean, &ip, &u0)?;
    let clock = Instant::now();
    let trajectory = integrate_window(&model, &alpha0, &off.window)?;
    let integration_s = clock.elapsed().as_secs_f64();
    let field = reconstruct_field(&basis, &off.mean, &trajectory)?;
    Ok((model, trajectory, field, operators_s, integration_s))
}

/// ITSGM route: Grassmann tangent-space interpolation about the nearest
/// trained basis, then Galerkin re-projection over the mesh.
pub fn predict_itsgm(off: &OfflineModel, nu: f64, opts: &OnlineOptions) -> Result<Prediction> {
    let (neighbors, weights) = interpolation_weights(&off.params, nu, &opts.weights)?;
    let all_bases = off.basis_matrices();
    let local_bases: Vec<BasisMatrix> = neighbors.iter().map(|&i| all_bases[i].clone()).collect();
    let local_weights: Vec<f64> = neighbors.iter().map(|&i| weights.values[i]).collect();
    let reference = neighbors
        .iter()
        .position(|&i| i == nearest(&off.params, nu))
        .unwrap_or(0);

    let ip = off.inner_product();
    let clock = Instant::now();
    let grassmann = itsgm_interpolate_weighted(&local_bases, &local_weights, reference)?;
    let basis = w_orthonormalize(grassmann.matrix(), &ip)?;
    let interpolation_s = clock.elapsed().as_secs_f64();

    let (model, trajectory, field, operators_s, integration_s) =
        project_and_run(off, basis.clone(), nu, &opts.initial, &weights)?;
    Ok(Prediction {
        method: Method::Itsgm,
        nu,
        neighbors,
        weights,
        basis,
        rotations: Vec::new(),
        iterations: 0,
        gradient_norm: 0.0,
        converged: true,
        model,
        trajectory,
        field,
        timings: Timings {
            interpolation_s,
            operators_s,
            integration_s,
        },
    })
}

/// Accuracy floor: POD of the target's own snapshots (around the shared
/// mean) and a directly projected reduced model.
pub fn predict_truth_pod(off: &OfflineModel, truth: &SnapshotMatrix) -> Result<Prediction> {
    let ip = off.inner_product();
    let clock = Instant::now();
    let pod = compute_pod(&truth.fluctuations(&off.mean)?, &ip, off.q())?;
    let interpolation_s = clock.elapsed().as_secs_f64();
    let weights = WeightVector {
        values: vec![0.0; off.params.len()],
        target: truth.param,
    };
    let initial = InitialState::Field(truth.values.column(0).into_owned());
    let (model, trajectory, field, operators_s, integration_s) =
        project_and_run(off, pod.modes.clone(), truth.param, &initial, &weights)?;
    Ok(Prediction {
        method: Method::TruthPod,
        nu: truth.param,
        neighbors: Vec::new(),
        weights,
        basis: pod.modes,
        rotations: Vec::new(),
        iterations: 0,
        gradient_norm: 0.0,
        converged: true,
        model,
        trajectory,
        field,
        timings: Timings {
            interpolation_s,
            operators_s,
            integration_s,
        },
    })
}

/// Mean errors of the three routes against the truth at one viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub nu: f64,
    pub barycentric: f64,
    pub itsgm: f64,
    pub truth_pod: f64,
}

impl ComparisonRow {
    pub fn barycentric_over_itsgm(&self) -> f64 {
        self.barycentric / self.itsgm
    }
}

pub fn compare_target(
    off: &OfflineModel,
    truth: &SnapshotMatrix,
    weights: &WeightSettings,
    tol: f64,
    max_iter: usize,
) -> Result<ComparisonRow> {
    let ip = off.inner_product();
    let opts = OnlineOptions {
        weights: *weights,
        tol,
        max_iter,
        initial: InitialState::Field(truth.values.column(0).into_owned()),
        allow_nonconverged: false,
    };
    let bary = predict_barycentric(off, truth.param, &opts)?;
    let itsgm = predict_itsgm(off, truth.param, &opts)?;
    let floor = predict_truth_pod(off, truth)?;
    Ok(ComparisonRow {
        nu: truth.param,
        barycentric: mean_error(truth, &bary.field, &ip)?,
        itsgm: mean_error(truth, &itsgm.field, &ip)?,
        truth_pod: mean_error(truth, &floor.field, &ip)?,
    })
}

/// Periodic linear interpolation of every snapshot onto an `n`-point grid
/// of the same length.
pub fn resample_periodic(snaps: &SnapshotMatrix, n: usize) -> Result<SnapshotMatrix> {
    let old = snaps.dofs();
    let values = DMatrix::from_fn(n, snaps.len(), |i, j| {
        let pos = i as f64 * old as f64 / n as f64;
        let left = pos.floor() as usize % old;
        let frac = pos - pos.floor();
        let right = (left + 1) % old;
        snaps.values[(left, j)] * (1.0 - frac) + snaps.values[(right, j)] * frac
    });
    SnapshotMatrix::new(values, snaps.times.clone(), snaps.param)
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Median wall-clock of the two operator routes at one mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nx: usize,
    pub barycentric_update_s: f64,
    pub direct_projection_s: f64,
}

/// Times `update_reduced_model` (batched `batch` calls per sample) and
/// `direct_project` onto the barycentric basis, `reps` samples each.
pub fn bench_operators(
    off: &OfflineModel,
    nu: f64,
    weights: &WeightSettings,
    reps: usize,
    batch: usize,
) -> Result<BenchRow> {
    let opts = OnlineOptions {
        weights: *weights,
        tol: 1e-10,
        max_iter: 100,
        initial: InitialState::WeightedTrained,
        allow_nonconverged: true,
    };
    let (neighbors, w) = interpolation_weights(&off.params, nu, &opts.weights)?;
    let all = off.basis_matrices();
    let local: Vec<BasisMatrix> = neighbors.iter().map(|&i| all[i].clone()).collect();
    let lw: Vec<f64> = neighbors.iter().map(|&i| w.values[i]).collect();
    let bary = match karcher_barycenter(&local, &lw, &BarycenterOptions::default()) {
        Ok(r) => r,
        Err(Error::NotConverged { last, .. }) => *last,
        Err(e) => return Err(e),
    };
    let mut rotations = vec![AlignmentRotation::identity(off.q()); off.params.len()];
    for (&i, r) in neighbors.iter().zip(&bary.rotations) {
        rotations[i] = r.clone();
    }
    let basis = interpolated_basis(&all, &w, &rotations)?;
    let ip = off.inner_product();

    let batch = batch.max(1);
    let mut update = Vec::with_capacity(reps);
    let mut direct = Vec::with_capacity(reps);
    for _ in 0..reps {
        let clock = Instant::now();
        for _ in 0..batch {
            std::hint::black_box(update_reduced_model(&off.tensors, &w, &rotations, nu)?);
        }
        update.push(clock.elapsed().as_secs_f64() / batch as f64);

        let clock = Instant::now();
        std::hint::black_box(direct_project(&basis, &off.mean, &ip, &off.grid, nu, None)?);
        direct.push(clock.elapsed().as_secs_f64());
    }
    Ok(BenchRow {
        nx: off.grid.n,
        barycentric_update_s: median(&mut update),
        direct_projection_s: median(&mut direct),
    })
}
