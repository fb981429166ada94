//! Galerkin reduced-order model with an online barycentric update.
//!
//! For a velocity split `u = u_mean + Phi alpha` the reduced system is
//!
//! ```text
//! M dalpha/dt + nu R alpha + Cbar alpha + sum_e alpha_e C^e alpha = F
//! ```
//!
//! with `M_ij = <Phi_j, Phi_i>`, `R_ij = <grad Phi_j, grad Phi_i>`,
//! `Cbar_ij = <conv(u_mean, Phi_j) + conv(Phi_j, u_mean), Phi_i>`,
//! `C^e_ij = <conv(Phi_j, Phi_e), Phi_i>` and
//! `F_i = <f, Phi_i> - nu <grad u_mean, grad Phi_i> - <conv(u_mean, u_mean), Phi_i>`.
//!
//! When `Phi = sum_k w_k Phi_k Q_k` every operator is a weighted sum of
//! conjugated cross blocks between trained bases, so the cross blocks are
//! assembled once offline and the online update only manipulates `q x q`
//! matrices.
//!
//! Block convention: block `(h, k)` holds `<op Phi^k_j, Phi^h_i>` in entry
//! `(i, j)`, i.e. rows are test functions from basis `h`, columns trial
//! functions from basis `k`. The update conjugates as `Q_h^T B^{hk} Q_k`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{AlignmentRotation, BasisMatrix};
use crate::pod::{InnerProduct, MeanField, PodBasis, SnapshotMatrix};
use crate::weights::WeightVector;

/// Discrete differential operators entering the Galerkin forms.
pub trait GalerkinOperators: Sync {
    /// Gradient used in the viscous form `<grad a, grad b>_W`.
    fn gradient(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Discrete convection `(v . grad) w`; `convection(u, u)` must be the
    /// nonlinear term of the full-order model.
    fn convection(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;
}

fn gradient_columns<O: GalerkinOperators + ?Sized>(ops: &O, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        out.set_column(j, &ops.gradient(&m.column(j).into_owned()));
    }
    out
}

/// Columns `conv(mean, Phi_j) + conv(Phi_j, mean)`.
fn linearised_convection<O: GalerkinOperators + ?Sized>(
    ops: &O,
    mean: &DVector<f64>,
    m: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let phi = m.column(j).into_owned();
        out.set_column(j, &(ops.convection(mean, &phi) + ops.convection(&phi, mean)));
    }
    out
}

/// Columns `conv(Phi^a_j, phi)` for every `j`.
fn convected_by<O: GalerkinOperators + ?Sized>(
    ops: &O,
    m: &DMatrix<f64>,
    phi: &DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        out.set_column(j, &ops.convection(&m.column(j).into_owned(), phi));
    }
    out
}

/// Offline cross-Galerkin blocks between all pairs/triples of trained bases.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGalerkinTensors {
    pub np: usize,
    pub q: usize,
    /// Mass blocks `(h, k)` with `h <= k`, packed row by row; the lower
    /// triangle follows from `M^{kh} = (M^{hk})^T`.
    pub mass: Vec<DMatrix<f64>>,
    /// Stiffness blocks, `np * np`, index `h * np + k`.
    pub stiffness: Vec<DMatrix<f64>>,
    /// Mean-convection blocks, `np * np`, index `h * np + k`.
    pub mean_convection: Vec<DMatrix<f64>>,
    /// Quadratic blocks, index `(h * np + k) * np + n`, each holding `q`
    /// matrices `C_s` with `(C_s)_ij = <conv(Phi^k_j, Phi^n_s), Phi^h_i>`.
    pub convection: Vec<Vec<DMatrix<f64>>>,
    /// `-<conv(u_mean, u_mean), Phi^k_i>` per basis.
    pub forcing_convection: Vec<DVector<f64>>,
    /// `-<grad u_mean, grad Phi^k_i>` per basis; multiplied by `nu` online.
    pub forcing_diffusion: Vec<DVector<f64>>,
    /// `<f, Phi^k_i>` per basis.
    pub forcing_body: Vec<DVector<f64>>,
}

pub(crate) fn upper_index(np: usize, h: usize, k: usize) -> usize {
    debug_assert!(h <= k);
    h * np - h * (h + 1) / 2 + k
}

impl CrossGalerkinTensors {
    pub fn mass_block(&self, h: usize, k: usize) -> DMatrix<f64> {
        if h <= k {
            self.mass[upper_index(self.np, h, k)].clone()
        } else {
            self.mass[upper_index(self.np, k, h)].transpose()
        }
    }

    pub fn stiffness_block(&self, h: usize, k: usize) -> &DMatrix<f64> {
        &self.stiffness[h * self.np + k]
    }

    pub fn mean_convection_block(&self, h: usize, k: usize) -> &DMatrix<f64> {
        &self.mean_convection[h * self.np + k]
    }

    pub fn convection_block(&self, h: usize, k: usize, n: usize) -> &[DMatrix<f64>] {
        &self.convection[(h * self.np + k) * self.np + n]
    }

    /// Checks block counts and sizes.
    pub fn validate(&self) -> Result<()> {
        let (np, q) = (self.np, self.q);
        let sq = |m: &DMatrix<f64>| m.shape() == (q, q);
        let vq = |v: &DVector<f64>| v.len() == q;
        let ok = self.mass.len() == np * (np + 1) / 2
            && self.mass.iter().all(sq)
            && self.stiffness.len() == np * np
            && self.stiffness.iter().all(sq)
            && self.mean_convection.len() == np * np
            && self.mean_convection.iter().all(sq)
            && self.convection.len() == np * np * np
            && self.convection.iter().all(|c| c.len() == q && c.iter().all(sq))
            && [&self.forcing_convection, &self.forcing_diffusion, &self.forcing_body]
                .iter()
                .all(|f| f.len() == np && f.iter().all(vq));
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "cross tensors inconsistent with np = {np}, q = {q}"
            )))
        }
    }
}

fn check_bases(bases: &[PodBasis], mean: &MeanField, ip: &InnerProduct) -> Result<(usize, usize)> {
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidInput("no bases".into()))?;
    let (nx, q) = (first.modes.dim(), first.modes.modes());
    for b in bases {
        if b.modes.dim() != nx || b.modes.modes() != q {
            return Err(Error::shape(format!(
                "basis for param {} is {}x{}, expected {nx}x{q}",
                b.param,
                b.modes.dim(),
                b.modes.modes()
            )));
        }
    }
    if mean.len() != nx {
        return Err(Error::shape(format!(
            "mean has {} entries, bases have {nx} rows",
            mean.len()
        )));
    }
    ip.check_len(nx)?;
    Ok((nx, q))
}

/// Offline assembly of every cross block. `body_force` is the external
/// forcing field, if any.
pub fn assemble_cross_tensors<O: GalerkinOperators + ?Sized>(
    bases: &[PodBasis],
    mean: &MeanField,
    ip: &InnerProduct,
    ops: &O,
    body_force: Option<&DVector<f64>>,
) -> Result<CrossGalerkinTensors> {
    let (nx, q) = check_bases(bases, mean, ip)?;
    let np = bases.len();
    if let Some(f) = body_force {
        if f.len() != nx {
            return Err(Error::shape("body force length differs from basis rows"));
        }
    }
    let ubar = mean.values();
    let modes: Vec<&DMatrix<f64>> = bases.iter().map(|b| b.modes.matrix()).collect();
    let weighted: Vec<DMatrix<f64>> = modes.iter().map(|m| ip.apply(m)).collect();
    let grads: Vec<DMatrix<f64>> = modes.iter().map(|m| gradient_columns(ops, m)).collect();
    let weighted_grads: Vec<DMatrix<f64>> = grads.iter().map(|g| ip.apply(g)).collect();
    let linear: Vec<DMatrix<f64>> = modes
        .iter()
        .map(|m| linearised_convection(ops, ubar, m))
        .collect();

    let mut mass = Vec::with_capacity(np * (np + 1) / 2);
    for h in 0..np {
        for k in h..np {
            mass.push(weighted[h].transpose() * modes[k]);
        }
    }
    let mut stiffness = Vec::with_capacity(np * np);
    let mut mean_convection = Vec::with_capacity(np * np);
    for h in 0..np {
        for k in 0..np {
            stiffness.push(weighted_grads[h].transpose() * &grads[k]);
            mean_convection.push(weighted[h].transpose() * &linear[k]);
        }
    }

    // (k, n) pairs are independent; each yields the blocks for all h.
    let per_pair: Vec<Vec<Vec<DMatrix<f64>>>> = (0..np * np)
        .into_par_iter()
        .map(|kn| {
            let (k, n) = (kn / np, kn % np);
            let convected: Vec<DMatrix<f64>> = (0..q)
                .map(|s| convected_by(ops, modes[k], &modes[n].column(s).into_owned()))
                .collect();
            (0..np)
                .map(|h| {
                    convected
                        .iter()
                        .map(|c| weighted[h].transpose() * c)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut convection = vec![Vec::new(); np * np * np];
    for (kn, blocks) in per_pair.into_iter().enumerate() {
        let (k, n) = (kn / np, kn % np);
        for (h, b) in blocks.into_iter().enumerate() {
            convection[(h * np + k) * np + n] = b;
        }
    }

    let mean_conv = ops.convection(ubar, ubar);
    let mean_grad = ops.gradient(ubar);
    let forcing_convection = weighted
        .iter()
        .map(|w| -(w.transpose() * &mean_conv))
        .collect();
    let forcing_diffusion = weighted_grads
        .iter()
        .map(|w| -(w.transpose() * &mean_grad))
        .collect();
    let forcing_body = weighted
        .iter()
        .map(|w| match body_force {
            Some(f) => w.transpose() * f,
            None => DVector::zeros(q),
        })
        .collect();

    Ok(CrossGalerkinTensors {
        np,
        q,
        mass,
        stiffness,
        mean_convection,
        convection,
        forcing_convection,
        forcing_diffusion,
        forcing_body,
    })
}

/// Online `q x q` operators of the reduced system at viscosity `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub mean_convection: DMatrix<f64>,
    /// `C^e` for `e = 0..q`.
    pub convection: Vec<DMatrix<f64>>,
    pub forcing: DVector<f64>,
    pub nu: f64,
}

impl ReducedModel {
    pub fn q(&self) -> usize {
        self.mass.nrows()
    }

    /// All-zero model of size `q`.
    pub fn zeros(q: usize, nu: f64) -> Self {
        ReducedModel {
            mass: DMatrix::zeros(q, q),
            stiffness: DMatrix::zeros(q, q),
            mean_convection: DMatrix::zeros(q, q),
            convection: vec![DMatrix::zeros(q, q); q],
            forcing: DVector::zeros(q),
            nu,
        }
    }

    /// `F - nu R a - Cbar a - sum_e a_e C^e a`.
    pub fn residual(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let mut quad = DMatrix::zeros(self.q(), self.q());
        for (e, c) in self.convection.iter().enumerate() {
            if alpha[e] != 0.0 {
                quad += c * alpha[e];
            }
        }
        &self.forcing
            - &self.stiffness * alpha * self.nu
            - &self.mean_convection * alpha
            - quad * alpha
    }

    /// Largest entrywise relative mismatch against another model, measured
    /// per operator in Frobenius norm.
    pub fn relative_difference(&self, other: &ReducedModel) -> f64 {
        fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
            let scale = b.norm().max(a.norm());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).norm() / scale
            }
        }
        let mut worst = rel(&self.mass, &other.mass)
            .max(rel(&self.stiffness, &other.stiffness))
            .max(rel(&self.mean_convection, &other.mean_convection));
        for (a, b) in self.convection.iter().zip(&other.convection) {
            worst = worst.max(rel(a, b));
        }
        let fa = DMatrix::from_column_slice(self.q(), 1, self.forcing.as_slice());
        let fb = DMatrix::from_column_slice(other.q(), 1, other.forcing.as_slice());
        worst.max(rel(&fa, &fb))
    }
}

/// `sum_k w_k Phi_k Q_k`, the basis the online operators refer to.
pub fn interpolated_basis(
    bases: &[BasisMatrix],
    weights: &WeightVector,
    rotations: &[AlignmentRotation],
) -> Result<BasisMatrix> {
    if bases.len() != weights.values.len() || bases.len() != rotations.len() {
        return Err(Error::shape("bases, weights and rotations differ in length"));
    }
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidInput("no bases".into()))?;
    let mut out = DMatrix::zeros(first.dim(), first.modes());
    for ((b, &w), r) in bases.iter().zip(&weights.values).zip(rotations) {
        if w != 0.0 {
            out += (b.matrix() * r.matrix()) * w;
        }
    }
    BasisMatrix::new(out)
}

/// Online update: weighted conjugation of the stored cross blocks. Touches
/// only `q`- and `np`-sized data.
pub fn update_reduced_model(
    ct: &CrossGalerkinTensors,
    weights: &WeightVector,
    rotations: &[AlignmentRotation],
    nu: f64,
) -> Result<ReducedModel> {
    let (np, q) = (ct.np, ct.q);
    if weights.values.len() != np || rotations.len() != np {
        return Err(Error::shape(format!(
            "expected {np} weights and rotations, got {} and {}",
            weights.values.len(),
            rotations.len()
        )));
    }
    if rotations.iter().any(|r| r.matrix().shape() != (q, q)) {
        return Err(Error::shape(format!("rotations must be {q}x{q}")));
    }
    let active: Vec<usize> = (0..np).filter(|&k| weights.values[k] != 0.0).collect();
    let w = &weights.values;
    let rot_t: Vec<DMatrix<f64>> = rotations.iter().map(|r| r.matrix().transpose()).collect();

    let mut model = ReducedModel::zeros(q, nu);
    for &h in &active {
        for &k in &active {
            let wk = w[h] * w[k];
            let right = rotations[k].matrix();
            model.mass += &rot_t[h] * ct.mass_block(h, k) * right * wk;
            model.stiffness += &rot_t[h] * ct.stiffness_block(h, k) * right * wk;
            model.mean_convection += &rot_t[h] * ct.mean_convection_block(h, k) * right * wk;
            for &n in &active {
                let wkn = wk * w[n];
                let qn = rotations[n].matrix();
                let blocks = ct.convection_block(h, k, n);
                for e in 0..q {
                    // D_e = sum_s Q^n_{se} C_s, then conjugate.
                    let mut contracted = DMatrix::zeros(q, q);
                    for (s, c) in blocks.iter().enumerate() {
                        let coeff = qn[(s, e)];
                        if coeff != 0.0 {
                            contracted += c * coeff;
                        }
                    }
                    model.convection[e] += &rot_t[h] * contracted * right * wkn;
                }
            }
        }
        let fk = &ct.forcing_body[h] + &ct.forcing_convection[h] + &ct.forcing_diffusion[h] * nu;
        model.forcing += &rot_t[h] * fk * w[h];
    }
    Ok(model)
}

/// Galerkin projection onto an explicit basis by direct quadrature over the
/// mesh. Cost grows with the mesh size.
pub fn direct_project<O: GalerkinOperators + ?Sized>(
    basis: &BasisMatrix,
    mean: &MeanField,
    ip: &InnerProduct,
    ops: &O,
    nu: f64,
    body_force: Option<&DVector<f64>>,
) -> Result<ReducedModel> {
    let phi = basis.matrix();
    let (nx, q) = phi.shape();
    if mean.len() != nx {
        return Err(Error::shape(format!(
            "mean has {} entries, basis has {nx} rows",
            mean.len()
        )));
    }
    ip.check_len(nx)?;
    let ubar = mean.values();
    let weighted = ip.apply(phi);
    let weighted_t = weighted.transpose();
    let grads = gradient_columns(ops, phi);
    let weighted_grads_t = ip.apply(&grads).transpose();

    let convection = (0..q)
        .into_par_iter()
        .map(|e| &weighted_t * convected_by(ops, phi, &phi.column(e).into_owned()))
        .collect();

    let mut forcing = -(&weighted_t * ops.convection(ubar, ubar))
        - (&weighted_grads_t * ops.gradient(ubar)) * nu;
    if let Some(f) = body_force {
        if f.len() != nx {
            return Err(Error::shape("body force length differs from basis rows"));
        }
        forcing += &weighted_t * f;
    }
    Ok(ReducedModel {
        mass: &weighted_t * phi,
        stiffness: &weighted_grads_t * &grads,
        mean_convection: &weighted_t * linearised_convection(ops, ubar, phi),
        convection,
        forcing,
        nu,
    })
}

/// Reduced coordinates sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub alphas: Vec<DVector<f64>>,
    pub nu: f64,
}

impl ReducedTrajectory {
    /// Coefficients as a `q x n_times` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let q = self.alphas.first().map_or(0, |a| a.len());
        DMatrix::from_fn(q, self.alphas.len(), |i, j| self.alphas[j][i])
    }

    /// Same trajectory expressed in a rotated coordinate system, `Q^T alpha`.
    pub fn rotated(&self, rotation: &AlignmentRotation) -> ReducedTrajectory {
        let qt = rotation.matrix().transpose();
        ReducedTrajectory {
            times: self.times.clone(),
            alphas: self.alphas.iter().map(|a| &qt * a).collect(),
            nu: self.nu,
        }
    }
}

/// Classical RK4 on `M dalpha/dt = residual(alpha)` from `t = 0`.
pub fn integrate_rom(
    model: &ReducedModel,
    alpha0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<ReducedTrajectory> {
    integrate_rom_sampled(model, alpha0, 0.0, dt, steps, 1)
}

/// RK4 from `t0`, recording the initial state and every `save_every`-th step.
pub fn integrate_rom_sampled(
    model: &ReducedModel,
    alpha0: &DVector<f64>,
    t0: f64,
    dt: f64,
    steps: usize,
    save_every: usize,
) -> Result<ReducedTrajectory> {
    let q = model.q();
    if alpha0.len() != q {
        return Err(Error::shape(format!(
            "initial state has {} entries, model has {q} modes",
            alpha0.len()
        )));
    }
    if !(dt > 0.0) || save_every == 0 {
        return Err(Error::InvalidInput("dt must be positive and save_every >= 1".into()));
    }
    let chol: Cholesky<f64, Dyn> = Cholesky::new(model.mass.clone()).ok_or(Error::SingularMass)?;
    let rate = |a: &DVector<f64>| chol.solve(&model.residual(a));

    let mut times = vec![t0];
    let mut alphas = vec![alpha0.clone()];
    let mut alpha = alpha0.clone();
    for step in 1..=steps {
        let k1 = rate(&alpha);
        let k2 = rate(&(&alpha + &k1 * (0.5 * dt)));
        let k3 = rate(&(&alpha + &k2 * (0.5 * dt)));
        let k4 = rate(&(&alpha + &k3 * dt));
        alpha += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if step % save_every == 0 {
            times.push(t0 + step as f64 * dt);
            alphas.push(alpha.clone());
        }
    }
    Ok(ReducedTrajectory {
        times,
        alphas,
        nu: model.nu,
    })
}

/// `u(t_j) = u_mean + Phi alpha(t_j)` for every recorded instant.
pub fn reconstruct_field(
    basis: &BasisMatrix,
    mean: &MeanField,
    traj: &ReducedTrajectory,
) -> Result<SnapshotMatrix> {
    let phi = basis.matrix();
    if mean.len() != phi.nrows() {
        return Err(Error::shape("mean length differs from basis rows"));
    }
    if traj.alphas.iter().any(|a| a.len() != phi.ncols()) {
        return Err(Error::shape(format!(
            "trajectory coefficients must have {} entries",
            phi.ncols()
        )));
    }
    let mut values = phi * traj.to_matrix();
    for mut c in values.column_iter_mut() {
        c += mean.values();
    }
    SnapshotMatrix::new(values, traj.times.clone(), traj.nu)
}

/// Least-squares reduced coordinates of `u0 - u_mean`: solves
/// `(Phi^T W Phi) alpha = Phi^T W (u0 - u_mean)`.
pub fn initial_condition(
    basis: &BasisMatrix,
    mean: &MeanField,
    ip: &InnerProduct,
    u0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let phi = basis.matrix();
    if mean.len() != phi.nrows() || u0.len() != phi.nrows() {
        return Err(Error::shape("initial field, mean and basis rows differ"));
    }
    ip.check_len(phi.nrows())?;
    let weighted_t = ip.apply(phi).transpose();
    let gram = &weighted_t * phi;
    let rhs = &weighted_t * (u0 - mean.values());
    let chol = Cholesky::new(gram).ok_or(Error::SingularMass)?;
    Ok(chol.solve(&rhs))
}

/// Offline projections `Phi_k^T W (u_h(t0) - u_mean)` of every trained
/// initial state onto every trained basis, used to build an initial
/// condition online without mesh data.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialProjections {
    /// `coords[k][h]`: basis `k`, initial state of parameter `h`.
    pub coords: Vec<Vec<DVector<f64>>>,
}

impl InitialProjections {
    pub fn assemble(
        bases: &[PodBasis],
        mean: &MeanField,
        ip: &InnerProduct,
        initial_states: &[DVector<f64>],
    ) -> Result<Self> {
        let (nx, _) = check_bases(bases, mean, ip)?;
        if initial_states.len() != bases.len() || initial_states.iter().any(|u| u.len() != nx) {
            return Err(Error::shape("one initial state of full length per basis expected"));
        }
        let coords = bases
            .iter()
            .map(|b| {
                let wt = ip.apply(b.modes.matrix()).transpose();
                initial_states
                    .iter()
                    .map(|u| &wt * (u - mean.values()))
                    .collect()
            })
            .collect();
        Ok(InitialProjections { coords })
    }

    /// Reduced coordinates of `sum_h w_h u_h(t0)` on the interpolated basis.
    pub fn weighted_initial(
        &self,
        weights: &WeightVector,
        rotations: &[AlignmentRotation],
        mass: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let np = self.coords.len();
        if weights.values.len() != np || rotations.len() != np {
            return Err(Error::shape("weights/rotations do not match projections"));
        }
        let w = &weights.values;
        let mut rhs = DVector::zeros(mass.nrows());
        for k in (0..np).filter(|&k| w[k] != 0.0) {
            let mut inner = DVector::zeros(mass.nrows());
            for h in (0..np).filter(|&h| w[h] != 0.0) {
                inner += &self.coords[k][h] * w[h];
            }
            rhs += rotations[k].matrix().transpose() * inner * w[k];
        }
        let chol = Cholesky::new(mass.clone()).ok_or(Error::SingularMass)?;
        Ok(chol.solve(&rhs))
    }
}
