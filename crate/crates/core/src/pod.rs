//! Snapshot matrices and proper orthogonal decomposition by the method of
//! snapshots.
//!
//! With snapshots `u_1..u_Ns` and a weighted inner product `<a, b>_W`, the
//! correlation matrix `C_ij = <u_i, u_j>_W` is diagonalised, `C a = a lambda`,
//! and the modes are `Phi_k = lambda_k^{-1/2} sum_i a_ik u_i`. The resulting
//! basis is W-orthonormal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::manifold::BasisMatrix;

/// Field values (one column per time sample) for one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub values: DMatrix<f64>,
    pub times: Vec<f64>,
    pub param: f64,
}

impl SnapshotMatrix {
    pub fn new(values: DMatrix<f64>, times: Vec<f64>, param: f64) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::InvalidInput("snapshot matrix has no columns".into()));
        }
        if times.len() != values.ncols() {
            return Err(Error::shape(format!(
                "{} times for {} snapshots",
                times.len(),
                values.ncols()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("snapshot times must be strictly increasing".into()));
        }
        Ok(SnapshotMatrix {
            values,
            times,
            param,
        })
    }

    pub fn dofs(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Snapshots minus the mean field, column by column.
    pub fn fluctuations(&self, mean: &MeanField) -> Result<SnapshotMatrix> {
        if mean.len() != self.dofs() {
            return Err(Error::shape(format!(
                "mean has {} entries, snapshots have {} rows",
                mean.len(),
                self.dofs()
            )));
        }
        let mut values = self.values.clone();
        for mut c in values.column_iter_mut() {
            c -= &mean.0;
        }
        Ok(SnapshotMatrix {
            values,
            times: self.times.clone(),
            param: self.param,
        })
    }
}

/// Discrete `L^2` inner product `<a, b>_W = a^T W b` with diagonal `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerProduct {
    /// Uniform quadrature weight, e.g. the grid spacing.
    Uniform(f64),
    /// One positive weight per degree of freedom.
    Diagonal(DVector<f64>),
}

impl InnerProduct {
    pub fn uniform(weight: f64) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::InvalidInput("inner-product weight must be positive".into()));
        }
        Ok(InnerProduct::Uniform(weight))
    }

    pub fn diagonal(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput("inner-product weights must be positive".into()));
        }
        Ok(InnerProduct::Diagonal(weights))
    }

    pub fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            InnerProduct::Uniform(w) => w * a.dot(b),
            InnerProduct::Diagonal(w) => a.iter().zip(b.iter()).zip(w.iter()).map(|((x, y), w)| x * y * w).sum(),
        }
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// `W x`, column by column.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InnerProduct::Uniform(w) => x * *w,
            InnerProduct::Diagonal(w) => {
                let mut out = x.clone();
                for mut c in out.column_iter_mut() {
                    c.component_mul_assign(w);
                }
                out
            }
        }
    }

    /// Gram matrix `A^T W B`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.transpose() * self.apply(b)
    }

    /// `W^{1/2} x`.
    pub fn sqrt_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InnerProduct::Uniform(w) => x * w.sqrt(),
            InnerProduct::Diagonal(w) => {
                let s = w.map(f64::sqrt);
                let mut out = x.clone();
                for mut c in out.column_iter_mut() {
                    c.component_mul_assign(&s);
                }
                out
            }
        }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        match self {
            InnerProduct::Diagonal(w) if w.len() != n => Err(Error::shape(format!(
                "inner product has {} weights, fields have {n} entries",
                w.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Mean field shared by every trained parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField(pub DVector<f64>);

impl MeanField {
    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Arithmetic mean over every column of every snapshot set.
pub fn global_mean(sets: &[SnapshotMatrix]) -> Result<MeanField> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidInput("no snapshot sets".into()))?;
    let (nx, ns) = first.values.shape();
    let mut sum = DVector::zeros(nx);
    for s in sets {
        if s.values.shape() != (nx, ns) {
            return Err(Error::shape(format!(
                "snapshot set for param {} is {:?}, expected {:?}",
                s.param,
                s.values.shape(),
                (nx, ns)
            )));
        }
        for c in s.values.column_iter() {
            sum += c;
        }
    }
    Ok(MeanField(sum / (sets.len() * ns) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// W-orthonormal modes, `N x q`.
    pub modes: BasisMatrix,
    /// Full correlation spectrum, descending, negatives clipped to zero. The
    /// first `q` entries belong to the retained modes.
    pub eigenvalues: Vec<f64>,
    pub param: f64,
}

impl PodBasis {
    pub fn q(&self) -> usize {
        self.modes.modes()
    }
}

/// Truncated POD of mean-subtracted snapshots, keeping `q` modes.
///
/// Each mode is signed so that its largest-magnitude entry is positive.
pub fn compute_pod(fluct: &SnapshotMatrix, ip: &InnerProduct, q: usize) -> Result<PodBasis> {
    let u = &fluct.values;
    let (nx, ns) = u.shape();
    ip.check_len(nx)?;
    if q == 0 || q > ns || q >= nx {
        return Err(Error::InvalidInput(format!(
            "cannot keep {q} modes from {ns} snapshots of size {nx}"
        )));
    }
    let corr = ip.gram(u, u);
    let corr = (&corr + corr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let lead = eigenvalues[0];
    let ratio = if lead > 0.0 { eigenvalues[q - 1] / lead } else { 0.0 };
    if !(ratio > 1e-14) {
        return Err(Error::RankTooSmall { requested: q, ratio });
    }

    let mut modes = DMatrix::zeros(nx, q);
    for (k, &i) in order.iter().take(q).enumerate() {
        let coeffs = eig.eigenvectors.column(i);
        modes.set_column(k, &(u * coeffs / eigenvalues[k].sqrt()));
    }
    // Orthonormality of the raw modes degrades like eps * lambda_1 / lambda_q;
    // one symmetric pass with (Phi^T W Phi)^{-1/2} restores it with the
    // smallest change to the modes.
    let gram = SymmetricEigen::new(ip.gram(&modes, &modes));
    let inv_sqrt = &gram.eigenvectors
        * DMatrix::from_diagonal(&gram.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * gram.eigenvectors.transpose();
    let mut modes = modes * inv_sqrt;
    for mut mode in modes.column_iter_mut() {
        if mode[mode.iamax()] < 0.0 {
            mode.neg_mut();
        }
    }
    Ok(PodBasis {
        modes: BasisMatrix::new(modes)?,
        eigenvalues,
        param: fluct.param,
    })
}

/// Fraction of the total snapshot energy captured by the first `q` modes.
pub fn energy_fraction(basis: &PodBasis, q: usize) -> f64 {
    let total: f64 = basis.eigenvalues.iter().sum();
    if total <= 0.0 {
        return 1.0;
    }
    let kept: f64 = basis.eigenvalues.iter().take(q).sum();
    (kept / total).clamp(0.0, 1.0)
}

/// Smallest `q` whose energy fraction reaches `threshold`.
pub fn modes_for_energy(basis: &PodBasis, threshold: f64) -> usize {
    (1..=basis.eigenvalues.len())
        .find(|&q| energy_fraction(basis, q) >= threshold)
        .unwrap_or(basis.eigenvalues.len())
}
