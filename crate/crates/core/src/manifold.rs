//! Geometry of the quotient manifold `R^{N x q}_* / O(q)`.
//!
//! A point is the equivalence class of a full-rank `N x q` matrix under right
//! multiplication by orthogonal `q x q` matrices. With the horizontal lift
//! used here the exponential map is plain addition, `Exp_Phi(xi) = pi(Phi + xi)`,
//! and the logarithm aligns the target to the base with the orthogonal
//! Procrustes rotation `Q = V U^T` taken from the SVD `Phi^T Psi = U S V^T`:
//!
//! ```text
//! Log_Phi(Psi) = Psi Q - Phi,      d(Phi, Psi) = || Psi Q - Phi ||_F
//! ```
//!
//! The weighted Karcher barycenter minimises `1/2 sum_k w_k d^2(Phi_k, Phi)`;
//! its stationarity condition is the fixed point `Phi = sum_k w_k Phi_k Q_k`,
//! solved here by direct iteration.
//!
//! The module also hosts the Grassmann tangent-space interpolation (ITSGM)
//! used as the reference method.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::weights::{evaluate_weights, WeightScheme};

/// Relative singular-value threshold below which a matrix is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Relative singular-value threshold for the overlap `Phi^T Psi`.
pub const OVERLAP_TOL: f64 = 1e-12;

fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

/// Full column rank `N x q` matrix, `N > q >= 1`. Representative of a point
/// of the quotient manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(DMatrix<f64>);

impl BasisMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_rank_tol(entries, RANK_TOL)
    }

    pub fn with_rank_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        let (n, q) = entries.shape();
        if q == 0 || n <= q {
            return Err(Error::shape(format!(
                "basis must satisfy N > q >= 1, got {n}x{q}"
            )));
        }
        let ratio = singular_ratio(&entries);
        if !(ratio > rank_tol) {
            return Err(Error::RankDeficient { ratio });
        }
        Ok(BasisMatrix(entries))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of modes `q`.
    pub fn modes(&self) -> usize {
        self.0.ncols()
    }

    /// Right multiplication by an orthogonal matrix; stays in the same class.
    pub fn rotated(&self, rotation: &AlignmentRotation) -> BasisMatrix {
        BasisMatrix(&self.0 * rotation.matrix())
    }
}

/// Horizontal tangent vector at a base point; same shape as the base.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizontalVector(DMatrix<f64>);

impl HorizontalVector {
    pub fn new(entries: DMatrix<f64>) -> Self {
        HorizontalVector(entries)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Orthogonal `q x q` matrix aligning one representative to another.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRotation(DMatrix<f64>);

impl AlignmentRotation {
    pub fn identity(q: usize) -> Self {
        AlignmentRotation(DMatrix::identity(q, q))
    }

    /// Checks `Q^T Q = I` within `1e-12` in Frobenius norm.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::shape("rotation must be square"));
        }
        let q = entries.nrows();
        let defect = (entries.transpose() * &entries - DMatrix::identity(q, q)).norm();
        if defect > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthogonal (||Q^T Q - I|| = {defect:e})"
            )));
        }
        Ok(AlignmentRotation(entries))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn transpose(&self) -> AlignmentRotation {
        AlignmentRotation(self.0.transpose())
    }
}

/// Procrustes rotation `Q = V U^T` from the SVD of the overlap `U S V^T`.
///
/// `Q` is the orthogonal matrix minimising `|| Psi Q - Phi ||_F` when
/// `overlap = Phi^T Psi`.
pub fn procrustes_rotation(overlap: &DMatrix<f64>) -> Result<AlignmentRotation> {
    if !overlap.is_square() {
        return Err(Error::shape("overlap matrix must be square"));
    }
    let svd = overlap.clone().svd(true, true);
    let max = svd.singular_values.max();
    let ratio = if max > 0.0 {
        svd.singular_values.min() / max
    } else {
        0.0
    };
    if !(ratio > OVERLAP_TOL) {
        return Err(Error::SingularOverlap { ratio });
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    Ok(AlignmentRotation(v_t.transpose() * u.transpose()))
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "expected {:?}, got {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Exponential map: the representative `base + tangent` of `pi(base + tangent)`.
///
/// Only the end point of the segment `base + t tangent` is rank checked.
pub fn exp_map(base: &BasisMatrix, tangent: &HorizontalVector) -> Result<BasisMatrix> {
    check_same_shape(base.matrix(), tangent.matrix())?;
    BasisMatrix::new(base.matrix() + tangent.matrix())
}

/// Logarithm map: `xi = Psi Q - Phi` together with the alignment `Q`.
pub fn log_map(
    base: &BasisMatrix,
    target: &BasisMatrix,
) -> Result<(HorizontalVector, AlignmentRotation)> {
    check_same_shape(base.matrix(), target.matrix())?;
    let q = procrustes_rotation(&(base.matrix().transpose() * target.matrix()))?;
    let xi = target.matrix() * q.matrix() - base.matrix();
    Ok((HorizontalVector(xi), q))
}

/// Riemannian distance `|| b Q - a ||_F` between `pi(a)` and `pi(b)`.
pub fn distance(a: &BasisMatrix, b: &BasisMatrix) -> Result<f64> {
    log_map(a, b).map(|(xi, _)| xi.norm())
}

/// Orthonormal representative of `span(m)` from a thin QR factorisation,
/// with the diagonal of `R` made positive.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let q_cols = m.ncols();
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q_cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Distance between the subspaces spanned by `a` and `b`: the quotient
/// distance between their orthonormalised representatives. Zero iff the
/// spans coincide.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let rot = procrustes_rotation(&(qa.transpose() * &qb))?;
    Ok((qb * rot.matrix() - qa).norm())
}

/// Starting point of the barycenter iteration.
#[derive(Debug, Clone)]
pub enum BarycenterInit {
    /// Start from the trained basis with this index.
    Index(usize),
    /// Start from an arbitrary representative.
    Basis(BasisMatrix),
}

#[derive(Debug, Clone)]
pub struct BarycenterOptions {
    /// Stopping threshold on `|| Phi - sum_k w_k Phi_k Q_k ||_F`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: BarycenterInit,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        BarycenterOptions {
            tol: 1e-10,
            max_iter: 100,
            init: BarycenterInit::Index(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    /// `sum_k w_k Phi_k Q_k` with the rotations below.
    pub representative: BasisMatrix,
    /// One alignment per trained basis, in input order.
    pub rotations: Vec<AlignmentRotation>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
}

/// Gradient of the barycenter objective at `point`, returned as the
/// fixed-point image `sum_k w_k Phi_k Q_k`, the rotations, and
/// `|| point - image ||_F`.
pub fn barycenter_step(
    point: &DMatrix<f64>,
    bases: &[BasisMatrix],
    weights: &[f64],
) -> Result<(DMatrix<f64>, Vec<AlignmentRotation>, f64)> {
    let point_t = point.transpose();
    let mut image = DMatrix::zeros(point.nrows(), point.ncols());
    let mut rotations = Vec::with_capacity(bases.len());
    for (basis, &w) in bases.iter().zip(weights) {
        let rot = procrustes_rotation(&(&point_t * basis.matrix()))?;
        if w != 0.0 {
            image += (basis.matrix() * rot.matrix()) * w;
        }
        rotations.push(rot);
    }
    let grad = (point - &image).norm();
    Ok((image, rotations, grad))
}

/// Weighted Karcher barycenter of `bases` by the fixed-point iteration
/// `Phi <- sum_k w_k Phi_k Q_k(Phi)`.
///
/// Weights may be negative but must sum to one. The iteration stops as soon
/// as the gradient norm at the current iterate drops to `tol`; the returned
/// representative is the fixed-point image computed from that iterate, so it
/// is exactly `sum_k w_k Phi_k Q_k` with the returned rotations.
pub fn karcher_barycenter(
    bases: &[BasisMatrix],
    weights: &[f64],
    opts: &BarycenterOptions,
) -> Result<BarycenterResult> {
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidInput("no bases".into()))?;
    if weights.len() != bases.len() {
        return Err(Error::shape(format!(
            "{} weights for {} bases",
            weights.len(),
            bases.len()
        )));
    }
    for b in bases {
        check_same_shape(first.matrix(), b.matrix())?;
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "weights must sum to 1, got {sum}"
        )));
    }

    let mut current = match &opts.init {
        BarycenterInit::Index(i) => bases
            .get(*i)
            .ok_or(Error::IndexOutOfRange {
                index: *i,
                len: bases.len(),
            })?
            .matrix()
            .clone(),
        BarycenterInit::Basis(b) => {
            check_same_shape(first.matrix(), b.matrix())?;
            b.matrix().clone()
        }
    };

    let mut last = None;
    for iteration in 1..=opts.max_iter {
        let (image, rotations, grad) = barycenter_step(&current, bases, weights)?;
        let representative = BasisMatrix::new(image)?;
        if grad <= opts.tol {
            return Ok(BarycenterResult {
                representative,
                rotations,
                iterations: iteration,
                final_gradient_norm: grad,
                converged: true,
            });
        }
        current = representative.matrix().clone();
        last = Some(BarycenterResult {
            representative,
            rotations,
            iterations: iteration,
            final_gradient_norm: grad,
            converged: false,
        });
    }
    let last = last.ok_or_else(|| Error::InvalidInput("max_iter must be >= 1".into()))?;
    Err(Error::NotConverged {
        iterations: last.iterations,
        gradient_norm: last.final_gradient_norm,
        last: Box::new(last),
    })
}

/// Grassmann logarithm of `span(target)` at the orthonormal `reference`:
/// `U atan(S) V^T` from the thin SVD of
/// `(I - P P^T) T (P^T T)^{-1}`.
fn grassmann_log(reference: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let overlap = reference.transpose() * target;
    let ratio = singular_ratio(&overlap);
    if !(ratio > OVERLAP_TOL) {
        return Err(Error::SingularOverlap { ratio });
    }
    let inv = overlap
        .try_inverse()
        .ok_or(Error::SingularOverlap { ratio })?;
    let normal = target - reference * (reference.transpose() * target);
    let svd = (normal * inv).svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let angles = svd.singular_values.map(f64::atan);
    Ok(u * DMatrix::from_diagonal(&angles) * v_t)
}

/// Grassmann exponential at the orthonormal `reference`:
/// `P V cos(S) + U sin(S)` from the thin SVD `xi = U S V^T`.
fn grassmann_exp(reference: &DMatrix<f64>, velocity: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = velocity.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let cos = DMatrix::from_diagonal(&svd.singular_values.map(f64::cos));
    let sin = DMatrix::from_diagonal(&svd.singular_values.map(f64::sin));
    reference * v_t.transpose() * cos + u * sin
}

/// ITSGM with caller-supplied weights on the tangent vectors.
///
/// All bases are orthonormalised first, so any full-rank representatives are
/// accepted. The result has orthonormal columns.
pub fn itsgm_interpolate_weighted(
    bases: &[BasisMatrix],
    weights: &[f64],
    ref_index: usize,
) -> Result<BasisMatrix> {
    let reference = bases.get(ref_index).ok_or(Error::IndexOutOfRange {
        index: ref_index,
        len: bases.len(),
    })?;
    if weights.len() != bases.len() {
        return Err(Error::shape(format!(
            "{} weights for {} bases",
            weights.len(),
            bases.len()
        )));
    }
    for b in bases {
        check_same_shape(reference.matrix(), b.matrix())?;
    }
    let reference = orthonormalize(reference.matrix());
    let mut velocity = DMatrix::zeros(reference.nrows(), reference.ncols());
    for (basis, &w) in bases.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let xi = grassmann_log(&reference, &orthonormalize(basis.matrix()))?;
        velocity += xi * w;
    }
    BasisMatrix::new(grassmann_exp(&reference, &velocity))
}

/// Interpolation on the tangent space of the Grassmann manifold: log-map all
/// trained subspaces to the tangent space at `bases[ref_index]`, combine the
/// tangent vectors with Lagrange weights at `target`, and map back.
pub fn itsgm_interpolate(
    bases: &[BasisMatrix],
    params: &[f64],
    target: f64,
    ref_index: usize,
) -> Result<BasisMatrix> {
    if params.len() != bases.len() {
        return Err(Error::shape(format!(
            "{} parameters for {} bases",
            params.len(),
            bases.len()
        )));
    }
    let weights = evaluate_weights(&WeightScheme::lagrange(params.to_vec()), target)?;
    itsgm_interpolate_weighted(bases, &weights.values, ref_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn col(v: &[f64]) -> BasisMatrix {
        BasisMatrix::new(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn basis_rejects_rank_deficient_and_bad_shapes() {
        let m = dmatrix![1.0, 2.0; 2.0, 4.0; 3.0, 6.0];
        assert!(matches!(BasisMatrix::new(m), Err(Error::RankDeficient { .. })));
        let square = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(BasisMatrix::new(square), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let phi = BasisMatrix::new(dmatrix![1.0, 0.0; 0.5, 1.0; 0.0, 2.0]).unwrap();
        let zero = HorizontalVector::new(DMatrix::zeros(3, 2));
        assert_eq!(exp_map(&phi, &zero).unwrap(), phi);
    }

    #[test]
    fn exp_is_addition() {
        let phi = col(&[1.0, 0.0, 0.0]);
        let xi = HorizontalVector::new(DMatrix::from_column_slice(3, 1, &[-0.4, 0.8, 0.0]));
        let out = exp_map(&phi, &xi).unwrap();
        let expected = [0.6, 0.8, 0.0];
        for (a, b) in out.matrix().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_reports_rank_loss() {
        let phi = col(&[1.0, 0.0, 0.0]);
        let xi = HorizontalVector::new(DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 0.0]));
        assert!(matches!(exp_map(&phi, &xi), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn log_of_self_and_rotated_self() {
        let phi = BasisMatrix::new(dmatrix![1.0, 0.2; 0.3, 1.0; 0.5, -0.4; 0.0, 0.7]).unwrap();
        let (xi, q) = log_map(&phi, &phi).unwrap();
        assert!(xi.norm() < 1e-14);
        assert!((q.matrix() - DMatrix::identity(2, 2)).norm() < 1e-14);

        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q0 = AlignmentRotation::new(dmatrix![c, -s; s, c]).unwrap();
        let (xi, q) = log_map(&phi, &phi.rotated(&q0)).unwrap();
        assert!(xi.norm() < 1e-14);
        assert!((q.matrix() - q0.matrix().transpose()).norm() < 1e-14);
    }

    #[test]
    fn log_single_column_example() {
        // For q = 1 the only rotations are +1 and -1.
        let phi = col(&[1.0, 0.0, 0.0]);
        let psi = col(&[0.6, 0.8, 0.0]);
        let (xi, q) = log_map(&phi, &psi).unwrap();
        let brute = [1.0f64, -1.0]
            .into_iter()
            .min_by(|a, b| {
                let da = (psi.matrix() * *a - phi.matrix()).norm();
                let db = (psi.matrix() * *b - phi.matrix()).norm();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(q.matrix()[(0, 0)], brute);
        let expected = [-0.4, 0.8, 0.0];
        for (a, b) in xi.matrix().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let d = distance(&phi, &psi).unwrap();
        assert!((d - 0.8f64.sqrt()).abs() < 1e-15);
        assert!((d - 0.894427).abs() < 1e-6);
    }

    #[test]
    fn log_rejects_orthogonal_subspaces() {
        let phi = col(&[1.0, 0.0, 0.0]);
        let psi = col(&[0.0, 1.0, 0.0]);
        assert!(matches!(log_map(&phi, &psi), Err(Error::SingularOverlap { .. })));
        assert!(matches!(distance(&phi, &psi), Err(Error::SingularOverlap { .. })));
    }

    #[test]
    fn orthonormalize_has_positive_diagonal() {
        let m = dmatrix![-2.0, 1.0; 0.0, -3.0; 1.0, 1.0];
        let q = orthonormalize(&m);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
        let r = q.transpose() * &m;
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
    }

    #[test]
    fn barycenter_two_points_hand_example() {
        let b = vec![
            BasisMatrix::new(dmatrix![1.0; 0.0]).unwrap(),
            BasisMatrix::new(dmatrix![0.6; 0.8]).unwrap(),
        ];
        let res = karcher_barycenter(&b, &[0.5, 0.5], &BarycenterOptions::default()).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.final_gradient_norm, 0.0);
        assert!((res.representative.matrix()[(0, 0)] - 0.8).abs() < 1e-15);
        assert!((res.representative.matrix()[(1, 0)] - 0.4).abs() < 1e-15);
        // direction bisects the inputs at atan(0.5)
        let angle = res.representative.matrix()[(1, 0)].atan2(res.representative.matrix()[(0, 0)]);
        assert!((angle - 0.5f64.atan()).abs() < 1e-15);
    }

    #[test]
    fn barycenter_delta_weights_reproduce_node() {
        let b = vec![
            BasisMatrix::new(dmatrix![1.0, 0.0; 0.0, 1.0; 0.2, 0.1]).unwrap(),
            BasisMatrix::new(dmatrix![1.0, 0.3; 0.1, 1.0; -0.4, 0.2]).unwrap(),
        ];
        let opts = BarycenterOptions {
            init: BarycenterInit::Index(1),
            ..Default::default()
        };
        let res = karcher_barycenter(&b, &[0.0, 1.0], &opts).unwrap();
        assert!(res.iterations <= 2);
        assert!(subspace_distance(res.representative.matrix(), b[1].matrix()).unwrap() < 1e-10);
    }

    #[test]
    fn barycenter_rejects_bad_weights() {
        let b = vec![BasisMatrix::new(dmatrix![1.0; 0.0]).unwrap()];
        assert!(matches!(
            karcher_barycenter(&b, &[0.5], &BarycenterOptions::default()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            karcher_barycenter(&b, &[0.5, 0.5], &BarycenterOptions::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn barycenter_reports_non_convergence() {
        let b = vec![
            BasisMatrix::new(dmatrix![1.0; 0.0]).unwrap(),
            BasisMatrix::new(dmatrix![0.6; 0.8]).unwrap(),
        ];
        let opts = BarycenterOptions {
            max_iter: 1,
            ..Default::default()
        };
        match karcher_barycenter(&b, &[0.5, 0.5], &opts) {
            Err(Error::NotConverged { last, gradient_norm, .. }) => {
                assert!(gradient_norm > 0.0);
                assert!(!last.converged);
                assert_eq!(last.rotations.len(), 2);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn itsgm_single_basis_is_constant() {
        let b = vec![BasisMatrix::new(dmatrix![1.0, 0.0; 0.0, 1.0; 0.3, 0.3]).unwrap()];
        let out = itsgm_interpolate(&b, &[1.0], 7.5, 0).unwrap();
        assert!(subspace_distance(out.matrix(), b[0].matrix()).unwrap() < 1e-12);
        let m = out.matrix();
        assert!((m.transpose() * m - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
