//! Relative `L^2` error percentages and point probes.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::{InnerProduct, SnapshotMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Barycentric,
    Itsgm,
    TruthPod,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Barycentric => "barycentric",
            Method::Itsgm => "itsgm",
            Method::TruthPod => "truth_pod",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `(t, E(t))` in percent.
    pub per_time: Vec<(f64, f64)>,
    /// Time-integrated error in percent.
    pub mean: f64,
    pub param: f64,
    pub method: Method,
}

/// `100 ||ref - approx||_W / ||ref||_W`.
pub fn error_at_time(
    reference: &DVector<f64>,
    approx: &DVector<f64>,
    ip: &InnerProduct,
) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(Error::shape("reference and approximation differ in length"));
    }
    let denom = ip.norm(reference);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * ip.norm(&(reference - approx)) / denom)
}

fn check_pair(reference: &SnapshotMatrix, approx: &SnapshotMatrix) -> Result<()> {
    if reference.values.shape() != approx.values.shape() {
        return Err(Error::shape(format!(
            "reference is {:?}, approximation is {:?}",
            reference.values.shape(),
            approx.values.shape()
        )));
    }
    let scale = reference.times.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    if reference
        .times
        .iter()
        .zip(&approx.times)
        .any(|(a, b)| (a - b).abs() > 1e-9 * scale)
    {
        return Err(Error::shape("reference and approximation sampled at different times"));
    }
    Ok(())
}

/// Time-integrated relative error in percent. Both time integrals use the
/// rectangle rule on the (uniform) samples, so the step cancels.
pub fn mean_error(
    reference: &SnapshotMatrix,
    approx: &SnapshotMatrix,
    ip: &InnerProduct,
) -> Result<f64> {
    check_pair(reference, approx)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, a) in reference.values.column_iter().zip(approx.values.column_iter()) {
        let r = r.into_owned();
        let diff = &r - a;
        num += ip.dot(&diff, &diff);
        den += ip.dot(&r, &r);
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * (num / den).sqrt())
}

pub fn error_report(
    reference: &SnapshotMatrix,
    approx: &SnapshotMatrix,
    ip: &InnerProduct,
    method: Method,
) -> Result<ErrorReport> {
    check_pair(reference, approx)?;
    let per_time = reference
        .times
        .iter()
        .zip(reference.values.column_iter().zip(approx.values.column_iter()))
        .map(|(&t, (r, a))| error_at_time(&r.into_owned(), &a.into_owned(), ip).map(|e| (t, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport {
        per_time,
        mean: mean_error(reference, approx, ip)?,
        param: reference.param,
        method,
    })
}

/// Time series of field values at selected grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable {
    pub points: Vec<usize>,
    pub times: Vec<f64>,
    /// One row per time, one entry per probe point.
    pub rows: Vec<Vec<f64>>,
}

impl ProbeTable {
    /// Header `t,value1,value2,...`, values with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.points.len() {
            write!(out, ",value{k}").unwrap();
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            out.push_str(&format_f64(*t));
            for v in row {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn probe(traj: &SnapshotMatrix, points: &[usize]) -> Result<ProbeTable> {
    let n = traj.dofs();
    if let Some(&bad) = points.iter().find(|&&p| p >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let rows = traj
        .values
        .column_iter()
        .map(|c| points.iter().map(|&p| c[p]).collect())
        .collect();
    Ok(ProbeTable {
        points: points.to_vec(),
        times: traj.times.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn ip() -> InnerProduct {
        InnerProduct::uniform(1.0).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn pointwise_error() {
        let r = v(&[3.0, 4.0]);
        assert_eq!(error_at_time(&r, &r, &ip()).unwrap(), 0.0);
        assert_eq!(error_at_time(&r, &v(&[0.0, 0.0]), &ip()).unwrap(), 100.0);
        assert!((error_at_time(&r, &v(&[3.0, 0.0]), &ip()).unwrap() - 80.0).abs() < 1e-12);
        assert!(matches!(
            error_at_time(&v(&[0.0, 0.0]), &r, &ip()),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn scale_covariance() {
        let r = v(&[1.0, -2.0, 0.5]);
        let a = v(&[1.1, -1.8, 0.4]);
        let e = error_at_time(&r, &a, &ip()).unwrap();
        for c in [-3.0, 0.01, 7.0] {
            let ec = error_at_time(&(&r * c), &(&a * c), &ip()).unwrap();
            assert!((e - ec).abs() < 1e-12 * e);
        }
    }

    fn traj(values: DMatrix<f64>) -> SnapshotMatrix {
        let n = values.ncols();
        SnapshotMatrix::new(values, (0..n).map(|i| 0.1 * i as f64).collect(), 0.05).unwrap()
    }

    #[test]
    fn mean_error_identities() {
        let r = traj(DMatrix::from_fn(5, 4, |i, j| ((i + 1) * (j + 2)) as f64 * 0.3 - 1.0));
        assert_eq!(mean_error(&r, &r, &ip()).unwrap(), 0.0);
        let eps = 0.013;
        let scaled = traj(&r.values * (1.0 + eps));
        let e = mean_error(&r, &scaled, &ip()).unwrap();
        assert!((e - 100.0 * eps).abs() < 1e-10 * 100.0 * eps);

        // constant per-time error
        let c = 0.25;
        let shifted = traj(&r.values * (1.0 - c));
        let report = error_report(&r, &shifted, &ip(), Method::Barycentric).unwrap();
        for (_, e) in &report.per_time {
            assert!((e - 25.0).abs() < 1e-10);
        }
        assert!((report.mean - 25.0).abs() < 1e-10);
    }

    #[test]
    fn mean_error_shape_checks() {
        let r = traj(DMatrix::from_element(3, 4, 1.0));
        let a = traj(DMatrix::from_element(3, 3, 1.0));
        assert!(matches!(mean_error(&r, &a, &ip()), Err(Error::ShapeMismatch(_))));
        let z = traj(DMatrix::zeros(3, 4));
        assert!(matches!(mean_error(&z, &r, &ip()), Err(Error::ZeroReference)));
    }

    #[test]
    fn probe_lookup() {
        let m = DMatrix::from_fn(4, 3, |i, j| (10 * i + j) as f64);
        let t = traj(m.clone());
        let table = probe(&t, &[0, 1, 2, 3]).unwrap();
        for (j, row) in table.rows.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                assert_eq!(*v, m[(i, j)]);
            }
        }
        assert!(matches!(probe(&t, &[4]), Err(Error::IndexOutOfRange { index: 4, len: 4 })));
        let csv = probe(&t, &[2]).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,value1"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 20.0]);
    }

    #[test]
    fn format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23] {
            assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
