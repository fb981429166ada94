//! Scalar interpolation weights over trained parameter values.
//!
//! Every scheme satisfies partition of unity and is a Kronecker delta at the
//! nodes, which is what makes the barycenter reproduce trained subspaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    #[default]
    Lagrange,
    #[serde(alias = "idw")]
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub kind: WeightKind,
    /// Exponent of the inverse-distance weights.
    pub power: f64,
    pub nodes: Vec<f64>,
}

impl WeightScheme {
    pub const DEFAULT_POWER: f64 = 2.0;

    pub fn lagrange(nodes: Vec<f64>) -> Self {
        WeightScheme {
            kind: WeightKind::Lagrange,
            power: Self::DEFAULT_POWER,
            nodes,
        }
    }

    pub fn inverse_distance(nodes: Vec<f64>, power: f64) -> Self {
        WeightScheme {
            kind: WeightKind::InverseDistance,
            power,
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub target: f64,
}

impl WeightVector {
    /// Kronecker vector of length `n` at `index`.
    pub fn delta(n: usize, index: usize, target: f64) -> Self {
        let mut values = vec![0.0; n];
        values[index] = 1.0;
        WeightVector { values, target }
    }

    /// Spreads weights computed on a subset of nodes back onto the full
    /// node list; unselected nodes get zero weight.
    pub fn scatter(&self, indices: &[usize], n: usize) -> WeightVector {
        let mut values = vec![0.0; n];
        for (&i, &w) in indices.iter().zip(&self.values) {
            values[i] = w;
        }
        WeightVector {
            values,
            target: self.target,
        }
    }
}

pub fn evaluate_weights(scheme: &WeightScheme, target: f64) -> Result<WeightVector> {
    let nodes = &scheme.nodes;
    if nodes.is_empty() {
        return Err(Error::InvalidInput("weight scheme has no nodes".into()));
    }
    for (i, a) in nodes.iter().enumerate() {
        if nodes[i + 1..].contains(a) {
            return Err(Error::DuplicateNodes);
        }
    }
    if let Some(h) = nodes.iter().position(|&v| v == target) {
        return Ok(WeightVector::delta(nodes.len(), h, target));
    }
    let values = match scheme.kind {
        WeightKind::Lagrange => (0..nodes.len())
            .map(|k| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &nj)| (target - nj) / (nodes[k] - nj))
                    .product()
            })
            .collect(),
        WeightKind::InverseDistance => {
            let raw: Vec<f64> = nodes
                .iter()
                .map(|&nk| (target - nk).abs().powf(-scheme.power))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / total).collect()
        }
    };
    Ok(WeightVector { values, target })
}

/// Indices of the `m` nodes closest to `target`, ties going to the smaller
/// parameter, returned in ascending parameter order.
pub fn select_neighbors(params: &[f64], target: f64, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..params.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (params[a] - target).abs();
        let db = (params[b] - target).abs();
        da.total_cmp(&db).then(params[a].total_cmp(&params[b]))
    });
    order.truncate(m.min(params.len()));
    order.sort_by(|&a, &b| params[a].total_cmp(&params[b]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lagrange_hits_node() {
        let w = evaluate_weights(&WeightScheme::lagrange(vec![1.0, 2.0, 3.0]), 2.0).unwrap();
        assert_eq!(w.values, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn lagrange_midpoint() {
        let w = evaluate_weights(&WeightScheme::lagrange(vec![1.0, 2.0, 3.0]), 1.5).unwrap();
        let expected = [0.375, 0.75, -0.125];
        for (a, b) in w.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn idw_symmetric() {
        let w = evaluate_weights(&WeightScheme::inverse_distance(vec![0.0, 1.0], 2.0), 0.5).unwrap();
        assert_eq!(w.values, vec![0.5, 0.5]);
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let err = evaluate_weights(&WeightScheme::lagrange(vec![1.0, 1.0]), 0.3);
        assert!(matches!(err, Err(Error::DuplicateNodes)));
    }

    #[test]
    fn neighbors() {
        assert_eq!(select_neighbors(&[90.0, 120.0, 150.0, 180.0], 100.0, 3), vec![0, 1, 2]);
        assert_eq!(select_neighbors(&[90.0, 120.0, 150.0, 180.0], 150.0, 1), vec![2]);
        assert_eq!(select_neighbors(&[0.0, 2.0], 1.0, 1), vec![0]);
        assert_eq!(select_neighbors(&[2.0, 0.0], 1.0, 1), vec![1]);
        // ascending parameter order regardless of input order
        assert_eq!(select_neighbors(&[150.0, 90.0, 120.0], 100.0, 3), vec![1, 2, 0]);
    }

    fn distinct_nodes() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..6).prop_filter("distinct", |v| {
            v.iter()
                .enumerate()
                .all(|(i, a)| v[i + 1..].iter().all(|b| (a - b).abs() > 0.05))
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity(nodes in distinct_nodes(), target in -5.0f64..5.0, idw in any::<bool>()) {
            let scheme = if idw {
                WeightScheme::inverse_distance(nodes, 2.0)
            } else {
                WeightScheme::lagrange(nodes)
            };
            let w = evaluate_weights(&scheme, target).unwrap();
            let sum: f64 = w.values.iter().sum();
            // Lagrange weights on spread nodes can be large; scale the bound.
            let scale = w.values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!((sum - 1.0).abs() < 1e-12 * scale);
        }

        #[test]
        fn kronecker_at_nodes(nodes in distinct_nodes(), pick in 0usize..6, idw in any::<bool>()) {
            let h = pick % nodes.len();
            let scheme = if idw {
                WeightScheme::inverse_distance(nodes.clone(), 2.0)
            } else {
                WeightScheme::lagrange(nodes.clone())
            };
            let w = evaluate_weights(&scheme, nodes[h]).unwrap();
            for (k, v) in w.values.iter().enumerate() {
                prop_assert_eq!(*v, if k == h { 1.0 } else { 0.0 });
            }
        }

        #[test]
        fn lagrange_reproduces_polynomials(
            nodes in distinct_nodes(),
            coeffs in prop::collection::vec(-2.0f64..2.0, 4),
            target in -5.0f64..5.0,
        ) {
            let degree = nodes.len() - 1;
            let p = |x: f64| coeffs.iter().take(degree.min(3) + 1).rev().fold(0.0, |acc, c| acc * x + c);
            let w = evaluate_weights(&WeightScheme::lagrange(nodes.clone()), target).unwrap();
            let interp: f64 = w.values.iter().zip(&nodes).map(|(wk, &nk)| wk * p(nk)).sum();
            let scale = w.values.iter().zip(&nodes).map(|(wk, &nk)| (wk * p(nk)).abs()).sum::<f64>().max(p(target).abs()).max(1.0);
            prop_assert!((interp - p(target)).abs() < 1e-10 * scale);
        }
    }
}
