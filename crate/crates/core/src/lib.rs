//! Parametric reduced-order modelling by barycentric interpolation of POD
//! subspaces.
//!
//! Trained POD bases are treated as points of the quotient manifold of
//! full-rank `N x q` matrices modulo the orthogonal group `O(q)`. A basis for
//! an untrained parameter is the weighted Karcher barycenter of its
//! neighbours, and because that barycenter is an explicit linear combination
//! `sum_k w_k Phi_k Q_k` of the trained bases, the Galerkin operators of the
//! reduced model can be updated online from precomputed cross tensors
//! without touching any mesh-sized array.
//!
//! Module map:
//!
//! * [`manifold`]: exponential/logarithm maps, distance, barycenter, and the
//!   Grassmann tangent-space interpolation baseline.
//! * [`pod`]: snapshot matrices, weighted inner products, method-of-snapshots POD.
//! * [`weights`]: Lagrange and inverse-distance weights, neighbour selection.
//! * [`rom`]: cross-Galerkin tensor assembly, online update, RK4 integration.
//! * [`solver`]: 1D periodic viscous Burgers solver generating snapshots.
//! * [`metrics`]: L2 percentage errors and point probes.
//! * [`study`]: offline/online pipeline tying the above together.

// `!(x > y)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod manifold;
pub mod metrics;
pub mod pod;
pub mod rom;
pub mod solver;
pub mod study;
pub mod weights;

pub use error::{Error, Result};
