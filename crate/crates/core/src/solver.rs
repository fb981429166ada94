//! Full-order model: viscous Burgers equation on a periodic interval,
//!
//! ```text
//! du/dt - nu d2u/dx2 + u du/dx = 0,
//! ```
//!
//! with backward Euler in time, implicit diffusion and second-order
//! Adams-Bashforth extrapolation of the convection term:
//!
//! ```text
//! (I - nu dt Lap) u^n = u^{n-1} - 3 dt / 2 N(u^{n-1}) + dt / 2 N(u^{n-2}).
//! ```
//!
//! Space is discretised by second-order central differences and the
//! convection term is written in the split form
//! `N(u) = 1/2 (u D u + D(u^2 / 2))`, which conserves the discrete mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::{InnerProduct, SnapshotMatrix};
use crate::rom::GalerkinOperators;

/// Threshold on `max |u|` beyond which a run is declared diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Uniform periodic grid with `n` points on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n: usize,
    pub length: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidInput(format!("grid needs at least 8 points, got {n}")));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidInput("domain length must be positive".into()));
        }
        Ok(Grid1D { n, length })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn points(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| i as f64 * self.dx())
    }

    /// Quadrature weight `dx` for the discrete `L^2` product.
    pub fn inner_product(&self) -> InnerProduct {
        InnerProduct::Uniform(self.dx())
    }

    /// Central difference `(u_{i+1} - u_{i-1}) / 2dx`.
    pub fn central_diff(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        let s = 0.5 / self.dx();
        DVector::from_fn(n, |i, _| (u[(i + 1) % n] - u[(i + n - 1) % n]) * s)
    }

    /// Forward difference `(u_{i+1} - u_i) / dx`.
    pub fn forward_diff(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        let s = 1.0 / self.dx();
        DVector::from_fn(n, |i, _| (u[(i + 1) % n] - u[i]) * s)
    }

    /// Three-point Laplacian.
    pub fn laplacian(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        let s = 1.0 / (self.dx() * self.dx());
        DVector::from_fn(n, |i, _| (u[(i + 1) % n] - 2.0 * u[i] + u[(i + n - 1) % n]) * s)
    }

    /// Split convection `1/2 v D w + 1/4 D(v w)`; for `v = w = u` this is
    /// `N(u) = 1/2 (u u_x + (u^2/2)_x)`, whose entries sum to zero.
    pub fn skew_convection(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let adv = v.component_mul(&self.central_diff(w));
        let cons = self.central_diff(&v.component_mul(w));
        adv * 0.5 + cons * 0.25
    }

    /// Nonlinear term `N(u)`.
    pub fn nonlinear(&self, u: &DVector<f64>) -> DVector<f64> {
        self.skew_convection(u, u)
    }
}

/// The forward difference pairs with the three-point Laplacian through
/// summation by parts, `<D+ a, D+ b> = -<Lap a, b>`, so the reduced viscous
/// term is the exact projection of the solver's diffusion.
impl GalerkinOperators for Grid1D {
    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        self.forward_diff(v)
    }

    fn convection(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.skew_convection(v, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    /// `sin(2 pi x / L)`.
    Sine,
    /// `1 + 0.5 sin(2 pi x / L) + 0.25 sin(4 pi x / L)`.
    TwoMode,
    Custom(Vec<f64>),
}

impl InitialProfile {
    pub fn sample(&self, grid: &Grid1D) -> Result<DVector<f64>> {
        let k = 2.0 * std::f64::consts::PI / grid.length;
        let x = grid.points();
        match self {
            InitialProfile::Sine => Ok(x.map(|x| (k * x).sin())),
            InitialProfile::TwoMode => {
                Ok(x.map(|x| 1.0 + 0.5 * (k * x).sin() + 0.25 * (2.0 * k * x).sin()))
            }
            InitialProfile::Custom(v) if v.len() == grid.n => Ok(DVector::from_column_slice(v)),
            InitialProfile::Custom(v) => Err(Error::shape(format!(
                "custom initial profile has {} values for {} grid points",
                v.len(),
                grid.n
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Kinematic viscosity (m^2/s).
    pub nu: f64,
    /// Time step (s).
    pub dt: f64,
    /// Total number of time steps, transient included.
    pub steps: usize,
    pub initial: InitialProfile,
    pub save_every: usize,
    /// Steps discarded before the first stored snapshot.
    #[serde(default)]
    pub transient: usize,
    /// Disable to solve the heat equation.
    #[serde(default = "default_true")]
    pub convection: bool,
}

fn default_true() -> bool {
    true
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.nu > 0.0) {
            return Err(Error::InvalidInput("dt and nu must be positive".into()));
        }
        if self.save_every == 0 {
            return Err(Error::InvalidInput("save_every must be >= 1".into()));
        }
        if self.transient > self.steps {
            return Err(Error::InvalidInput("transient exceeds total steps".into()));
        }
        Ok(())
    }

    /// Number of snapshots `run` stores.
    pub fn snapshot_count(&self) -> usize {
        (self.steps - self.transient) / self.save_every + 1
    }
}

/// Solves the symmetric circulant tridiagonal system
/// `(1 + 2r) x_i - r (x_{i-1} + x_{i+1}) = b_i` by the Sherman-Morrison
/// correction of a Thomas sweep. The factorisation is computed once.
#[derive(Debug, Clone)]
struct CyclicTridiagonal {
    off: f64,
    modified_diag: Vec<f64>,
    // Thomas sweep coefficients for the modified (non-cyclic) matrix.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    gamma: f64,
    correction: Vec<f64>,
}

impl CyclicTridiagonal {
    fn new(n: usize, r: f64) -> Self {
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        let gamma = -diag;
        let mut modified_diag = vec![diag; n];
        modified_diag[0] = diag - gamma;
        modified_diag[n - 1] = diag - off * off / gamma;

        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = modified_diag[0];
        c_prime[0] = off / denom[0];
        for i in 1..n {
            denom[i] = modified_diag[i] - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        let mut solver = CyclicTridiagonal {
            off,
            modified_diag,
            c_prime,
            denom,
            gamma,
            correction: Vec::new(),
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        solver.correction = solver.thomas(&u);
        solver
    }

    fn thomas(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut d = vec![0.0; n];
        d[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            d[i] = (rhs[i] - self.off * d[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.c_prime[i] * d[i + 1];
        }
        d
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = rhs.len();
        debug_assert_eq!(n, self.modified_diag.len());
        let y = self.thomas(rhs.as_slice());
        let z = &self.correction;
        let fact = (y[0] + self.off * y[n - 1] / self.gamma)
            / (1.0 + z[0] + self.off * z[n - 1] / self.gamma);
        DVector::from_fn(n, |i, _| y[i] - fact * z[i])
    }
}

/// Time stepper holding the factorised implicit operator.
#[derive(Debug, Clone)]
pub struct BurgersSolver {
    grid: Grid1D,
    nu: f64,
    dt: f64,
    convection: bool,
    implicit: CyclicTridiagonal,
}

impl BurgersSolver {
    pub fn new(grid: Grid1D, nu: f64, dt: f64, convection: bool) -> Result<Self> {
        if !(dt > 0.0) || !(nu > 0.0) {
            return Err(Error::InvalidInput("dt and nu must be positive".into()));
        }
        let r = nu * dt / (grid.dx() * grid.dx());
        Ok(BurgersSolver {
            grid,
            nu,
            dt,
            convection,
            implicit: CyclicTridiagonal::new(grid.n, r),
        })
    }

    /// One step from `u^{n-1}`, `u^{n-2}`. The increment `u^n - u^{n-1}` is
    /// solved for, so a steady uniform state is reproduced exactly.
    pub fn advance(&self, u_nm1: &DVector<f64>, u_nm2: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.grid.n;
        if u_nm1.len() != n || u_nm2.len() != n {
            return Err(Error::shape(format!("fields must have {n} entries")));
        }
        let mut rhs = self.grid.laplacian(u_nm1) * (self.nu * self.dt);
        if self.convection {
            rhs -= self.grid.nonlinear(u_nm1) * (1.5 * self.dt);
            rhs += self.grid.nonlinear(u_nm2) * (0.5 * self.dt);
        }
        let next = u_nm1 + self.implicit.solve(&rhs);
        let max_abs = next.amax();
        if !(max_abs <= DIVERGENCE_BOUND) {
            return Err(Error::DivergedSolution { step: 0, max_abs });
        }
        Ok(next)
    }
}

/// Single time step; see [`BurgersSolver::advance`].
pub fn step(
    u_nm1: &DVector<f64>,
    u_nm2: &DVector<f64>,
    cfg: &SolverConfig,
    grid: &Grid1D,
) -> Result<DVector<f64>> {
    BurgersSolver::new(*grid, cfg.nu, cfg.dt, cfg.convection)?.advance(u_nm1, u_nm2)
}

/// Integrates from the initial profile and stores the state at step
/// `transient` and every `save_every` steps after it.
pub fn run(cfg: &SolverConfig, grid: &Grid1D) -> Result<SnapshotMatrix> {
    cfg.validate()?;
    let solver = BurgersSolver::new(*grid, cfg.nu, cfg.dt, cfg.convection)?;
    let mut current = cfg.initial.sample(grid)?;
    // AB2 bootstrap: u^{-1} := u^0.
    let mut previous = current.clone();

    let count = cfg.snapshot_count();
    let mut values = DMatrix::zeros(grid.n, count);
    let mut times = Vec::with_capacity(count);
    let mut stored = 0;
    for s in 0..=cfg.steps {
        if s > 0 {
            let next = solver.advance(&current, &previous).map_err(|e| match e {
                Error::DivergedSolution { max_abs, .. } => Error::DivergedSolution { step: s, max_abs },
                other => other,
            })?;
            previous = std::mem::replace(&mut current, next);
        }
        if s >= cfg.transient && (s - cfg.transient).is_multiple_of(cfg.save_every) {
            values.set_column(stored, &current);
            times.push(s as f64 * cfg.dt);
            stored += 1;
        }
    }
    debug_assert_eq!(stored, count);
    SnapshotMatrix::new(values, times, cfg.nu)
}
