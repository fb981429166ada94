use barycentric_rom::solver::{run, BurgersSolver, Grid1D, InitialProfile, SolverConfig};
use nalgebra::DVector;
use proptest::prelude::*;

fn grid(n: usize) -> Grid1D {
    Grid1D::new(n, 2.0 * std::f64::consts::PI).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn momentum_is_conserved(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 4),
        nu in 0.02f64..0.2,
    ) {
        let g = grid(64);
        let x = g.points();
        let u0 = x.map(|x| {
            coeffs[0] + coeffs[1] * x.sin() + coeffs[2] * (2.0 * x).cos() + coeffs[3] * (3.0 * x).sin()
        });
        let solver = BurgersSolver::new(g, nu, 1e-3, true).unwrap();
        let (mut prev, mut cur) = (u0.clone(), u0.clone());
        let m0 = u0.sum();
        for _ in 0..100 {
            let next = solver.advance(&cur, &prev).unwrap();
            prop_assert!((next.sum() - cur.sum()).abs() * g.dx() < 1e-12);
            prev = std::mem::replace(&mut cur, next);
        }
        prop_assert!((cur.sum() - m0).abs() * g.dx() < 1e-11);
    }

    #[test]
    fn convection_has_zero_sum(values in proptest::collection::vec(-2.0f64..2.0, 16)) {
        let g = grid(16);
        let u = DVector::from_vec(values);
        let n = g.nonlinear(&u);
        prop_assert!(n.sum().abs() < 1e-12 * (1.0 + n.amax()) * 16.0);
    }

    #[test]
    fn summation_by_parts(a in proptest::collection::vec(-1.0f64..1.0, 12),
                          b in proptest::collection::vec(-1.0f64..1.0, 12)) {
        let g = grid(12);
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let lhs = g.forward_diff(&a).dot(&g.forward_diff(&b));
        let rhs = -g.laplacian(&a).dot(&b);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }
}

#[test]
fn uniform_state_is_steady() {
    let g = grid(32);
    let cfg = SolverConfig {
        nu: 0.1,
        dt: 1e-2,
        steps: 50,
        initial: InitialProfile::Custom(vec![1.25; 32]),
        save_every: 10,
        transient: 0,
        convection: true,
    };
    let s = run(&cfg, &g).unwrap();
    assert!(s.values.iter().all(|&v| v == 1.25));
}

#[test]
fn heat_decay_is_first_order_in_time() {
    let nu = 0.1;
    let g = grid(64);
    let dx = g.dx();
    let mu = 4.0 / (dx * dx) * (0.5 * dx).sin().powi(2);
    let error = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let cfg = SolverConfig {
            nu,
            dt,
            steps,
            initial: InitialProfile::Sine,
            save_every: steps,
            transient: steps,
            convection: false,
        };
        let s = run(&cfg, &g).unwrap();
        let exact = g.points().map(|x| x.sin() * (-nu * mu).exp());
        (s.values.column(0) - exact).amax()
    };
    let ratio = error(0.02) / error(0.01);
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
}
