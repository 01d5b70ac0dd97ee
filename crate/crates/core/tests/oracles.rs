mod common;

use std::f64::consts::PI;

use plate_core::symbols::ModePropagator;
use plate_core::{
    GridSpec, Integrator, IntegratorConfig, MaterialModel, Scheme, SpectralField, SymbolTable,
};
use proptest::prelude::*;

fn gaussian(grid: GridSpec, amp: f64, width: f64) -> SpectralField {
    SpectralField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
    .unwrap()
}

#[test]
fn lattice_modes_follow_the_ode() {
    let grid = GridSpec::new(3, 4.0 * PI, 8).unwrap();
    let model = MaterialModel::anisotropic(3, 0.7);
    let table = SymbolTable::new(grid, &model).unwrap();
    for p in [1, 9, 73, 200, 511] {
        let (k2, q) = (table.xi_sq()[p], table.quartic()[p]);
        for t in [0.3, 7.0, 60.0] {
            let pr = table.propagators(t);
            let y = common::dopri(common::mode_rhs(k2, q), &[1.0, 0.0], 0.0, t, 1e-13, 1e-15);
            assert!((pr.g[p] + pr.h[p] - y[0]).abs() < 1e-9, "p={p} t={t}");
            assert!((pr.g_dot[p] + pr.h_dot[p] - y[1]).abs() < 1e-9);
            let y = common::dopri(common::mode_rhs(k2, q), &[0.0, 1.0], 0.0, t, 1e-13, 1e-15);
            assert!((pr.g[p] - y[0]).abs() < 1e-9);
            assert!((pr.g_dot[p] - y[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn linear_run_reproduces_the_propagators() {
    let grid = GridSpec::new(2, 8.0 * PI, 64).unwrap();
    let model = MaterialModel::linear_isotropic(2);
    let u0 = gaussian(grid, 0.05, 1.5);
    let u1 = gaussian(grid, -0.02, 2.5);
    let cfg = IntegratorConfig {
        dt: 0.3,
        ..IntegratorConfig::default()
    };
    let traj = plate_core::run(&u0, &u1, &model, &cfg, 30.0, &[0.0, 10.0, 30.0]).unwrap();
    let table = SymbolTable::new(grid, &model).unwrap();
    for st in &traj.states {
        let (u, v) = table.linear_state(&u0, &u1, st.t).unwrap();
        assert!((&st.u - &u).l2_norm() < 1e-8 * u0.l2_norm());
        assert!((&st.u_t - &v).l2_norm() < 1e-8 * u0.l2_norm());
    }
}

#[test]
fn nonlinear_run_converges_under_dt_refinement() {
    let grid = GridSpec::new(2, 4.0 * PI, 32).unwrap();
    let model = MaterialModel::quartic(2);
    let u0 = gaussian(grid, 0.05, 1.5);
    let u1 = gaussian(grid, 0.02, 1.5);
    let end = |dt: f64, scheme: Scheme| {
        let cfg = IntegratorConfig {
            dt,
            scheme,
            picard_iters: 8,
            picard_tol: 1e-14,
            ..IntegratorConfig::default()
        };
        let traj = plate_core::run(&u0, &u1, &model, &cfg, 4.0, &[4.0]).unwrap();
        traj.states[0].u.clone()
    };
    let coarse = end(0.2, Scheme::DuhamelEtd);
    let fine = end(0.1, Scheme::DuhamelEtd);
    let finest = end(0.05, Scheme::DuhamelEtd);
    let e1 = (&coarse - &fine).l2_norm();
    let e2 = (&fine - &finest).l2_norm();
    assert!(e2 < 1e-6 * finest.l2_norm(), "{e2}");
    assert!(e1 / e2 > 8.0, "{e1} {e2}");

    let cn = end(0.05, Scheme::SemiImplicitCn);
    let cn_fine = end(0.025, Scheme::SemiImplicitCn);
    let c1 = (&cn - &finest).l2_norm();
    let c2 = (&cn_fine - &finest).l2_norm();
    assert!(c1 / c2 > 3.0, "{c1} {c2}");
}

#[test]
fn energy_decreases_along_a_nonlinear_run() {
    let grid = GridSpec::new(2, 4.0 * PI, 32).unwrap();
    let model = MaterialModel::quartic(2);
    let u0 = gaussian(grid, 0.05, 1.5);
    let u1 = gaussian(grid, 0.02, 1.5);
    let mut integ = Integrator::new(grid, model, IntegratorConfig::default()).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64).collect();
    let traj = integ.run(&u0, &u1, 10.0, &times).unwrap();
    let e0 = traj.states[0].diagnostics.energy;
    for w in traj.states.windows(2) {
        let r = plate_core::energy_monitor(&w[0], &w[1], e0);
        assert!(r.energy_after < r.energy_before);
        assert!(r.residual < 1e-8, "{}", r.residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flow_determinant_is_the_wronskian(k2 in 1e-4f64..400.0, gamma in 0.1f64..3.0, t in 0.0f64..50.0) {
        let m = ModePropagator::new(k2, gamma * k2 * k2, t).flow_matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let expected = (-t / (1.0 + k2)).exp();
        prop_assert!((det - expected).abs() < 1e-9 * (1.0 + expected), "{det} {expected}");
    }

    #[test]
    fn flow_is_a_semigroup(k2 in 1e-4f64..100.0, gamma in 0.1f64..3.0, s in 0.0f64..20.0, t in 0.0f64..20.0) {
        let q = gamma * k2 * k2;
        let a = ModePropagator::new(k2, q, s).flow_matrix();
        let b = ModePropagator::new(k2, q, t).flow_matrix();
        let c = ModePropagator::new(k2, q, s + t).flow_matrix();
        for i in 0..2 {
            for j in 0..2 {
                let prod = b[i][0] * a[0][j] + b[i][1] * a[1][j];
                prop_assert!((prod - c[i][j]).abs() < 1e-9 * (1.0 + c[i][j].abs()));
            }
        }
    }

    #[test]
    fn mode_energy_never_grows(k2 in 1e-3f64..100.0, gamma in 0.1f64..3.0, w0 in -1.0f64..1.0, w1 in -1.0f64..1.0, t in 0.0f64..30.0, dt in 0.01f64..5.0) {
        let q = gamma * k2 * k2;
        let energy = |t: f64| {
            let m = ModePropagator::new(k2, q, t).flow_matrix();
            let w = m[0][0] * w0 + m[0][1] * w1;
            let v = m[1][0] * w0 + m[1][1] * w1;
            0.5 * (1.0 + k2) * v * v + 0.5 * q * w * w
        };
        let (a, b) = (energy(t), energy(t + dt));
        prop_assert!(b <= a * (1.0 + 1e-12) + 1e-300);
    }
}
