//! Independent reference integrator for the test suites.
#![allow(dead_code)]

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` from `t0` to `t1`.
pub fn dopri<F>(f: F, y0: &[f64], t0: f64, t1: f64, rtol: f64, atol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = ((t1 - t0) * 1e-3).max(1e-6);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    while t < t1 {
        h = h.min(t1 - t);
        f(t, &y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                tmp[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(t + C[s] * h, &tmp, &mut tail[0]);
        }
        let mut err: f64 = 0.0;
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = y[i] + h * (0..7).map(|j| B[j] * k[j][i]).sum::<f64>();
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(next[i].abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = next;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    y
}

/// Linear mode ODE `(1 + k2) w'' + w' + q w = 0` as a first-order system.
pub fn mode_rhs(k2: f64, q: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_, y, dy| {
        dy[0] = y[1];
        dy[1] = -(y[1] + q * y[0]) / (1.0 + k2);
    }
}

#[test]
fn oracle_integrates_exponential_decay() {
    let y = dopri(|_, y, dy| dy[0] = -y[0], &[1.0], 0.0, 5.0, 1e-12, 1e-14);
    assert!((y[0] - (-5.0f64).exp()).abs() < 1e-12);
}
