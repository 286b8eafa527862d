#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use osp_core::fim::{ElementaryFimSet, InfoMatrix};
use osp_core::structural::SystemParameters;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn prior_mean() -> SystemParameters {
    SystemParameters {
        omega0: 2.0 * std::f64::consts::PI,
        alpha: 0.1,
        beta: 1e-4,
        omega: 2.0 * std::f64::consts::PI,
        a0: 0.4 * 9.81,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random strictly interior feasible point with the given budget.
pub fn random_feasible<R: Rng>(rng: &mut R, n: usize, budget: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let z: Vec<f64> = raw.iter().map(|v| v * budget as f64 / sum).collect();
        if z.iter().all(|&v| v > 0.0 && v < 1.0) {
            return z;
        }
    }
}

/// Random Gram-type elementary matrices with full support.
pub fn random_set(rng: &mut ChaCha8Rng, n_dof: usize, n_samples: usize) -> ElementaryFimSet {
    let mut mats = Vec::new();
    for _ in 0..n_samples * n_dof {
        let g = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose();
        mats.push(InfoMatrix::from_iterator(q.iter().copied()));
    }
    ElementaryFimSet::from_matrices(n_dof, mats).unwrap()
}

/// Dormand-Prince 5(4) with error control, for a damped, driven oscillator
/// `q'' + c q' + k q = a sin(w t)` started from rest.
pub fn oscillator_rk45(c: f64, k: f64, a: f64, w: f64, t_end: f64, rtol: f64) -> f64 {
    let f = |t: f64, y: [f64; 2]| [y[1], a * (w * t).sin() - c * y[1] - k * y[0]];
    let mut t = 0.0;
    let mut y = [0.0, 0.0];
    let mut h: f64 = 1e-4;
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
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    while t < t_end {
        h = h.min(t_end - t);
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = f(t + C[s] * h, ys);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for d in 0..2 {
            let mut e = 0.0;
            for s in 0..7 {
                y5[d] += h * B5[s] * k[s][d];
                e += h * (B5[s] - B4[s]) * k[s][d];
            }
            let scale = 1e-14 + rtol * y[d].abs().max(y5[d].abs());
            err = err.max((e / scale).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
    y[0]
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    h.clone().symmetric_eigen().eigenvalues.min()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Ridders' method: central differences at geometrically shrinking steps,
/// Richardson-extrapolated. Returns the estimate and its error estimate.
pub fn ridders<F: Fn(f64) -> f64>(f: F, x: f64, h0: f64) -> (f64, f64) {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    let mut a = [[0.0; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}
