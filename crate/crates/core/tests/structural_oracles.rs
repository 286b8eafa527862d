//! Closed-form modal response and sensitivities checked against
//! independent numerical oracles.

mod common;

use common::*;
use nalgebra::DMatrix;
use osp_core::priors::{default_prior, sample_prior};
use osp_core::structural::*;
use proptest::prelude::*;
use rand::RngExt;

/// Modal coefficients of the decoupled oscillator for mode `j`.
fn oscillator(model: &ShearBuildingModel, theta: &SystemParameters, j: usize) -> (f64, f64, f64) {
    let mc = model.modal_constants(theta, j);
    (2.0 * mc.zeta * mc.omega, mc.omega * mc.omega, mc.load)
}

#[test]
fn single_dof_matches_runge_kutta_at_resonance() {
    let model = ShearBuildingModel::uniform(1).unwrap();
    let theta = SystemParameters {
        omega0: 1.0,
        alpha: 0.02,
        beta: 0.0,
        omega: 1.0,
        a0: 1.0,
    };
    let q = modal_response_at(&model, &theta, &[10.0]).unwrap()[(0, 0)];
    let (c, k, a) = oscillator(&model, &theta, 0);
    let oracle = oscillator_rk45(c, k, a, theta.omega, 10.0, 1e-12);
    assert!(rel_err(q, oracle, 1e-300) < 1e-6, "{q} vs {oracle}");
}

#[test]
fn random_probes_match_runge_kutta() {
    let mut rng = rng(11);
    let samples = sample_prior(&default_prior(), 10, 5).unwrap();
    for theta in &samples.samples {
        let n_dof = rng.random_range(1..=6usize);
        let model = ShearBuildingModel::uniform(n_dof).unwrap();
        let j = rng.random_range(0..n_dof);
        let t = rng.random_range(0.5..15.0);
        let q = modal_response_at(&model, theta, &[t]).unwrap()[(0, j)];
        let (c, k, a) = oscillator(&model, theta, j);
        let oracle = oscillator_rk45(c, k, a, theta.omega, t, 1e-12);
        // Floor at 1e-6 of the largest |q_j| on [0, t] guards zero crossings.
        let grid: Vec<f64> = (1..=2000).map(|s| s as f64 * t / 2000.0).collect();
        let peak = modal_response_at(&model, theta, &grid).unwrap().column(j).amax();
        assert!(
            rel_err(q, oracle, 1e-6 * peak) < 1e-6,
            "n_dof {n_dof} mode {j} t {t}: {q} vs {oracle}"
        );
    }
}

#[test]
fn closed_form_satisfies_modal_equations() {
    let model = ShearBuildingModel::uniform(4).unwrap();
    let theta = prior_mean();
    let h = 1e-3;
    for n in 1..=100 {
        let t = n as f64 * 0.1;
        let q = modal_response_at(&model, &theta, &[t - 2.0 * h, t - h, t, t + h, t + 2.0 * h]).unwrap();
        for j in 0..4 {
            let (c, k, a) = oscillator(&model, &theta, j);
            let acc =
                (-q[(4, j)] + 16.0 * q[(3, j)] - 30.0 * q[(2, j)] + 16.0 * q[(1, j)] - q[(0, j)]) / (12.0 * h * h);
            let vel = (-q[(4, j)] + 8.0 * q[(3, j)] - 8.0 * q[(1, j)] + q[(0, j)]) / (12.0 * h);
            let resid = acc + c * vel + k * q[(2, j)] - a * (theta.omega * t).sin();
            assert!(resid.abs() < 1e-6 * a.abs(), "mode {j} t {t}: residual {resid}");
        }
    }
}

#[test]
fn starts_from_rest() {
    let model = ShearBuildingModel::uniform(4).unwrap();
    let theta = prior_mean();
    let at_zero = modal_response_at(&model, &theta, &[0.0]).unwrap();
    assert!(at_zero.iter().all(|&v| v == 0.0));

    let eps = 1e-8;
    let start = modal_response_at(&model, &theta, &[eps]).unwrap();
    let grid = TimeGrid::new(2000, 0.005).unwrap();
    let q = modal_response(&model, &theta, &grid).unwrap();
    for j in 0..4 {
        let peak_vel = (1..q.nrows())
            .map(|n| ((q[(n, j)] - q[(n - 1, j)]) / 0.005).abs())
            .fold(0.0, f64::max);
        let v0 = start[(0, j)] / eps;
        assert!(v0.abs() < 1e-4 * peak_vel, "mode {j}: {v0} vs {peak_vel}");
    }
}

/// Finite-difference sensitivity of `x_i(t_n)` to parameter `p`.
///
/// A single central difference with a `1e-6` relative step suffices for
/// every parameter except `beta`: its effect on `x` is about `1e-9` of `x`,
/// below what one difference can resolve in double precision. Ridders'
/// extrapolated central differences handle all five; the starting step is
/// 0.1% of the parameter (10% for `beta`, whose influence is nearly linear).
fn fd_sensitivity(
    model: &ShearBuildingModel,
    theta: &SystemParameters,
    grid: &TimeGrid,
    n: usize,
    i: usize,
    p: usize,
) -> f64 {
    let base = theta.to_array();
    let sub = TimeGrid::new(n + 1, grid.dt()).unwrap();
    let eval = |v: f64| {
        let mut a = base;
        a[p] = v;
        let th = SystemParameters::from_array(a);
        let q = modal_response(model, &th, &sub).unwrap();
        physical_response(model, &q).unwrap()[(n, i)]
    };
    let start = if p == 2 { 0.1 } else { 1e-3 };
    ridders(eval, base[p], start * base[p].abs()).0
}

#[test]
fn two_dof_sensitivities_match_finite_differences_at_prior_mean() {
    let model = ShearBuildingModel::uniform(2).unwrap();
    let theta = prior_mean();
    let grid = TimeGrid::new(500, 0.01).unwrap();
    let sens = response_sensitivities(&model, &theta, &grid).unwrap();
    let n = 499; // t = 5 s
    for i in 0..2 {
        for p in 0..5 {
            let fd = fd_sensitivity(&model, &theta, &grid, n, i, p);
            let an = sens.get(n, i, p);
            assert!(rel_err(an, fd, 1e-300) < 1e-5, "dof {i} param {p}: {an} vs {fd}");
        }
    }
}

#[test]
fn sensitivities_match_finite_differences_on_random_probes() {
    let mut rng = rng(3);
    let samples = sample_prior(&default_prior(), 25, 17).unwrap();
    let grid = TimeGrid::new(1000, 0.01).unwrap();
    let mut probes = 0;
    for theta in &samples.samples {
        let n_dof = [2usize, 4, 8][rng.random_range(0..3)];
        let model = ShearBuildingModel::uniform(n_dof).unwrap();
        let sens = response_sensitivities(&model, theta, &grid).unwrap();
        let n = rng.random_range(0..grid.n_steps());
        let i = rng.random_range(0..n_dof);
        for p in 0..5 {
            let fd = fd_sensitivity(&model, theta, &grid, n, i, p);
            let an = sens.get(n, i, p);
            let peak = (0..grid.n_steps()).map(|m| sens.get(m, i, p).abs()).fold(0.0, f64::max);
            let err = rel_err(an, fd, 1e-4 * peak);
            assert!(err < 1e-5, "probe {probes} param {p}: {an} vs {fd} (rel {err:e})");
        }
        probes += 1;
    }
    assert!(probes >= 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn physical_response_is_linear(
        n_dof in 1usize..8,
        seed in any::<u64>(),
    ) {
        let model = ShearBuildingModel::uniform(n_dof).unwrap();
        let mut r = rng(seed);
        let q1 = DMatrix::from_fn(7, n_dof, |_, _| r.random_range(-1.0..1.0));
        let q2 = DMatrix::from_fn(7, n_dof, |_, _| r.random_range(-1.0..1.0));
        let lhs = physical_response(&model, &(&q1 + &q2)).unwrap();
        let rhs = physical_response(&model, &q1).unwrap() + physical_response(&model, &q2).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn eigen_residuals_are_tiny(n_dof in 1usize..60) {
        let model = ShearBuildingModel::uniform(n_dof).unwrap();
        for j in 0..n_dof {
            let phi = model.eigenvectors().column(j);
            let kphi = model.stiffness_pattern() * phi;
            let r = &kphi - model.mass_pattern() * phi * model.eigenvalues()[j];
            prop_assert!(r.norm() / kphi.norm() < 1e-10);
            if j > 0 {
                prop_assert!(model.eigenvalues()[j] > model.eigenvalues()[j - 1]);
            }
        }
    }
}
