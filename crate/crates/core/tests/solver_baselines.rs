mod common;

use common::*;
use osp_core::baselines::*;
use osp_core::exec::Execution;
use osp_core::fim::*;
use osp_core::priors::{default_prior, sample_prior};
use osp_core::solver::binomial;
use osp_core::solver::*;
use osp_core::structural::{ShearBuildingModel, TimeGrid};

fn prior_set(n_dof: usize, n_steps: usize, n_samples: usize, seed: u64) -> ElementaryFimSet {
    let model = ShearBuildingModel::uniform(n_dof).unwrap();
    let samples = sample_prior(&default_prior(), n_samples, seed).unwrap();
    let grid = TimeGrid::new(n_steps, 0.01).unwrap();
    ElementaryFimSet::build(&model, &samples, &grid, Execution::default()).unwrap()
}

fn all_values(set: &ElementaryFimSet, budget: usize) -> Vec<(Vec<usize>, f64)> {
    let n = set.n_dof();
    let mut combo: Vec<usize> = (0..budget).collect();
    let mut out = Vec::new();
    loop {
        let z = SensorVector::from_indices(n, &combo).unwrap();
        out.push((combo.clone(), expected_logdet(z.as_slice(), set).unwrap()));
        if !next_combination(&mut combo, n) {
            return out;
        }
    }
}

#[test]
fn start_point_independence() {
    let set = prior_set(6, 400, 60, 12);
    let opts = SolverOptions::default();
    let reference = solve_relaxed(&set, 2, &opts).unwrap();
    let mut r = rng(21);
    for _ in 0..5 {
        let start = SensorVector::new(random_feasible(&mut r, 6, 2), 2).unwrap();
        let s = solve_relaxed_from(&set, &start, &opts).unwrap();
        assert!(s.converged);
        assert!(
            rel_err(s.objective_relaxed, reference.objective_relaxed, 1e-12) < 1e-8,
            "{} vs {} ub {} {} it {} {}",
            s.objective_relaxed,
            reference.objective_relaxed,
            s.upper_bound,
            reference.upper_bound,
            s.iterations,
            reference.iterations
        );
    }
}

#[test]
fn solution_is_feasible_and_satisfies_kkt() {
    let set = prior_set(7, 400, 40, 2);
    let opts = SolverOptions::default();
    let s = solve_relaxed(&set, 3, &opts).unwrap();
    assert!(s.converged && s.kkt_residual < opts.tolerance);
    let z = s.z_star.as_slice();
    assert!(z.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
    assert!((z.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    assert!(s.trace.iter().all(|t| t.objective.is_finite() && t.step_size > 0.0));
    assert!(s.upper_bound >= s.objective_relaxed);
}

#[test]
fn repaired_placement_equals_exhaustive_for_eight_stories() {
    let set = prior_set(8, 500, 80, 4);
    let opts = SolverOptions::default();
    let s = solve_relaxed(&set, 2, &opts).unwrap();
    let p = certify_or_repair(&s, &set, &opts).unwrap();
    let e = exhaustive(&set, 2, 1_000_000, Execution::default()).unwrap();
    assert_eq!(e.evaluations, 28);
    assert!((p.objective_binary - e.objective).abs() <= 1e-9 * e.objective.abs().max(1.0));
    assert!(p.gap >= -1e-9);
    assert!(s.upper_bound >= p.objective_binary - 1e-9);
    let best = all_values(&set, 2)
        .into_iter()
        .fold((vec![], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    assert_eq!(e.delta.support(), best.0);
}

#[test]
fn greedy_within_submodular_band_and_dominated_by_exhaustive() {
    for seed in [1, 2, 3] {
        let set = prior_set(4, 400, 50, seed);
        let values = all_values(&set, 2);
        let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let worst = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let g = greedy_forward(&set, 2, Execution::default()).unwrap();
        let vg = expected_logdet(g.delta.as_slice(), &set).unwrap();
        assert!(vg >= worst + (1.0 - (-1f64).exp()) * (best - worst) - 1e-9);
        let e = exhaustive(&set, 2, 100, Execution::default()).unwrap();
        assert!(e.objective >= vg - 1e-9);
        assert_eq!(g.evaluations, 4 + 3);
    }
}

#[test]
fn greedy_supports_are_nested() {
    let set = prior_set(8, 300, 30, 6);
    let g3 = greedy_forward(&set, 3, Execution::default()).unwrap();
    let g5 = greedy_forward(&set, 5, Execution::default()).unwrap();
    assert_eq!(g5.order[..3], g3.order[..]);
}

#[test]
fn parallel_and_sequential_baselines_agree() {
    let set = prior_set(9, 300, 40, 8);
    let a = exhaustive(&set, 3, 1_000, Execution::Sequential).unwrap();
    let b = exhaustive(&set, 3, 1_000, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.evaluations, binomial(9, 3));
    let a = greedy_forward(&set, 3, Execution::Sequential).unwrap();
    let b = greedy_forward(&set, 3, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rounding_a_binary_solution_is_certified() {
    let set = prior_set(2, 500, 40, 1);
    let opts = SolverOptions::default();
    let s = solve_relaxed(&set, 1, &opts).unwrap();
    let p = round_solution(&s, &set).unwrap();
    assert_eq!(p.delta.stories(), vec![2]);
    let c = certify_or_repair(&s, &set, &opts).unwrap();
    assert!(c.certified_optimal);
}

#[test]
fn comparison_report_bits_are_relative_to_reference() {
    let set = prior_set(10, 300, 30, 2);
    let mut cfgs = fixed_configs(10, 4).unwrap();
    let e = exhaustive(&set, 4, 1_000, Execution::default()).unwrap();
    cfgs.insert(0, ("best".to_string(), e.delta));
    let r = compare(&cfgs, "best", &set).unwrap();
    assert_eq!(r.rows[0].bits_gain, 0.0);
    for row in &r.rows[1..] {
        assert!(row.bits_gain >= -1e-9, "{row:?}");
        assert!((row.bits_gain - (r.rows[0].objective - row.objective) / std::f64::consts::LN_2).abs() < 1e-12);
    }
}
