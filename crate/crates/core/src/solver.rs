//! Relaxed placement solver.
//!
//! Minimizes `h(z)` over `0 <= z_i <= 1`, `sum z = N_o` with a primal-dual
//! interior-point method on the log-barrier central path:
//!
//! ```text
//! minimize  t h(z) - sum_i ln z_i - sum_i ln(1 - z_i)   s.t. 1^T z = N_o
//! ```
//!
//! Each Newton step eliminates the bound multipliers and solves the
//! Hessian system bordered with the all-ones row; `t` follows the surrogate
//! duality gap. The relaxed optimum is rounded to a binary placement and
//! either certified through the KKT conditions of the relaxation at the
//! binary point, or repaired by enumerating the ambiguous locations.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::fim::{evaluate, ElementaryFimSet, Estimate, Order, SensorVector, FEASIBILITY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Bound on the KKT stationarity and complementary-slackness residuals.
    pub tolerance: f64,
    /// Bound on the duality gap relative to `max(1, |E[log det Q]|)`.
    pub gap_tolerance: f64,
    /// Cap on the total number of Newton iterations.
    pub max_outer_iterations: usize,
    /// Initial barrier weight; `None` starts from a duality-gap estimate of
    /// `N_d`, i.e. `t0 = 2 N_d / N_d = 2`.
    pub initial_barrier: Option<f64>,
    pub barrier_multiplier: f64,
    /// Entries of `z*` strictly between `eta` and `1 - eta` are ambiguous.
    pub ambiguity_threshold: f64,
    /// Largest number of configurations the repair step may enumerate.
    pub enumeration_cap: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            gap_tolerance: 1e-10,
            max_outer_iterations: 100,
            initial_barrier: None,
            barrier_multiplier: 10.0,
            ambiguity_threshold: 0.05,
            enumeration_cap: 1_000_000,
            execution: Execution::default(),
        }
    }
}

impl SolverOptions {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !(self.gap_tolerance > 0.0) {
            return Err(Error::invalid("solver gap_tolerance must be positive"));
        }
        if !(self.ambiguity_threshold > 0.0 && self.ambiguity_threshold < 0.5) {
            return Err(Error::invalid("ambiguity threshold must lie in (0, 0.5)"));
        }
        if !(self.barrier_multiplier > 1.0) {
            return Err(Error::invalid("barrier multiplier must exceed 1"));
        }
        if matches!(self.initial_barrier, Some(t) if !(t > 0.0)) {
            return Err(Error::invalid("initial barrier weight must be positive"));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::invalid("max_outer_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// One Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub barrier: f64,
    /// `E[log det Q]` at the accepted point.
    pub objective: f64,
    /// Norm of the modified KKT residual before the step.
    pub residual: f64,
    pub step_size: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub z_star: SensorVector,
    /// `E[log det Q(z*)]`.
    pub objective_relaxed: f64,
    /// Upper bound on the relaxed optimum: `objective_relaxed` plus the
    /// Frank-Wolfe gap at `z*`.
    pub upper_bound: f64,
    pub iterations: usize,
    pub objective_evaluations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub trace: Vec<TraceRecord>,
    #[serde(skip)]
    gradient: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// The binary point satisfies the KKT conditions of the relaxation, so
    /// it solves both the relaxed and the combinatorial problem.
    Kkt,
    /// The relaxed bound and the binary objective agree to `1e-8` relative.
    ZeroGap,
    /// Best over every completion of the ambiguous locations.
    AmbiguousEnumeration,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPlacement {
    pub delta: SensorVector,
    /// `E[log det Q(delta)]`.
    pub objective_binary: f64,
    pub certified_optimal: bool,
    pub certificate: Certificate,
    /// Best known upper bound on the relaxed optimum minus
    /// `objective_binary`; never negative.
    pub gap: f64,
    /// Zero-based indices with `eta < z*_i < 1 - eta`.
    pub ambiguous: Vec<usize>,
    pub objective_evaluations: usize,
}

struct Counter<'a> {
    set: &'a ElementaryFimSet,
    exec: Execution,
    calls: usize,
}

impl Counter<'_> {
    fn eval(&mut self, z: &[f64], order: Order) -> Result<Estimate> {
        self.calls += 1;
        evaluate(z, self.set, order, self.exec)
    }
}

/// Solves the relaxed problem from the uniform start `(N_o / N_d) 1`.
pub fn solve_relaxed(set: &ElementaryFimSet, budget: usize, opts: &SolverOptions) -> Result<RelaxedSolution> {
    if budget == 0 || budget > set.n_dof() {
        return Err(Error::invalid(format!(
            "budget {budget} is infeasible for {} DOFs",
            set.n_dof()
        )));
    }
    let start = SensorVector::uniform(set.n_dof(), budget)?;
    solve_relaxed_from(set, &start, opts)
}

/// Solves the relaxed problem from a strictly interior feasible start.
pub fn solve_relaxed_from(
    set: &ElementaryFimSet,
    start: &SensorVector,
    opts: &SolverOptions,
) -> Result<RelaxedSolution> {
    opts.validate()?;
    let n = set.n_dof();
    let budget = start.budget();
    if start.len() != n || budget == 0 || budget > n {
        return Err(Error::invalid("start point does not match the problem"));
    }
    let mut counter = Counter {
        set,
        exec: opts.execution,
        calls: 0,
    };

    if budget == n {
        let z = vec![1.0; n];
        let est = counter.eval(&z, Order::Gradient)?;
        return Ok(RelaxedSolution {
            z_star: SensorVector::new(z, budget)?,
            objective_relaxed: -est.value,
            upper_bound: -est.value,
            iterations: 0,
            objective_evaluations: counter.calls,
            converged: true,
            kkt_residual: 0.0,
            trace: Vec::new(),
            gradient: est.gradient.expect("requested"),
        });
    }
    if start.as_slice().iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::invalid("start point must be strictly inside the box"));
    }

    let m = 2.0 * n as f64;
    let t0 = opts.initial_barrier.unwrap_or(m / n as f64);
    let mut z = DVector::from_column_slice(start.as_slice());
    // Multipliers of -z <= 0 and z - 1 <= 0, started on the central path.
    let mut lo = z.map(|v| 1.0 / (t0 * v));
    let mut hi = z.map(|v| 1.0 / (t0 * (1.0 - v)));
    let mut est = counter.eval(z.as_slice(), Order::Hessian)?;
    let ones = DVector::from_element(n, 1.0);
    let mut nu = {
        let g = est.gradient.as_ref().expect("requested");
        -(g - &lo + &hi).mean()
    };
    let mut iterations = 0;
    let mut trace = Vec::new();

    let residuals = |grad: &DVector<f64>, z: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, nu: f64, t: f64| {
        let dual = grad - lo + hi + &ones * nu;
        let cent_lo = lo.component_mul(z) - &ones / t;
        let cent_hi = hi.component_mul(&z.map(|v| 1.0 - v)) - &ones / t;
        (dual, cent_lo, cent_hi)
    };
    let stack_norm = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>| {
        (a.norm_squared() + b.norm_squared() + c.norm_squared()).sqrt()
    };

    loop {
        let gap = lo.dot(&z) + hi.dot(&z.map(|v| 1.0 - v));
        let grad = est.gradient.as_ref().expect("requested");
        let dual_inf = (grad - &lo + &hi + &ones * nu).amax();
        let slack_inf = lo
            .iter()
            .zip(z.iter())
            .map(|(l, v)| l * v)
            .chain(hi.iter().zip(z.iter()).map(|(k, v)| k * (1.0 - v)))
            .fold(0.0, f64::max);
        let residual = dual_inf.max(slack_inf);
        let gap_limit = (opts.tolerance * m).min(opts.gap_tolerance * est.value.abs().max(1.0));
        if dual_inf < opts.tolerance && slack_inf < opts.tolerance && gap < gap_limit {
            return finish(z, est, budget, iterations, counter.calls, residual, trace);
        }
        if iterations >= opts.max_outer_iterations {
            return Err(Error::NonConvergence { iterations, residual });
        }

        let t = opts.barrier_multiplier * m / gap;
        let hess = est.hessian.as_ref().expect("requested");
        let (r_dual, r_lo, r_hi) = residuals(grad, &z, &lo, &hi, nu, t);
        let r_norm = stack_norm(&r_dual, &r_lo, &r_hi);

        // Eliminate the multiplier steps:
        // (H + diag(lo/z + hi/(1-z))) dz + dnu 1 = -(r_dual + r_lo/z - r_hi/(1-z))
        let mut kkt = hess.clone();
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let (a, b) = (z[i], 1.0 - z[i]);
            kkt[(i, i)] += lo[i] / a + hi[i] / b;
            rhs[i] = -(r_dual[i] + r_lo[i] / a - r_hi[i] / b);
        }
        let chol = kkt
            .cholesky()
            .ok_or_else(|| Error::invalid("reduced KKT matrix lost positive definiteness"))?;
        let hr = chol.solve(&rhs);
        let h1 = chol.solve(&ones);
        // Keep 1^T dz = budget - 1^T z (zero up to rounding).
        let primal = budget as f64 - z.sum();
        let dnu = (hr.sum() - primal) / h1.sum();
        let dz = hr - &h1 * dnu;
        let dlo = DVector::from_fn(n, |i, _| (-r_lo[i] - lo[i] * dz[i]) / z[i]);
        let dhi = DVector::from_fn(n, |i, _| (-r_hi[i] + hi[i] * dz[i]) / (1.0 - z[i]));

        let mut s_max: f64 = 1.0;
        for i in 0..n {
            if dlo[i] < 0.0 {
                s_max = s_max.min(-lo[i] / dlo[i]);
            }
            if dhi[i] < 0.0 {
                s_max = s_max.min(-hi[i] / dhi[i]);
            }
            if dz[i] < 0.0 {
                s_max = s_max.min(z[i] / -dz[i]);
            } else if dz[i] > 0.0 {
                s_max = s_max.min((1.0 - z[i]) / dz[i]);
            }
        }
        let mut s = 0.99 * s_max;
        let accepted = loop {
            let trial_z = &z + &dz * s;
            if trial_z.iter().all(|&v| v > 0.0 && v < 1.0) {
                match counter.eval(trial_z.as_slice(), Order::Hessian) {
                    Ok(e) => {
                        let trial_lo = &lo + &dlo * s;
                        let trial_hi = &hi + &dhi * s;
                        let trial_nu = nu + dnu * s;
                        let (a, b, c) = residuals(
                            e.gradient.as_ref().expect("requested"),
                            &trial_z,
                            &trial_lo,
                            &trial_hi,
                            trial_nu,
                            t,
                        );
                        if stack_norm(&a, &b, &c) <= (1.0 - 0.01 * s) * r_norm {
                            break Some((trial_z, trial_lo, trial_hi, trial_nu, e));
                        }
                    }
                    Err(Error::SingularInformation { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            s *= 0.5;
            if s < 1e-14 {
                break None;
            }
        };
        iterations += 1;
        let Some((nz, nlo, nhi, nnu, e)) = accepted else {
            return Err(Error::NonConvergence { iterations, residual });
        };
        let step_norm = dz.norm() * s;
        z = nz;
        lo = nlo;
        hi = nhi;
        nu = nnu;
        est = e;
        trace.push(TraceRecord {
            iteration: iterations,
            barrier: t,
            objective: -est.value,
            residual: r_norm,
            step_size: s,
            step_norm,
        });
    }
}

fn finish(
    z: DVector<f64>,
    est: Estimate,
    budget: usize,
    iterations: usize,
    calls: usize,
    residual: f64,
    trace: Vec<TraceRecord>,
) -> Result<RelaxedSolution> {
    let gradient = est.gradient.expect("requested");
    let value = -est.value;
    let fw = frank_wolfe_gap(z.as_slice(), &gradient, budget);
    // Re-impose the budget exactly; drift is at rounding level.
    let mut zv: Vec<f64> = z.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let drift = (zv.iter().sum::<f64>() - budget as f64) / zv.len() as f64;
    if drift.abs() < FEASIBILITY_TOL {
        for v in &mut zv {
            *v = (*v - drift).clamp(0.0, 1.0);
        }
    }
    Ok(RelaxedSolution {
        z_star: SensorVector::new(zv, budget)?,
        objective_relaxed: value,
        upper_bound: value + fw,
        iterations,
        objective_evaluations: calls,
        converged: true,
        kkt_residual: residual,
        trace,
        gradient,
    })
}

/// `max_{y feasible} -grad(h)^T (y - z)`, an upper bound on how far
/// `E[log det]` at `z` is below the relaxed optimum.
fn frank_wolfe_gap(z: &[f64], grad_h: &DVector<f64>, budget: usize) -> f64 {
    let ascent: Vec<f64> = grad_h.iter().map(|g| -g).collect();
    let best: f64 = top_k(&ascent, budget).iter().map(|&i| ascent[i]).sum();
    let here: f64 = ascent.iter().zip(z).map(|(a, b)| a * b).sum();
    (best - here).max(0.0)
}

/// Indices of the `k` largest entries, ties going to the lower index,
/// returned in ascending index order.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Whether the binary placement satisfies the KKT conditions of the
/// relaxed problem: every chosen location has a gradient of `h` no larger
/// than every unchosen one.
pub fn satisfies_relaxed_kkt(delta: &SensorVector, grad_h: &DVector<f64>) -> bool {
    let chosen = delta.support();
    if chosen.len() == delta.len() {
        return true;
    }
    let scale = grad_h.amax().max(1.0);
    let worst_in = chosen.iter().map(|&i| grad_h[i]).fold(f64::NEG_INFINITY, f64::max);
    let best_out = (0..delta.len())
        .filter(|i| delta.as_slice()[*i] == 0.0)
        .map(|i| grad_h[i])
        .fold(f64::INFINITY, f64::min);
    worst_in <= best_out + 1e-12 * scale
}

struct Scored {
    delta: SensorVector,
    value: f64,
    kkt: bool,
}

fn score(delta: SensorVector, set: &ElementaryFimSet, exec: Execution) -> Result<Scored> {
    let est = evaluate(delta.as_slice(), set, Order::Gradient, exec)?;
    let kkt = satisfies_relaxed_kkt(&delta, est.gradient.as_ref().expect("requested"));
    Ok(Scored {
        delta,
        value: -est.value,
        kkt,
    })
}

fn placement(
    solution: &RelaxedSolution,
    best: Scored,
    enumerated: bool,
    ambiguous: Vec<usize>,
    evaluations: usize,
) -> BinaryPlacement {
    let bound = if best.kkt {
        best.value
    } else {
        solution.upper_bound.max(best.value)
    };
    let gap = (bound - best.value).max(0.0);
    let zero_gap = gap <= 1e-8 * best.value.abs().max(1.0);
    let certificate = if best.kkt {
        Certificate::Kkt
    } else if zero_gap {
        Certificate::ZeroGap
    } else if enumerated {
        Certificate::AmbiguousEnumeration
    } else {
        Certificate::None
    };
    BinaryPlacement {
        delta: best.delta,
        objective_binary: best.value,
        certified_optimal: certificate != Certificate::None,
        certificate,
        gap,
        ambiguous,
        objective_evaluations: evaluations,
    }
}

fn ambiguous_set(z: &[f64], eta: f64) -> Vec<usize> {
    z.iter()
        .enumerate()
        .filter(|(_, &v)| v > eta && v < 1.0 - eta)
        .map(|(i, _)| i)
        .collect()
}

/// Keeps the `N_o` largest entries of `z*` (lower DOF index wins ties).
pub fn round_solution(solution: &RelaxedSolution, set: &ElementaryFimSet) -> Result<BinaryPlacement> {
    round_with(solution, set, &SolverOptions::default())
}

fn round_with(solution: &RelaxedSolution, set: &ElementaryFimSet, opts: &SolverOptions) -> Result<BinaryPlacement> {
    let z = solution.z_star.as_slice();
    let delta = SensorVector::from_indices(z.len(), &top_k(z, solution.z_star.budget()))?;
    let best = score(delta, set, opts.execution)?;
    Ok(placement(
        solution,
        best,
        false,
        ambiguous_set(z, opts.ambiguity_threshold),
        1,
    ))
}

/// Rounds `z*` and resolves ambiguous entries by enumerating every way of
/// filling the remaining budget among them, keeping confident ones and
/// zeros fixed. Falls back to plain rounding, flagged uncertified unless
/// the KKT certificate holds, when the enumeration would exceed the cap.
pub fn certify_or_repair(
    solution: &RelaxedSolution,
    set: &ElementaryFimSet,
    opts: &SolverOptions,
) -> Result<BinaryPlacement> {
    opts.validate()?;
    let z = solution.z_star.as_slice();
    let n = z.len();
    let budget = solution.z_star.budget();
    let eta = opts.ambiguity_threshold;
    let ambiguous = ambiguous_set(z, eta);
    let rounded = round_with(solution, set, opts)?;
    if ambiguous.is_empty() || rounded.certificate == Certificate::Kkt {
        return Ok(rounded);
    }
    let fixed: Vec<usize> = (0..n).filter(|&i| z[i] >= 1.0 - eta).collect();
    let Some(remaining) = budget.checked_sub(fixed.len()).filter(|&r| r <= ambiguous.len()) else {
        return Ok(rounded);
    };
    let count = binomial(ambiguous.len(), remaining);
    if count > opts.enumeration_cap as u128 {
        return Ok(rounded);
    }

    let mut best: Option<Scored> = None;
    let mut evaluations = rounded.objective_evaluations;
    let mut combo: Vec<usize> = (0..remaining).collect();
    loop {
        let mut chosen = fixed.clone();
        chosen.extend(combo.iter().map(|&c| ambiguous[c]));
        chosen.sort_unstable();
        evaluations += 1;
        match score(SensorVector::from_indices(n, &chosen)?, set, opts.execution) {
            Ok(s) => {
                if best.as_ref().is_none_or(|b| s.value > b.value) {
                    best = Some(s);
                }
            }
            Err(Error::SingularInformation { .. }) => {}
            Err(e) => return Err(e),
        }
        if !next_combination(&mut combo, ambiguous.len()) {
            break;
        }
    }
    let Some(best) = best else {
        return Ok(rounded);
    };
    Ok(placement(solution, best, true, ambiguous, evaluations))
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances a sorted `k`-combination of `0..n` in lexicographic order.
pub fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for pos in (0..k).rev() {
        if combo[pos] < n - k + pos {
            combo[pos] += 1;
            for j in pos + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
