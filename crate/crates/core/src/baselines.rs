//! Comparison layouts: greedy forward selection, exhaustive search and
//! fixed story patterns, plus an information-gain report in bits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::fim::{evaluate, ElementaryFimSet, InfoMatrix, Order, SensorVector};
use crate::solver::{binomial, next_combination};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub delta: SensorVector,
    /// Zero-based DOFs in the order they were added.
    pub order: Vec<usize>,
    /// Objective evaluations: `sum_{m < N_o} (N_d - m)`.
    pub evaluations: usize,
    /// Some round had no candidate with a non-singular information matrix
    /// and was decided on `log det(Q + eps I)`.
    pub regularized: bool,
}

fn value(z: &[f64], set: &ElementaryFimSet) -> Result<f64> {
    Ok(-evaluate(z, set, Order::Value, Execution::Sequential)?.value)
}

/// `E[log det(Q(z) + eps I)]`, used only to rank candidates when every
/// candidate of a greedy round is singular.
fn regularized_value(z: &[f64], set: &ElementaryFimSet, eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..set.n_samples() {
        let mut q = crate::fim::assemble_q(z, set.sample(k))?;
        q += InfoMatrix::identity() * eps;
        let chol = q.cholesky().ok_or(Error::SingularInformation {
            sample: Some(k),
            label: None,
        })?;
        total += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Ok(total / set.n_samples() as f64)
}

fn mean_trace(set: &ElementaryFimSet) -> f64 {
    let mut sum = 0.0;
    for k in 0..set.n_samples() {
        for m in set.sample(k) {
            sum += m.trace();
        }
    }
    sum / (set.n_samples() * set.n_dof()) as f64
}

/// Lowest index among the maxima; `None` entries are skipped.
fn argmax(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Forward sequential placement: each round adds the location that
/// maximizes `E[log det Q]` given the sensors already placed.
pub fn greedy_forward(set: &ElementaryFimSet, budget: usize, exec: Execution) -> Result<GreedyResult> {
    let n = set.n_dof();
    if budget == 0 || budget > n {
        return Err(Error::invalid(format!("budget {budget} is infeasible for {n} DOFs")));
    }
    let mut z = vec![0.0; n];
    let mut order = Vec::with_capacity(budget);
    let mut evaluations = 0;
    let mut regularized = false;
    for _ in 0..budget {
        let candidates: Vec<usize> = (0..n).filter(|&i| z[i] == 0.0).collect();
        evaluations += candidates.len();
        let trial = |c: usize| {
            let mut t = z.clone();
            t[candidates[c]] = 1.0;
            t
        };
        let scores = exec.try_map(candidates.len(), |c| match value(&trial(c), set) {
            Ok(v) => Ok(Some(v)),
            Err(Error::SingularInformation { .. }) => Ok(None),
            Err(e) => Err(e),
        })?;
        let pick = match argmax(&scores) {
            Some(c) => c,
            None => {
                regularized = true;
                let eps = 1e-12 * mean_trace(set);
                let scores = exec.try_map(candidates.len(), |c| regularized_value(&trial(c), set, eps).map(Some))?;
                argmax(&scores).expect("regularized scores are finite")
            }
        };
        z[candidates[pick]] = 1.0;
        order.push(candidates[pick]);
    }
    Ok(GreedyResult {
        delta: SensorVector::new(z, budget)?,
        order,
        evaluations,
        regularized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub delta: SensorVector,
    pub objective: f64,
    pub evaluations: u128,
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank(mut rank: u128, n: usize, k: usize) -> Vec<usize> {
    let mut combo = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        loop {
            let rest = binomial(n - next - 1, k - slot - 1);
            if rank < rest {
                break;
            }
            rank -= rest;
            next += 1;
        }
        combo.push(next);
        next += 1;
    }
    combo
}

const RANKS_PER_CHUNK: u128 = 512;

/// Exact binary optimum by enumerating all `C(N_d, N_o)` placements. Ties
/// go to the lexicographically smallest placement.
pub fn exhaustive(set: &ElementaryFimSet, budget: usize, cap: u128, exec: Execution) -> Result<ExhaustiveResult> {
    let n = set.n_dof();
    if budget == 0 || budget > n {
        return Err(Error::invalid(format!("budget {budget} is infeasible for {n} DOFs")));
    }
    let count = binomial(n, budget);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let chunks = count.div_ceil(RANKS_PER_CHUNK) as usize;
    let per_chunk = exec.try_map(chunks, |c| -> Result<Option<(f64, Vec<usize>)>> {
        let first = c as u128 * RANKS_PER_CHUNK;
        let last = (first + RANKS_PER_CHUNK).min(count);
        let mut combo = unrank(first, n, budget);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for r in first..last {
            let mut z = vec![0.0; n];
            for &i in &combo {
                z[i] = 1.0;
            }
            match value(&z, set) {
                Ok(v) => {
                    if best.as_ref().is_none_or(|(b, _)| v > *b) {
                        best = Some((v, combo.clone()));
                    }
                }
                Err(Error::SingularInformation { .. }) => {}
                Err(e) => return Err(e),
            }
            if r + 1 < last {
                next_combination(&mut combo, n);
            }
        }
        Ok(best)
    })?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (v, combo) in per_chunk.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, combo));
        }
    }
    let (objective, combo) = best.ok_or(Error::SingularInformation {
        sample: None,
        label: None,
    })?;
    Ok(ExhaustiveResult {
        delta: SensorVector::from_indices(n, &combo)?,
        objective,
        evaluations: count,
    })
}

/// Fixed layouts: lowest stories, highest stories, and sensors spread
/// evenly at stories `ceil(k N_d / N_o)`, `k = 1..N_o`.
pub fn fixed_configs(n_dof: usize, budget: usize) -> Result<Vec<(String, SensorVector)>> {
    if budget == 0 || budget > n_dof {
        return Err(Error::invalid(format!(
            "budget {budget} is infeasible for {n_dof} DOFs"
        )));
    }
    let low: Vec<usize> = (0..budget).collect();
    let high: Vec<usize> = (n_dof - budget..n_dof).collect();
    let common: Vec<usize> = (1..=budget).map(|k| (k * n_dof).div_ceil(budget) - 1).collect();
    Ok(vec![
        ("z_low".to_string(), SensorVector::from_indices(n_dof, &low)?),
        ("z_high".to_string(), SensorVector::from_indices(n_dof, &high)?),
        ("z_common".to_string(), SensorVector::from_indices(n_dof, &common)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    /// One-based instrumented stories.
    pub stories: Vec<usize>,
    /// `E[log det Q]`.
    pub objective: f64,
    /// `(V_ref - V) / ln 2`.
    pub bits_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
    /// Objective evaluations spent by each method that produced a row.
    pub evaluations: BTreeMap<String, u128>,
}

/// Bits of information the reference configuration gains over `value`.
pub fn bits_gain(reference: f64, value: f64) -> f64 {
    (reference - value) / std::f64::consts::LN_2
}

/// Scores every labelled configuration against the one named `reference`.
pub fn compare(
    configs: &[(String, SensorVector)],
    reference: &str,
    set: &ElementaryFimSet,
) -> Result<ComparisonReport> {
    let mut values = Vec::with_capacity(configs.len());
    for (label, z) in configs {
        let v = -evaluate(z.as_slice(), set, Order::Value, Execution::default())
            .map_err(|e| e.with_label(label))?
            .value;
        values.push(v);
    }
    let v_ref = configs
        .iter()
        .position(|(l, _)| l == reference)
        .map(|i| values[i])
        .ok_or_else(|| Error::invalid(format!("reference configuration {reference} not among the rows")))?;
    let rows = configs
        .iter()
        .zip(values)
        .map(|((label, z), v)| ComparisonRow {
            label: label.clone(),
            stories: z.stories(),
            objective: v,
            bits_gain: bits_gain(v_ref, v),
        })
        .collect();
    Ok(ComparisonReport {
        reference: reference.to_string(),
        rows,
        evaluations: BTreeMap::new(),
    })
}
