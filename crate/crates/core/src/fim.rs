//! Elementary Fisher-information matrices and Monte-Carlo estimates of the
//! relaxed placement objective
//!
//! ```text
//! h(z) = -(1/N_k) sum_k log det Q(z, theta_k),   Q(z, theta) = sum_i z_i Q_i(theta)
//! ```
//!
//! together with its gradient `-(1/N_k) sum_k tr(Q^-1 Q_i)` and Hessian
//! `(1/N_k) sum_k tr(Q^-1 Q_p Q^-1 Q_q)`. Each sample needs a single
//! Cholesky factorization `Q = L L^T`; with `B_i = L^-1 Q_i L^-T` the
//! traces become `tr(B_i)` and Frobenius products `<B_p, B_q>`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix5, U5};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::priors::SampleSet;
use crate::structural::{response_sensitivities, SensitivityField, ShearBuildingModel, TimeGrid};
use crate::{Error, Result, N_PARAMS};

/// A 5x5 symmetric information block.
pub type InfoMatrix = Matrix5<f64>;

/// Relaxed (or binary) sensor placement: one weight in `[0, 1]` per DOF
/// summing to the sensor budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorVector {
    z: Vec<f64>,
    budget: usize,
}

/// Feasibility slack on the budget equality and the box.
pub const FEASIBILITY_TOL: f64 = 1e-9;

impl SensorVector {
    pub fn new(z: Vec<f64>, budget: usize) -> Result<Self> {
        if z.iter()
            .any(|&v| !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&v))
        {
            return Err(Error::invalid("sensor weights must lie in [0, 1]"));
        }
        let sum: f64 = z.iter().sum();
        if (sum - budget as f64).abs() >= FEASIBILITY_TOL * (1.0 + budget as f64) {
            return Err(Error::invalid(format!(
                "sensor weights sum to {sum}, budget is {budget}"
            )));
        }
        Ok(Self { z, budget })
    }

    /// Binary placement from zero-based DOF indices.
    pub fn from_indices(n_dof: usize, indices: &[usize]) -> Result<Self> {
        let mut z = vec![0.0; n_dof];
        for &i in indices {
            if i >= n_dof || z[i] == 1.0 {
                return Err(Error::invalid(format!("bad or repeated sensor index {i}")));
            }
            z[i] = 1.0;
        }
        Ok(Self {
            z,
            budget: indices.len(),
        })
    }

    /// Uniform interior point `(budget / n_dof) 1`.
    pub fn uniform(n_dof: usize, budget: usize) -> Result<Self> {
        if n_dof == 0 || budget > n_dof {
            return Err(Error::invalid("budget must not exceed the number of DOFs"));
        }
        Ok(Self {
            z: vec![budget as f64 / n_dof as f64; n_dof],
            budget,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.z.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Zero-based indices with a non-zero weight.
    pub fn support(&self) -> Vec<usize> {
        self.z
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// One-based DOF (story) numbers of a binary placement.
    pub fn stories(&self) -> Vec<usize> {
        self.support().into_iter().map(|i| i + 1).collect()
    }
}

/// `Q_i = sum_n g_{n,i} g_{n,i}^T` with `g_{n,i} = d x_i(t_n) / d theta`.
pub fn elementary_matrices(sens: &SensitivityField) -> Vec<InfoMatrix> {
    (0..sens.n_dof())
        .map(|i| {
            let mut acc = [0.0; 15];
            for g in sens.location(i).chunks_exact(N_PARAMS) {
                let mut idx = 0;
                for p in 0..N_PARAMS {
                    for q in p..N_PARAMS {
                        acc[idx] += g[p] * g[q];
                        idx += 1;
                    }
                }
            }
            let mut m = InfoMatrix::zeros();
            let mut idx = 0;
            for p in 0..N_PARAMS {
                for q in p..N_PARAMS {
                    m[(p, q)] = acc[idx];
                    m[(q, p)] = acc[idx];
                    idx += 1;
                }
            }
            m
        })
        .collect()
}

/// `Q(z) = sum_i z_i Q_i`.
pub fn assemble_q(z: &[f64], elems: &[InfoMatrix]) -> Result<InfoMatrix> {
    if z.len() != elems.len() {
        return Err(Error::invalid(format!(
            "placement has {} entries, expected {}",
            z.len(),
            elems.len()
        )));
    }
    let mut q = InfoMatrix::zeros();
    for (&w, e) in z.iter().zip(elems) {
        if w != 0.0 {
            q += e * w;
        }
    }
    Ok(q)
}

/// `ln det Q` through a Cholesky factorization.
pub fn logdet_pd(q: &DMatrix<f64>) -> Result<f64> {
    if !q.is_square() {
        return Err(Error::invalid("log-determinant needs a square matrix"));
    }
    let chol = q.clone().cholesky().ok_or(Error::SingularInformation {
        sample: None,
        label: None,
    })?;
    logdet_from_factor(chol.l_dirty().diagonal().iter().copied())
}

fn logdet_from_factor(pivots: impl Iterator<Item = f64>) -> Result<f64> {
    let mut sum = 0.0;
    for d in pivots {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::SingularInformation {
                sample: None,
                label: None,
            });
        }
        sum += d.ln();
    }
    Ok(2.0 * sum)
}

fn factor(q: InfoMatrix, sample: usize) -> Result<(Cholesky<f64, U5>, f64)> {
    let singular = Error::SingularInformation {
        sample: Some(sample),
        label: None,
    };
    let chol = Cholesky::new(q).ok_or(singular)?;
    let logdet =
        logdet_from_factor(chol.l_dirty().diagonal().iter().copied()).map_err(|_| Error::SingularInformation {
            sample: Some(sample),
            label: None,
        })?;
    Ok((chol, logdet))
}

/// All elementary matrices `Q_i(theta_k)`, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryFimSet {
    n_dof: usize,
    n_samples: usize,
    matrices: Vec<InfoMatrix>,
}

impl ElementaryFimSet {
    /// `matrices[k * n_dof + i]` is `Q_i(theta_k)`.
    pub fn from_matrices(n_dof: usize, matrices: Vec<InfoMatrix>) -> Result<Self> {
        if n_dof == 0 || matrices.is_empty() || !matrices.len().is_multiple_of(n_dof) {
            return Err(Error::invalid("matrix count must be a positive multiple of n_dof"));
        }
        Ok(Self {
            n_dof,
            n_samples: matrices.len() / n_dof,
            matrices,
        })
    }

    /// Sensitivities and elementary matrices for every prior sample.
    pub fn build(model: &ShearBuildingModel, samples: &SampleSet, grid: &TimeGrid, exec: Execution) -> Result<Self> {
        let per_sample = exec.try_map(samples.n_samples(), |k| {
            let sens = response_sensitivities(model, &samples.samples[k], grid)?;
            if !sens.is_finite() {
                return Err(Error::invalid(format!("non-finite sensitivities for prior sample {k}")));
            }
            Ok(elementary_matrices(&sens))
        })?;
        Self::from_matrices(model.n_dof(), per_sample.into_iter().flatten().collect())
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_params(&self) -> usize {
        N_PARAMS
    }

    pub fn get(&self, k: usize, i: usize) -> &InfoMatrix {
        &self.matrices[k * self.n_dof + i]
    }

    /// The `n_dof` elementary matrices of sample `k`.
    pub fn sample(&self, k: usize) -> &[InfoMatrix] {
        &self.matrices[k * self.n_dof..(k + 1) * self.n_dof]
    }

    /// Rejects samples whose full-support information `sum_i Q_i / N_d` is
    /// not positive definite; no interior placement could be evaluated.
    pub fn preflight(&self) -> Result<()> {
        let avg = vec![1.0 / self.n_dof as f64; self.n_dof];
        for k in 0..self.n_samples {
            let q = assemble_q(&avg, self.sample(k))?;
            factor(q, k)?;
        }
        Ok(())
    }

    /// CSV dump with columns `k,i,p,q,value` (all indices zero-based).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,i,p,q,value")?;
        for k in 0..self.n_samples {
            for i in 0..self.n_dof {
                let m = self.get(k, i);
                for p in 0..N_PARAMS {
                    for q in 0..N_PARAMS {
                        writeln!(out, "{k},{i},{p},{q},{:e}", m[(p, q)])?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Which derivatives [`evaluate`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// `h(z) = -E[log det Q(z)]`.
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

struct Partial {
    logdet: f64,
    trace: Option<DVector<f64>>,
    gram: Option<DMatrix<f64>>,
}

fn partial_sums(z: &[f64], set: &ElementaryFimSet, order: Order, range: std::ops::Range<usize>) -> Result<Partial> {
    let n = set.n_dof;
    let mut acc = Partial {
        logdet: 0.0,
        trace: (order >= Order::Gradient).then(|| DVector::zeros(n)),
        gram: (order == Order::Hessian).then(|| DMatrix::zeros(n, n)),
    };
    // Columns hold vec(B_i); the Gram matrix W^T W is the sample's Hessian.
    let mut w = DMatrix::zeros(N_PARAMS * N_PARAMS, if order == Order::Hessian { n } else { 0 });
    for k in range {
        let elems = set.sample(k);
        let (chol, logdet) = factor(assemble_q(z, elems)?, k)?;
        acc.logdet += logdet;
        match order {
            Order::Value => {}
            Order::Gradient => {
                let q_inv = chol.inverse();
                let trace = acc.trace.as_mut().expect("allocated for gradient");
                for (i, e) in elems.iter().enumerate() {
                    trace[i] += q_inv.dot(e);
                }
            }
            Order::Hessian => {
                let l_inv = chol.l().try_inverse().ok_or(Error::SingularInformation {
                    sample: Some(k),
                    label: None,
                })?;
                let trace = acc.trace.as_mut().expect("allocated for gradient");
                for (i, e) in elems.iter().enumerate() {
                    let b = l_inv * e * l_inv.transpose();
                    trace[i] += b.trace();
                    w.column_mut(i).copy_from_slice(b.as_slice());
                }
                acc.gram
                    .as_mut()
                    .expect("allocated for hessian")
                    .gemm_tr(1.0, &w, &w, 1.0);
            }
        }
    }
    Ok(acc)
}

/// Objective and, depending on `order`, gradient and Hessian of the
/// Monte-Carlo estimate at `z`. Per-sample terms are summed in sample order
/// (see [`crate::exec`]), so results are bit-reproducible.
pub fn evaluate(z: &[f64], set: &ElementaryFimSet, order: Order, exec: Execution) -> Result<Estimate> {
    if z.len() != set.n_dof {
        return Err(Error::invalid(format!(
            "placement has {} entries, expected {}",
            z.len(),
            set.n_dof
        )));
    }
    let total = exec
        .fold_chunks(
            set.n_samples,
            |range| partial_sums(z, set, order, range),
            |a, b| {
                a.logdet += b.logdet;
                if let (Some(x), Some(y)) = (a.trace.as_mut(), b.trace) {
                    *x += y;
                }
                if let (Some(x), Some(y)) = (a.gram.as_mut(), b.gram) {
                    *x += y;
                }
            },
        )?
        .expect("sample sets are never empty");
    let scale = 1.0 / set.n_samples as f64;
    Ok(Estimate {
        value: -total.logdet * scale,
        gradient: total.trace.map(|t| t * -scale),
        hessian: total.gram.map(|g| g * scale),
    })
}

pub fn mc_objective(z: &[f64], set: &ElementaryFimSet) -> Result<f64> {
    Ok(evaluate(z, set, Order::Value, Execution::default())?.value)
}

pub fn mc_gradient(z: &[f64], set: &ElementaryFimSet) -> Result<DVector<f64>> {
    Ok(evaluate(z, set, Order::Gradient, Execution::default())?
        .gradient
        .expect("requested"))
}

pub fn mc_hessian(z: &[f64], set: &ElementaryFimSet) -> Result<DMatrix<f64>> {
    Ok(evaluate(z, set, Order::Hessian, Execution::default())?
        .hessian
        .expect("requested"))
}

/// `E[log det Q]` for a configuration: the report-facing orientation where
/// larger is better.
pub fn expected_logdet(z: &[f64], set: &ElementaryFimSet) -> Result<f64> {
    Ok(-mc_objective(z, set)?)
}
