//! Shear-building model, modal decomposition and closed-form forced response.
//!
//! The structure obeys `M x'' + C x' + K x = -M 1 a0 sin(omega t)` with
//! `M = m M*`, `K = k K*`, Rayleigh damping `C = alpha M + beta K` and
//! `omega0 = sqrt(k / m)`. The eigenvectors of the `(K*, M*)` pencil decouple
//! the system into damped, harmonically driven oscillators, each of which
//! has a closed-form solution from rest. `x` is displacement relative to the
//! ground.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::jet::Jet;
use crate::{Error, Result, N_PARAMS};

/// Parameter names in sensitivity order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["omega0", "alpha", "beta", "omega", "a0"];

#[derive(Debug, Clone)]
pub struct ShearBuildingModel {
    n_dof: usize,
    mass_pattern: DMatrix<f64>,
    stiffness_pattern: DMatrix<f64>,
    /// `c_j^2`, ascending.
    eigenvalues: DVector<f64>,
    /// Mode shapes as unit-norm columns.
    eigenvectors: DMatrix<f64>,
    modal_masses: DVector<f64>,
    modal_stiffnesses: DVector<f64>,
    /// `Phi_j^T M* 1 / mu_j`; the modal load is `a_j = -a0 * participation_j`.
    participation: DVector<f64>,
}

impl ShearBuildingModel {
    /// Uniform shear building: `M* = I`, `K*` tridiagonal with 2 on the
    /// diagonal (1 at the roof) and -1 off the diagonal. DOF 1 is the first
    /// story above the base, DOF `n_dof` the roof.
    pub fn uniform(n_dof: usize) -> Result<Self> {
        if n_dof == 0 {
            return Err(Error::invalid("n_dof must be at least 1"));
        }
        let mass = DMatrix::identity(n_dof, n_dof);
        let stiffness = DMatrix::from_fn(n_dof, n_dof, |r, c| {
            if r == c {
                if r + 1 == n_dof {
                    1.0
                } else {
                    2.0
                }
            } else if r.abs_diff(c) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        Self::from_patterns(mass, stiffness)
    }

    /// General symmetric positive-definite `(K*, M*)` pair. The generalized
    /// problem is reduced to a standard symmetric one through the Cholesky
    /// factor of `M*`.
    pub fn from_patterns(mass: DMatrix<f64>, stiffness: DMatrix<f64>) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 || !mass.is_square() || stiffness.shape() != (n, n) {
            return Err(Error::invalid(
                "mass and stiffness patterns must be square and of equal size",
            ));
        }
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("mass pattern is not positive definite"))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("mass pattern is singular"))?;
        let mut reduced = &l_inv * &stiffness * l_inv.transpose();
        reduced = (&reduced + reduced.transpose()) * 0.5;
        let eig = reduced.symmetric_eigen();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let back = l_inv.transpose();
        let mut eigenvalues = DVector::zeros(n);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut phi = &back * eig.eigenvectors.column(src);
            phi /= phi.norm();
            // Largest-magnitude entry positive; the first one wins ties.
            let pivot = phi.iamax();
            if phi[pivot] < 0.0 {
                phi.neg_mut();
            }
            eigenvalues[dst] = eig.eigenvalues[src];
            eigenvectors.set_column(dst, &phi);
        }
        for j in 0..n {
            if eigenvalues[j] <= 0.0 || (j > 0 && eigenvalues[j] <= eigenvalues[j - 1]) {
                return Err(Error::invalid(
                    "stiffness pattern must be positive definite with distinct eigenvalues",
                ));
            }
        }

        let ones = DVector::from_element(n, 1.0);
        let m_phi = &mass * &eigenvectors;
        let k_phi = &stiffness * &eigenvectors;
        let m_ones = &mass * &ones;
        let mut modal_masses = DVector::zeros(n);
        let mut modal_stiffnesses = DVector::zeros(n);
        let mut participation = DVector::zeros(n);
        for j in 0..n {
            let phi = eigenvectors.column(j);
            modal_masses[j] = phi.dot(&m_phi.column(j));
            modal_stiffnesses[j] = phi.dot(&k_phi.column(j));
            participation[j] = phi.dot(&m_ones) / modal_masses[j];
        }

        Ok(Self {
            n_dof: n,
            mass_pattern: mass,
            stiffness_pattern: stiffness,
            eigenvalues,
            eigenvectors,
            modal_masses,
            modal_stiffnesses,
            participation,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn mass_pattern(&self) -> &DMatrix<f64> {
        &self.mass_pattern
    }

    pub fn stiffness_pattern(&self) -> &DMatrix<f64> {
        &self.stiffness_pattern
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn modal_masses(&self) -> &DVector<f64> {
        &self.modal_masses
    }

    pub fn modal_stiffnesses(&self) -> &DVector<f64> {
        &self.modal_stiffnesses
    }

    pub fn participation(&self) -> &DVector<f64> {
        &self.participation
    }

    /// Modal frequency `omega_j`, damping ratio `zeta_j` and load amplitude
    /// `a_j` for mode `j` under `theta`.
    pub fn modal_constants(&self, theta: &SystemParameters, j: usize) -> ModalConstants {
        let w_j = self.eigenvalues[j].sqrt() * theta.omega0;
        let zeta = (theta.alpha + theta.beta * w_j * w_j) / (2.0 * w_j);
        ModalConstants {
            omega: w_j,
            zeta,
            load: -theta.a0 * self.participation[j],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalConstants {
    pub omega: f64,
    pub zeta: f64,
    pub load: f64,
}

/// The uncertain system parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParameters {
    /// Nominal natural-frequency parameter `sqrt(k/m)`, rad/s.
    pub omega0: f64,
    /// Mass-proportional damping, 1/s.
    pub alpha: f64,
    /// Stiffness-proportional damping, s.
    pub beta: f64,
    /// Forcing frequency, rad/s.
    pub omega: f64,
    /// Ground-acceleration amplitude, m/s^2.
    pub a0: f64,
}

impl SystemParameters {
    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.omega0, self.alpha, self.beta, self.omega, self.a0]
    }

    pub fn from_array(a: [f64; N_PARAMS]) -> Self {
        Self {
            omega0: a[0],
            alpha: a[1],
            beta: a[2],
            omega: a[3],
            a0: a[4],
        }
    }

    /// Sign and finiteness checks that do not depend on the model.
    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("system parameters must be finite"));
        }
        if self.omega0 <= 0.0 || self.omega <= 0.0 {
            return Err(Error::invalid("omega0 and omega must be positive"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid("damping coefficients must be non-negative"));
        }
        Ok(())
    }

    /// Full check against a model, including the underdamping requirement.
    pub fn validate_for(&self, model: &ShearBuildingModel) -> Result<()> {
        self.validate()?;
        for j in 0..model.n_dof() {
            let zeta = model.modal_constants(self, j).zeta;
            if zeta >= 1.0 {
                return Err(Error::UnsupportedDamping { mode: j + 1, zeta });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive and finite"));
        }
        Ok(Self { n_steps, dt })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t_n = n dt` for `n = 1..=n_steps`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_steps).map(|n| n as f64 * self.dt).collect()
    }
}

/// `d x_i(t_n) / d theta_p`, stored with one column per DOF and the
/// `(time step, parameter)` pairs packed down the rows.
#[derive(Debug, Clone)]
pub struct SensitivityField {
    n_steps: usize,
    values: DMatrix<f64>,
}

impl SensitivityField {
    /// Builds a field from a closure over `(n, i, p)`, zero-based.
    pub fn from_fn(n_steps: usize, n_dof: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let values = DMatrix::from_fn(n_steps * N_PARAMS, n_dof, |row, i| f(row / N_PARAMS, i, row % N_PARAMS));
        Self { n_steps, values }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_dof(&self) -> usize {
        self.values.ncols()
    }

    /// Sensitivity at time index `n` (zero-based, i.e. `t_{n+1}`), DOF `i`,
    /// parameter `p`.
    pub fn get(&self, n: usize, i: usize, p: usize) -> f64 {
        self.values[(n * N_PARAMS + p, i)]
    }

    /// Gradient of `x_i(t_{n+1})` with respect to all parameters.
    pub fn gradient(&self, n: usize, i: usize) -> [f64; N_PARAMS] {
        let mut g = [0.0; N_PARAMS];
        for (p, x) in g.iter_mut().enumerate() {
            *x = self.get(n, i, p);
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Packed gradients of DOF `i`: `N_PARAMS` consecutive entries per step.
    pub(crate) fn location(&self, i: usize) -> &[f64] {
        let rows = self.values.nrows();
        &self.values.as_slice()[i * rows..(i + 1) * rows]
    }
}

/// Time-independent pieces of one mode's closed-form solution, carried as
/// jets so that every product below also yields parameter derivatives.
struct ModeSolution {
    gain: Jet,
    transient_sin: Jet,
    in_phase: Jet,
    steady_sin: Jet,
    decay: Jet,
    damped_freq: Jet,
    forcing_freq: Jet,
}

impl ModeSolution {
    fn new(model: &ShearBuildingModel, theta: &SystemParameters, j: usize) -> Result<Self> {
        let omega0 = Jet::variable(theta.omega0, 0);
        let alpha = Jet::variable(theta.alpha, 1);
        let beta = Jet::variable(theta.beta, 2);
        let omega = Jet::variable(theta.omega, 3);
        let a0 = Jet::variable(theta.a0, 4);

        let w_j = omega0 * model.eigenvalues[j].sqrt();
        let w_j2 = w_j.square();
        // 2 zeta_j omega_j = alpha + beta omega_j^2
        let two_zw = alpha + beta * w_j2;
        let zeta = two_zw / (w_j * 2.0);
        if zeta.v >= 1.0 {
            return Err(Error::UnsupportedDamping {
                mode: j + 1,
                zeta: zeta.v,
            });
        }
        let w_d = w_j * (1.0 - zeta.square()).sqrt();
        let load = a0 * (-model.participation[j]);

        let detune = w_j2 - omega.square();
        let in_phase = two_zw * omega;
        let denom = detune.square() + in_phase.square();
        let transient_sin = (omega * omega.square() + w_j2 * omega * (zeta.square() * 2.0 + -1.0)) / w_d;

        Ok(Self {
            gain: load / denom,
            transient_sin,
            in_phase,
            steady_sin: detune,
            decay: two_zw.scale(0.5),
            damped_freq: w_d,
            forcing_freq: omega,
        })
    }

    #[inline]
    fn at(&self, t: f64) -> Jet {
        let envelope = self.decay.scale(-t).exp();
        let (sd, cd) = self.damped_freq.scale(t).sin_cos();
        let (sw, cw) = self.forcing_freq.scale(t).sin_cos();
        let transient = envelope * (self.transient_sin * sd + self.in_phase * cd);
        let steady = self.steady_sin * sw - self.in_phase * cw;
        self.gain * (transient + steady)
    }
}

fn mode_solutions(model: &ShearBuildingModel, theta: &SystemParameters) -> Result<Vec<ModeSolution>> {
    theta.validate()?;
    (0..model.n_dof()).map(|j| ModeSolution::new(model, theta, j)).collect()
}

/// Modal coordinates `q[n][j]` at arbitrary times, `t >= 0`.
pub fn modal_response_at(model: &ShearBuildingModel, theta: &SystemParameters, times: &[f64]) -> Result<DMatrix<f64>> {
    let modes = mode_solutions(model, theta)?;
    Ok(DMatrix::from_fn(times.len(), model.n_dof(), |n, j| {
        modes[j].at(times[n]).v
    }))
}

/// Modal coordinates on the grid: an `N x N_d` matrix.
pub fn modal_response(model: &ShearBuildingModel, theta: &SystemParameters, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    modal_response_at(model, theta, &grid.times())
}

/// `x_i(t_n) = sum_j Phi_ij q_j(t_n)` for each row of `q`.
pub fn physical_response(model: &ShearBuildingModel, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.ncols() != model.n_dof() {
        return Err(Error::invalid(format!(
            "modal response has {} columns, model has {} DOFs",
            q.ncols(),
            model.n_dof()
        )));
    }
    Ok(q * model.eigenvectors().transpose())
}

/// Analytic parameter sensitivities of the physical response on the grid.
pub fn response_sensitivities(
    model: &ShearBuildingModel,
    theta: &SystemParameters,
    grid: &TimeGrid,
) -> Result<SensitivityField> {
    let modes = mode_solutions(model, theta)?;
    let n_dof = model.n_dof();
    let times = grid.times();
    // Column j: d q_j(t_n) / d theta_p at row n * N_PARAMS + p.
    let mut modal = DMatrix::zeros(times.len() * N_PARAMS, n_dof);
    for (j, mode) in modes.iter().enumerate() {
        let rows = modal.nrows();
        let col = &mut modal.as_mut_slice()[j * rows..(j + 1) * rows];
        for (n, &t) in times.iter().enumerate() {
            col[n * N_PARAMS..(n + 1) * N_PARAMS].copy_from_slice(&mode.at(t).d);
        }
    }
    Ok(SensitivityField {
        n_steps: times.len(),
        values: modal * model.eigenvectors().transpose(),
    })
}
