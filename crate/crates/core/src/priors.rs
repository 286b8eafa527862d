//! Prior over the system parameters and reproducible Monte-Carlo sampling.
//!
//! Lognormal marginals are specified by the mean and standard deviation of
//! the variable itself (not of its logarithm) and converted by moment
//! matching. Draws come from `ChaCha8Rng::seed_from_u64(seed)`, taken in the
//! fixed order `omega0, alpha, beta, omega, a0` per sample, so a sample set
//! is a pure function of `(spec, n_samples, seed)` on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::structural::SystemParameters;
use crate::{Error, Result};

/// Standard gravity, m/s^2.
pub const GRAVITY: f64 = 9.81;

/// Amplitudes closer to zero than this are redrawn: they make the
/// amplitude direction of the information matrix numerically rank deficient.
pub const MIN_ABS_AMPLITUDE: f64 = 1e-6;

const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Lognormal,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marginal {
    pub dist: Dist,
    pub mean: f64,
    pub std: f64,
}

impl Marginal {
    pub fn lognormal(mean: f64, std: f64) -> Self {
        Self {
            dist: Dist::Lognormal,
            mean,
            std,
        }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        Self {
            dist: Dist::Normal,
            mean,
            std,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) || !self.mean.is_finite() {
            return Err(Error::invalid(format!("{name}: std must be positive and finite")));
        }
        if self.dist == Dist::Lognormal && self.mean <= 0.0 {
            return Err(Error::invalid(format!("{name}: lognormal mean must be positive")));
        }
        Ok(())
    }

    fn sampler(&self) -> Result<Sampler> {
        Ok(match self.dist {
            Dist::Lognormal => {
                let (mu, sigma) = lognormal_underlying(self.mean, self.std)?;
                Sampler::Log(LogNormal::new(mu, sigma).map_err(|e| Error::invalid(e.to_string()))?)
            }
            Dist::Normal => {
                Sampler::Gauss(Normal::new(self.mean, self.std).map_err(|e| Error::invalid(e.to_string()))?)
            }
        })
    }
}

enum Sampler {
    Log(LogNormal<f64>),
    Gauss(Normal<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng, accept: impl Fn(f64) -> bool) -> Result<f64> {
        for _ in 0..MAX_REDRAWS {
            let v = match self {
                Sampler::Log(d) => d.sample(rng),
                Sampler::Gauss(d) => d.sample(rng),
            };
            if accept(v) {
                return Ok(v);
            }
        }
        Err(Error::invalid(
            "prior puts almost no mass on admissible parameter values",
        ))
    }
}

/// Independent marginals for each system parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub omega0: Marginal,
    pub alpha: Marginal,
    pub beta: Marginal,
    pub omega: Marginal,
    pub a0: Marginal,
}

impl Default for PriorSpec {
    fn default() -> Self {
        default_prior()
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.omega0.validate("omega0")?;
        self.alpha.validate("alpha")?;
        self.beta.validate("beta")?;
        self.omega.validate("omega")?;
        self.a0.validate("a0")
    }
}

/// Prior used for the uniform shear-building studies: frequencies around
/// 1 Hz, light Rayleigh damping and ground shaking of about 0.4 g.
pub fn default_prior() -> PriorSpec {
    let two_pi = 2.0 * std::f64::consts::PI;
    PriorSpec {
        omega0: Marginal::lognormal(two_pi, 0.25),
        alpha: Marginal::lognormal(0.1, 0.01),
        beta: Marginal::lognormal(1e-4, 1e-5),
        omega: Marginal::lognormal(two_pi, 0.25),
        a0: Marginal::normal(0.0, 0.4 * GRAVITY),
    }
}

/// Parameters `(mu, sigma)` of the normal underlying a lognormal variable
/// with the given mean and standard deviation.
pub fn lognormal_underlying(mean: f64, std: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && std > 0.0 && mean.is_finite() && std.is_finite()) {
        return Err(Error::invalid("lognormal mean and std must be positive and finite"));
    }
    let cv = std / mean;
    let var = cv.mul_add(cv, 1.0).ln();
    Ok((mean.ln() - 0.5 * var, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub seed: u64,
    pub samples: Vec<SystemParameters>,
}

impl SampleSet {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }
}

pub fn sample_prior(spec: &PriorSpec, n_samples: usize, seed: u64) -> Result<SampleSet> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    spec.validate()?;
    let omega0 = spec.omega0.sampler()?;
    let alpha = spec.alpha.sampler()?;
    let beta = spec.beta.sampler()?;
    let omega = spec.omega.sampler()?;
    let a0 = spec.a0.sampler()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let non_negative = |v: f64| v >= 0.0 && v.is_finite();
    let samples = (0..n_samples)
        .map(|_| {
            Ok(SystemParameters {
                omega0: omega0.draw(&mut rng, positive)?,
                alpha: alpha.draw(&mut rng, non_negative)?,
                beta: beta.draw(&mut rng, non_negative)?,
                omega: omega.draw(&mut rng, positive)?,
                a0: a0.draw(&mut rng, |v| v.abs() >= MIN_ABS_AMPLITUDE && v.is_finite())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet { seed, samples })
}
