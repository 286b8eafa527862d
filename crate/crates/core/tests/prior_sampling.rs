use osp_core::priors::*;
use proptest::prelude::*;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn lognormal_marginals_recover_physical_moments() {
    let spec = default_prior();
    let n = 100_000;
    let set = sample_prior(&spec, n, 2024).unwrap();
    let columns: [(&str, Marginal, Vec<f64>); 4] = [
        ("omega0", spec.omega0, set.samples.iter().map(|s| s.omega0).collect()),
        ("alpha", spec.alpha, set.samples.iter().map(|s| s.alpha).collect()),
        ("beta", spec.beta, set.samples.iter().map(|s| s.beta).collect()),
        ("omega", spec.omega, set.samples.iter().map(|s| s.omega).collect()),
    ];
    for (name, m, xs) in columns {
        let (mean, std) = moments(&xs);
        let se_mean = m.std / (n as f64).sqrt();
        // Near-Gaussian shape at these coefficients of variation.
        let se_std = m.std / (2.0 * n as f64).sqrt();
        assert!((mean - m.mean).abs() < 4.0 * se_mean, "{name} mean {mean}");
        assert!((std - m.std).abs() < 4.0 * se_std, "{name} std {std}");
    }
    let a0: Vec<f64> = set.samples.iter().map(|s| s.a0).collect();
    let (mean, std) = moments(&a0);
    assert!(mean.abs() < 4.0 * spec.a0.std / (n as f64).sqrt());
    assert!((std - spec.a0.std).abs() < 4.0 * spec.a0.std / (2.0 * n as f64).sqrt());
}

#[test]
fn small_sample_mean_within_three_standard_errors() {
    let set = sample_prior(&default_prior(), 1000, 1).unwrap();
    let mean = set.samples.iter().map(|s| s.omega0).sum::<f64>() / 1000.0;
    assert!((mean - 2.0 * std::f64::consts::PI).abs() < 3.0 * 0.25 / 1000f64.sqrt());
}

#[test]
fn parameters_are_uncorrelated() {
    let n = 50_000;
    let set = sample_prior(&default_prior(), n, 7).unwrap();
    let cols: Vec<Vec<f64>> = (0..5)
        .map(|p| set.samples.iter().map(|s| s.to_array()[p]).collect())
        .collect();
    for a in 0..5 {
        for b in a + 1..5 {
            let (ma, sa) = moments(&cols[a]);
            let (mb, sb) = moments(&cols[b]);
            let cov = cols[a]
                .iter()
                .zip(&cols[b])
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>()
                / (n as f64 - 1.0);
            let r = cov / (sa * sb);
            assert!(r.abs() < 4.0 / (n as f64).sqrt(), "corr({a},{b}) = {r}");
        }
    }
}

#[test]
fn draws_are_reproducible_and_seed_dependent() {
    let spec = default_prior();
    let a = sample_prior(&spec, 500, 99).unwrap();
    let b = sample_prior(&spec, 500, 99).unwrap();
    let c = sample_prior(&spec, 500, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let prefix = sample_prior(&spec, 200, 99).unwrap();
    assert_eq!(prefix.samples[..], a.samples[..200]);
}

#[test]
fn every_sample_is_admissible() {
    let set = sample_prior(&default_prior(), 20_000, 5).unwrap();
    for s in &set.samples {
        assert!(s.omega0 > 0.0 && s.omega > 0.0 && s.alpha >= 0.0 && s.beta >= 0.0);
        assert!(s.a0.abs() >= MIN_ABS_AMPLITUDE);
    }
}

proptest! {
    #[test]
    fn moment_matching_inverts_exactly(mean in 1e-6f64..1e3, cv in 1e-4f64..2.0) {
        let std = cv * mean;
        let (mu, sigma) = lognormal_underlying(mean, std).unwrap();
        let m = (mu + 0.5 * sigma * sigma).exp();
        let s = m * (sigma * sigma).exp_m1().sqrt();
        prop_assert!((m - mean).abs() <= 1e-12 * mean);
        prop_assert!((s - std).abs() <= 1e-9 * std);
    }
}
