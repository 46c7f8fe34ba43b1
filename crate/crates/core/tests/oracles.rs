//! Closed-form oracles against the Monte Carlo machinery.

use landau_core::brownian::{simulate_path, BmConfig, Scheme};
use landau_core::density::{mc_density, normalization_integral, DensityConfig};
use landau_core::linalg::{Mat, Vector};
use landau_core::model::{covariance_c, covariance_c_bar, mean_conditional_covariance, second_moment_at, InitialLaw};
use landau_core::sampler::FactorizedSampler;
use landau_core::stats::{block_reduce, MeanVar};

fn mean_matrix(n: usize, paths: usize, f: impl Fn(usize) -> Mat + Sync) -> (Vec<f64>, Vec<f64>) {
    let acc = block_reduce(
        paths,
        || vec![MeanVar::new(); n * n],
        |a, i| {
            let m = f(i);
            for (x, y) in a.iter_mut().zip(m.as_slice()) {
                x.push(*y);
            }
        },
    );
    (acc.iter().map(|a| a.mean).collect(), acc.iter().map(|a| a.std_error()).collect())
}

#[test]
fn conditional_covariance_has_the_closed_form_mean() {
    let law = InitialLaw::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let t = 0.4;
    let cfg = BmConfig::new(3, t, 128, 17).unwrap();
    let exact = mean_conditional_covariance(t, &law);
    for reversed in [false, true] {
        let (m, se) = mean_matrix(3, 4000, |i| {
            let p = simulate_path(&cfg, i as u64);
            let c = if reversed { covariance_c_bar(&p, &law) } else { covariance_c(&p, &law) };
            *c.unwrap().mat()
        });
        for k in 0..9 {
            let z = (m[k] - exact.as_slice()[k]).abs() / se[k].max(1e-12);
            assert!(z < 4.5, "entry {k}: {} vs {} (reversed {reversed})", m[k], exact.as_slice()[k]);
        }
    }
}

#[test]
fn second_moment_of_the_sampler_follows_lambda() {
    let law = InitialLaw::diagonal(&[0.6, 0.3, 0.1]).unwrap();
    let t = 0.1;
    let s = FactorizedSampler::new(BmConfig::new(3, t, 64, 3).unwrap(), law.clone()).unwrap();
    let exact = second_moment_at(t, &law);
    let (m, se) = mean_matrix(3, 20_000, |i| {
        let x = s.sample_from_law(i as u64).1.x;
        Mat::outer(&x, &x)
    });
    for k in 0..9 {
        let z = (m[k] - exact.as_slice()[k]).abs() / se[k];
        assert!(z < 4.5, "entry {k}: {} vs {}", m[k], exact.as_slice()[k]);
    }
}

#[test]
fn ito_scheme_agrees_in_weak_sense() {
    // Step halving of E[Z_t] under the projected Euler scheme approaches e^{-(N-1)t/2}.
    let t = 0.5;
    let target = (-0.5f64).exp();
    let mut errs = Vec::new();
    for steps in [8usize, 16, 32] {
        let cfg = BmConfig::new(2, t, steps, 9).unwrap().with_scheme(Scheme::ItoEulerProjected);
        let m = landau_core::brownian::resolvent_mean(&cfg, 40_000);
        let mean = 0.5 * (m.mean[0] + m.mean[3]);
        let se = 0.5 * (m.std_error[0].powi(2) + m.std_error[3].powi(2)).sqrt();
        errs.push(((mean - target).abs(), se));
    }
    let (last, se) = errs[2];
    assert!(last < 4.0 * se + 0.01, "errors {errs:?}");
}

#[test]
fn two_dimensional_density_integrates_to_one() {
    let law = InitialLaw::diagonal(&[0.7, 0.3]).unwrap();
    let dc = DensityConfig::new(1000, 0.01, 4);
    let c = normalization_integral(&Vector::from_slice(&[0.3, -0.4]), 0.5, &law, &dc, 3.5, 56).unwrap();
    assert!((c.integral - 1.0).abs() < 0.01, "integral {}", c.integral);
}

#[test]
fn density_is_reproducible_and_seed_dependent() {
    let law = InitialLaw::diagonal(&[0.7, 0.3]).unwrap();
    let (x0, v) = (Vector::from_slice(&[0.5, 0.0]), Vector::from_slice(&[0.1, 0.4]));
    let a = mc_density(&x0, &v, 0.3, &law, &DensityConfig::new(2000, 0.01, 1)).unwrap();
    let b = mc_density(&x0, &v, 0.3, &law, &DensityConfig::new(2000, 0.01, 1)).unwrap();
    let c = mc_density(&x0, &v, 0.3, &law, &DensityConfig::new(2000, 0.01, 2)).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_ne!(a.value, c.value);
    assert!((a.value - c.value).abs() < 5.0 * (a.std_error.powi(2) + c.std_error.powi(2)).sqrt());
}
