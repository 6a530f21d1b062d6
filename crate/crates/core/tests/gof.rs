use pge1::gof::{hist_overlay, kolmogorov_sf, ks_statistic_with, ks_test, qq_series, GofMethod};
use pge1::{Error, FixedMask, Param, Pge1Params, SeededRng};
use proptest::prelude::*;

fn law(a: f64, delta: f64, lambda: f64, eta: f64, q: f64) -> Pge1Params {
    Pge1Params::new(a, delta, lambda, eta, q).unwrap()
}

fn teen_law() -> Pge1Params {
    law(10.5, 1.9, 0.004, 10.5, 0.5)
}

fn exact_quantiles(p: &Pge1Params, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| p.quantile((i as f64 + 0.5) / n as f64).unwrap())
        .collect()
}

#[test]
fn quantile_sample_distance_is_half_step() {
    for (p, n) in [(teen_law(), 38), (law(4.0, 1.0, 1.5, 10.0, 0.2), 200)] {
        let xs = exact_quantiles(&p, n);
        let r = ks_test(&xs, &p, &GofMethod::Asymptotic).unwrap();
        assert!((r.ks_stat - 0.5 / n as f64).abs() < 1e-12, "{}", r.ks_stat);
        assert_eq!(r.n, n);
        assert_eq!(r.method, "asymptotic");
    }
}

#[test]
fn kolmogorov_tail_values() {
    // P(K > 1.3581) ≈ 0.05 and P(K > 1.6276) ≈ 0.01
    assert!((kolmogorov_sf(1.358_098_6) - 0.05).abs() < 1e-6);
    assert!((kolmogorov_sf(1.627_623_1) - 0.01).abs() < 1e-6);
    assert!((kolmogorov_sf(0.5) - 0.963_945_243_5).abs() < 1e-8);
    assert!(kolmogorov_sf(5.0) < 1e-20);
    // adult-sized check: √256 · 0.0519
    let p = kolmogorov_sf(16.0 * 0.0519);
    assert!((p - 0.49).abs() < 0.01, "{p}");
}

#[test]
fn out_of_support_is_rejected() {
    let p = law(4.0, 1.0, 1.5, 10.0, 0.2);
    let upper = p.support_bound().upper;
    let xs = vec![0.01, upper * 1.1];
    assert!(matches!(
        ks_test(&xs, &p, &GofMethod::Asymptotic),
        Err(Error::OutOfSupport { .. })
    ));
    assert!(matches!(
        qq_series(&xs, &p),
        Err(Error::OutOfSupport { .. })
    ));
    assert!(matches!(
        hist_overlay(&xs, &p, 10),
        Err(Error::OutOfSupport { .. })
    ));
    assert!(matches!(
        ks_test(&[], &p, &GofMethod::Asymptotic),
        Err(Error::EmptySample)
    ));
}

#[test]
fn asymptotic_calibration() {
    let p = law(4.0, 1.0, 1.5, 10.0, 0.2);
    let mut rejected = 0;
    for seed in 0..200 {
        let xs = p.sample(500, &mut SeededRng::new(seed, 0));
        let r = ks_test(&xs, &p, &GofMethod::Asymptotic).unwrap();
        if r.p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / 200.0;
    assert!((0.02..=0.12).contains(&rate), "rejection rate {rate}");
}

#[test]
fn qq_of_exact_quantiles_is_diagonal() {
    let p = teen_law();
    let xs = exact_quantiles(&p, 101);
    let qq = qq_series(&xs, &p).unwrap();
    for (t, s) in qq.theoretical.iter().zip(&qq.sample) {
        assert!((t - s).abs() < 1e-10);
    }
}

#[test]
fn qq_correlation_on_simulated_sample() {
    let p = teen_law();
    for seed in 0..5 {
        let xs = p.sample(295, &mut SeededRng::new(seed, 1));
        let qq = qq_series(&xs, &p).unwrap();
        assert!(qq.correlation() > 0.99, "seed {seed}: {}", qq.correlation());
        assert!(qq.sample.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn histogram_is_normalized() {
    let p = law(1.0, 0.7, 0.5, 2.5, 0.3);
    let xs = p.sample(1000, &mut SeededRng::new(3, 0));
    for bins in [1, 7, 20, 64] {
        let h = hist_overlay(&xs, &p, bins).unwrap();
        assert_eq!(h.edges.len(), bins + 1);
        let total: f64 = h
            .densities
            .iter()
            .zip(h.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert_eq!(h.grid.len(), h.pdf.len());
    }
    assert!(matches!(hist_overlay(&xs, &p, 0), Err(Error::Config(_))));
}

#[test]
fn parametric_bootstrap_p_value() {
    let p = teen_law();
    let xs = p.sample(60, &mut SeededRng::new(8, 0));
    let method = GofMethod::ParametricBootstrap {
        replications: 200,
        seed: 5,
        mask: FixedMask::free()
            .with(Param::A, 10.5)
            .with(Param::Delta, 1.9)
            .with(Param::Lambda, 0.004)
            .with(Param::Q, 0.5),
    };
    let r = ks_test(&xs, &p, &method).unwrap();
    assert_eq!(r.method, "parametric-bootstrap");
    assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    // resolution of (1 + k)/(N + 1)
    let k = r.p_value * 201.0 - 1.0;
    assert!((k - k.round()).abs() < 1e-9);
    assert_eq!(r, ks_test(&xs, &p, &method).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn statistic_ignores_order(seed in 0u64..10_000, n in 1usize..200) {
        let p = teen_law();
        let xs = p.sample(n, &mut SeededRng::new(seed, 0));
        let d = ks_statistic_with(&xs, |x| p.cdf(x));
        let mut rev = xs.clone();
        rev.reverse();
        let mut rot = xs.clone();
        rot.rotate_left(n / 3);
        prop_assert_eq!(d, ks_statistic_with(&rev, |x| p.cdf(x)));
        prop_assert_eq!(d, ks_statistic_with(&rot, |x| p.cdf(x)));
    }

    #[test]
    fn probability_integral_transform(seed in 0u64..10_000, n in 1usize..200) {
        let p = law(4.0, 1.0, 1.5, 10.0, 0.2);
        let xs = p.sample(n, &mut SeededRng::new(seed, 2));
        let d = ks_statistic_with(&xs, |x| p.cdf(x));
        let us: Vec<f64> = xs.iter().map(|&x| p.cdf(x)).collect();
        let du = ks_statistic_with(&us, |u| u.clamp(0.0, 1.0));
        prop_assert!((d - du).abs() < 1e-12);
    }
}
