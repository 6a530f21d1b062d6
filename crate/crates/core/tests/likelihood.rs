mod common;

use common::random_model;
use pge1::{
    fit_mle, loglik, observed_information, score, Error, FitOptions, FixedMask, Param, SeededRng,
    SsModel, TwoSample,
};

fn model(v: [f64; 6]) -> SsModel {
    SsModel::from_array(v).unwrap()
}

fn simulate(m: &SsModel, n1: usize, n2: usize, seed: u64) -> TwoSample {
    let mut rng = SeededRng::new(seed, 0);
    let x = m.strength_law().sample(n1, &mut rng);
    let y = m.stress_law().sample(n2, &mut rng);
    TwoSample::new(x, y).unwrap()
}

fn with(m: &SsModel, i: usize, v: f64) -> SsModel {
    let mut t = m.to_array();
    t[i] = v;
    model(t)
}

const SETTING1: [f64; 6] = [4.0, 1.0, 10.0, 1.0, 1.5, 0.2];
const SETTING2: [f64; 6] = [1.0, 1.0, 2.5, 3.0, 0.5, 0.3];

// Setting-1 draws; ℓ at the truth evaluated with 40-digit arithmetic.
const X30: [f64; 30] = [
    0.012177632754879557,
    0.002530410701241616,
    0.006781074533775637,
    0.0035501502623291343,
    0.0019720493431642054,
    0.011870802248635216,
    0.03184222673563344,
    0.012654407433380878,
    0.006414946397933194,
    0.001316279846312945,
    0.010584252420481088,
    0.02340342199450615,
    0.011561252715162076,
    0.015066044134238801,
    0.05027012433668492,
    0.02672046529098895,
    0.011258382663161674,
    0.008957328675678349,
    0.02405907431038921,
    0.008790686578757055,
    0.016417329606328215,
    0.0028192232949587697,
    0.018690841031468088,
    0.03480999061773312,
    0.012949759601755968,
    0.018601578120417496,
    0.013864138302775128,
    0.0028988137206474823,
    0.02211409408214395,
    0.01940862186931139,
];
const Y30: [f64; 30] = [
    0.06354687576065446,
    0.1359242810155873,
    0.08258674669563464,
    0.0837349303204175,
    0.017589687628343304,
    0.22370456403819627,
    0.06277107878705145,
    0.04858360034244263,
    0.02510998636354825,
    0.07287200019593838,
    0.142444790698722,
    0.004680764260581638,
    0.06822766944407425,
    0.17236303275976594,
    1.7459723444962202e-6,
    0.04260047671992633,
    0.05493657190677906,
    0.09014930006277272,
    0.10739220755348568,
    0.1576518948770129,
    0.054821182629052036,
    0.05578574079999785,
    0.02541262443226633,
    0.0733302189584196,
    0.181977149295979,
    0.13078764329280543,
    0.0393356632053787,
    0.009546455977707037,
    0.06401320427216306,
    0.09217085950725512,
];

#[test]
fn reference_loglik() {
    let d = TwoSample::new(X30.to_vec(), Y30.to_vec()).unwrap();
    let l = loglik(&model(SETTING1), &d);
    assert!((l - 144.761_043_600_690_402_33).abs() < 1e-9, "{l}");
}

#[test]
fn exponential_case_loglik() {
    let eta = 1.7;
    let lambda = 0.8;
    let m = model([2.0, 1.0, eta, eta, lambda, 0.5]);
    let d = TwoSample::new(vec![0.3], vec![1.1]).unwrap();
    let rate = (2.0 * eta + 1.0) * lambda;
    let e = 2.0 * rate.ln() - rate * (0.3 + 1.1);
    assert!((loglik(&m, &d) - e).abs() < 1e-12);
}

#[test]
fn loglik_factorizes() {
    let mut rng = SeededRng::new(11, 0);
    for seed in 0..20 {
        let m = random_model(&mut rng);
        let d = simulate(&m, 17, 9, seed);
        let fx = m.strength_law();
        let fy = m.stress_law();
        let sum: f64 = d.x().iter().map(|&x| fx.ln_pdf(x)).sum::<f64>()
            + d.y().iter().map(|&y| fy.ln_pdf(y)).sum::<f64>();
        assert!((loglik(&m, &d) - sum).abs() < 1e-9);
    }
}

#[test]
fn loglik_outside_support_is_neg_infinity() {
    let m = model(SETTING1);
    let upper = m.support_upper();
    let d = TwoSample::new(vec![0.01, upper * 1.01], vec![0.02]).unwrap();
    assert_eq!(loglik(&m, &d), f64::NEG_INFINITY);
    assert!(matches!(score(&m, &d), Err(Error::InfeasiblePoint)));
    assert!(matches!(
        observed_information(&m, &d),
        Err(Error::InfeasiblePoint)
    ));
}

#[test]
fn score_matches_finite_differences() {
    let mut rng = SeededRng::new(2024, 0);
    for k in 0..100u64 {
        let m = random_model(&mut rng);
        let d = simulate(
            &m,
            5 + (k as usize % 26),
            5 + (k as usize * 7 % 26),
            1000 + k,
        );
        let g = score(&m, &d).unwrap();
        let theta = m.to_array();
        for i in 0..6 {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let up = loglik(&with(&m, i, theta[i] + h), &d);
            let dn = loglik(&with(&m, i, theta[i] - h), &d);
            let fd = (up - dn) / (2.0 * h);
            let tol = 1e-4 * g[i].abs().max(1.0);
            assert!(
                (fd - g[i]).abs() < tol,
                "point {k}, coordinate {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }
}

#[test]
fn information_matches_finite_differences() {
    let mut rng = SeededRng::new(4048, 0);
    for k in 0..25u64 {
        let m = random_model(&mut rng);
        let d = simulate(&m, 12, 20, 5000 + k);
        let info = observed_information(&m, &d).unwrap();
        assert_eq!(info, info.transpose());
        let theta = m.to_array();
        for j in 0..6 {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let up = score(&with(&m, j, theta[j] + h), &d).unwrap();
            let dn = score(&with(&m, j, theta[j] - h), &d).unwrap();
            for i in 0..6 {
                let fd = -(up[i] - dn[i]) / (2.0 * h);
                let tol = (1e-3 * info[(i, j)].abs()).max(1e-6);
                assert!(
                    (fd - info[(i, j)]).abs() < tol,
                    "point {k}, entry ({i},{j}): analytic {} vs fd {fd}",
                    info[(i, j)]
                );
            }
        }
    }
}

#[test]
fn eta1_score_at_q_zero() {
    let m = model([1.6, 1.3, 2.0, 4.0, 0.7, 0.0]);
    let d = simulate(&m, 40, 30, 3);
    let g = score(&m, &d).unwrap();
    let direct = 40.0 / 3.0
        + d.x()
            .iter()
            .map(|&x| (1.0 - 1.6 * (1.0 - (-0.7 * x).exp()).powf(1.3)).ln())
            .sum::<f64>();
    assert!((g[Param::Eta1.index()] - direct).abs() < 1e-10 * direct.abs().max(1.0));
}

#[test]
fn eta_information_entries() {
    let m = model(SETTING2);
    let d = simulate(&m, 23, 31, 8);
    let info = observed_information(&m, &d).unwrap();
    let (e1, e2) = (Param::Eta1.index(), Param::Eta2.index());
    let p = 1.0 - m.q();
    assert!((info[(e1, e1)] - 23.0 / (m.eta1() + p).powi(2)).abs() < 1e-12);
    assert!((info[(e2, e2)] - 31.0 / (m.eta2() + p).powi(2)).abs() < 1e-12);
    assert_eq!(info[(e1, e2)], 0.0);
    assert_eq!(info[(e2, e1)], 0.0);
}

#[test]
fn score_vanishes_at_mle() {
    let truth = model(SETTING2);
    let d = simulate(&truth, 60, 60, 21);
    let mask = FixedMask::shared_from(&truth);
    let fit = fit_mle(&d, &mask, None, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let g = score(&fit.estimates, &d).unwrap();
    for p in [Param::Eta1, Param::Eta2] {
        let v = fit.estimates.get(p);
        // the optimizer works in ln η: d ℓ/d ln η = η · ∂ℓ/∂η
        assert!((v * g[p.index()]).abs() < 1e-6);
    }
}

#[test]
fn shared_mask_consistency() {
    let truth = model(SETTING2);
    let d = simulate(&truth, 2000, 2000, 5);
    let fit = fit_mle(
        &d,
        &FixedMask::shared_from(&truth),
        None,
        &FitOptions::default(),
    )
    .unwrap();
    let e = fit.estimates;
    assert!((e.eta1() / 2.5 - 1.0).abs() < 0.1, "{}", e.eta1());
    assert!((e.eta2() / 3.0 - 1.0).abs() < 0.1, "{}", e.eta2());
    assert_eq!(e.a(), 1.0);
    assert_eq!(e.q(), 0.3);
}

#[test]
fn full_fit_from_truth_ascends() {
    let truth = model(SETTING1);
    let d = simulate(&truth, 2000, 2000, 1);
    let fit = fit_mle(&d, &FixedMask::free(), Some(&truth), &FitOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.score_norm < 1e-6);
    assert!(fit.loglik >= loglik(&truth, &d));
    assert!(fit.loglik.is_finite());
}

#[test]
fn infeasible_init_is_reported() {
    let truth = model(SETTING1);
    let d = simulate(&truth, 30, 30, 2);
    // a(1-q) = 100 with λ, δ held puts the support bound below the data
    let mask = FixedMask::free()
        .with(Param::A, 125.0)
        .with(Param::Q, 0.2)
        .with(Param::Lambda, 1.5)
        .with(Param::Delta, 1.0);
    assert!(-(-0.01f64).ln_1p() / 1.5 < d.max());
    let err = fit_mle(&d, &mask, None, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasibleInit(_)), "{err}");
}

#[test]
fn fit_never_descends_from_init() {
    let mut rng = SeededRng::new(77, 0);
    let opts = FitOptions::default().with_restarts(2);
    for k in 0..20u64 {
        let truth = random_model(&mut rng);
        let d = simulate(&truth, 40, 40, 300 + k);
        let mut init = truth.to_array();
        init[Param::Eta1.index()] *= rng.uniform(0.5, 2.0);
        init[Param::Eta2.index()] *= rng.uniform(0.5, 2.0);
        init[Param::Lambda.index()] *= rng.uniform(0.9, 1.1);
        let init = model(init);
        let start = loglik(&init, &d);
        if !start.is_finite() {
            continue;
        }
        let mask = FixedMask::free()
            .with(Param::A, truth.a())
            .with(Param::Q, truth.q());
        match fit_mle(&d, &mask, Some(&init), &opts) {
            Ok(fit) => {
                assert!(fit.loglik >= start, "case {k}: {} < {start}", fit.loglik);
                assert!(fit.loglik.is_finite());
            }
            Err(e) => assert!(matches!(e, Error::NoConvergence { .. }), "case {k}: {e}"),
        }
    }
}

#[test]
fn converged_information_is_psd_and_inverts() {
    let truth = model(SETTING1);
    let mut checked = 0;
    for seed in 0..10 {
        let d = simulate(&truth, 200, 200, 40 + seed);
        // a, q held: every remaining coordinate is identified
        let mask = FixedMask::free()
            .with(Param::A, truth.a())
            .with(Param::Q, truth.q());
        let Ok(fit) = fit_mle(&d, &mask, Some(&truth), &FitOptions::default()) else {
            continue;
        };
        let free: Vec<usize> = Param::ALL
            .iter()
            .filter(|p| mask.is_free(**p))
            .map(|p| p.index())
            .collect();
        // a maximum over the free coordinates: that block is PSD
        let block = nalgebra::DMatrix::from_fn(free.len(), free.len(), |i, j| {
            fit.observed_info[(free[i], free[j])]
        });
        let eig = block.symmetric_eigenvalues();
        assert!(eig.min() > -1e-6 * eig.max());
        if fit.singular_info {
            continue;
        }
        checked += 1;
        let prod = fit.info_inverse * fit.observed_info;
        for &i in &free {
            for &j in &free {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (prod[(i, j)] - target).abs() < 1e-6,
                    "({i},{j}) = {}",
                    prod[(i, j)]
                );
            }
        }
    }
    assert!(checked >= 8, "only {checked} well-conditioned fits");
}

#[test]
fn full_fit_flags_flat_direction() {
    let truth = model(SETTING1);
    let d = simulate(&truth, 2000, 2000, 1);
    let fit = fit_mle(&d, &FixedMask::free(), Some(&truth), &FitOptions::default()).unwrap();
    assert!(fit.singular_info);
    let eig = fit.observed_info.symmetric_eigenvalues();
    assert!(eig.min() > -1e-6 * eig.max());
    // the covariance is a pseudo-inverse, still symmetric and PSD
    let eig = fit.info_inverse.symmetric_eigenvalues();
    assert!(eig.min() > -1e-9 * eig.max());
}

#[test]
fn fit_is_thread_count_independent() {
    let truth = model(SETTING2);
    let d = simulate(&truth, 50, 50, 9);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                fit_mle(
                    &d,
                    &FixedMask::free().with(Param::Q, 0.3),
                    None,
                    &FitOptions::default(),
                )
            })
    };
    let one = run(1);
    let four = run(4);
    match (one, four) {
        (Ok(a), Ok(b)) => assert_eq!(a, b),
        (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
        _ => panic!("outcome depends on the thread count"),
    }
}
