mod common;

use common::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use voiceattr::attribute::AttributeKind;
use voiceattr::metrics::{cohen_kappa, fit_isotonic, krippendorff_alpha_interval, spearman_rho};

#[test]
fn randomized_metrics_match_oracles() {
    for seed in [1, 2, 3] {
        let errs = run_oracles(seed);
        assert_eq!(errs.rows.len(), 8);
        for (name, n, err) in &errs.rows {
            assert!(*n >= 20, "{name}: only {n} instances");
            assert!(*err <= TOL, "{name}: error {err:e} (seed {seed})");
        }
    }
}

#[test]
fn kappa_from_contingency_table() {
    // [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5·0.6 + 0.5·0.4 = 0.5.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [("y", "y", 20), ("y", "n", 5), ("n", "y", 10), ("n", "n", 15)] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    let k = cohen_kappa::<f64, _, _>(&a, &b, None).unwrap();
    assert!((k - 0.4).abs() < 1e-12);
    assert!((k - oracle_kappa(&a, &b, &["n", "y"], |x, y| (x == y) as u8 as f64)).abs() < 1e-12);
}

#[test]
fn alpha_toy_grid() {
    // Values 1,1 | 2,3 | 3,3: n = 6, Σ o·δ² = 2 (the 2–3 pair both ways),
    // n_c = (2, 1, 3), Σ n_c·n_k·δ² = 2·(2·1 + 2·3·4 + 1·3) = 58, so
    // α = 1 − (n − 1)·2/58 = 24/29.
    let grid = vec![vec![Some(1.0), Some(1.0)], vec![Some(2.0), Some(3.0)], vec![Some(3.0), Some(3.0)]];
    let a = krippendorff_alpha_interval(&grid).unwrap();
    assert!((a - oracle_alpha(&grid)).abs() < 1e-12);
    assert!((a - 24.0 / 29.0).abs() < 1e-12, "{a}");
}

#[test]
fn spearman_with_ties() {
    let r = spearman_rho(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    // Ranks x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4].
    assert!((r.rho - oracle_spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0])).abs() < 1e-12);
    assert!((r.rho - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
}

#[test]
fn isotonic_toy_and_exhaustive() {
    let cal = fit_isotonic(AttributeKind::Origin, &[(0.2, 1.0), (0.4, 0.0), (0.6, 1.0)]).unwrap();
    assert_eq!([0.2, 0.4, 0.6].map(|x| cal.eval(x)), [0.5, 0.5, 1.0]);
    assert_eq!(oracle_isotonic(&[1.0, 0.0, 1.0]), [0.5, 0.5, 1.0]);
}

#[test]
fn agreement_properties() {
    let mut rng = StdRng::seed_from_u64(11);
    let labels = ["a", "b", "c", "d"];
    let a: Vec<&str> = (0..1000).map(|_| labels[rng.random_range(0..4)]).collect();
    assert_eq!(cohen_kappa::<f64, _, _>(&a, &a, None).unwrap(), 1.0);
    let grid: Vec<Vec<Option<f64>>> = a.iter().map(|l| vec![Some(l.len() as f64 + rng.random_range(0..3) as f64); 3]).collect();
    assert_eq!(krippendorff_alpha_interval(&grid).unwrap(), 1.0);
    let b: Vec<&str> = (0..1000).map(|_| labels[rng.random_range(0..4)]).collect();
    assert!(cohen_kappa::<f64, _, _>(&a, &b, None).unwrap().abs() <= 0.1);
}

#[test]
fn calibration_monotone_over_sweep() {
    let mut rng = StdRng::seed_from_u64(5);
    let pairs: Vec<(f64, f64)> = (0..60).map(|_| (rng.random::<f64>() * 2.0 - 1.0, rng.random_range(0..5) as f64 / 4.0)).collect();
    let cal = fit_isotonic(AttributeKind::Occupation, &pairs).unwrap();
    let mut xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 2.4 - 1.2).collect();
    xs.sort_by(f64::total_cmp);
    let ys: Vec<f64> = xs.iter().map(|&x| cal.eval(x)).collect();
    assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    assert!(ys.iter().all(|y| (0.0..=1.0).contains(y)));
}
