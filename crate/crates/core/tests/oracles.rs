use chrono::{Duration, NaiveDate};
use heatpool::aggregate::{mean_prediction_score, member_scores, power_mean, PowerExponent};
use heatpool::climatology::{destandardize, fit_climatology, label_extreme, phi, phi_inv, standardize};
use heatpool::metrics::{auc, crps_ensemble, rmse, roc_curve, ScoredSample};
use heatpool::{Field, GridSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;

mod common;

#[test]
fn phi_matches_series_oracle() {
    let worst = (0..10_000)
        .map(|i| -8.0 + 16.0 * i as f64 / 9_999.0)
        .map(|x| (phi(x) - common::phi(x)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "max deviation {worst}");
    assert!((phi(1.2815515655446004) - 0.9).abs() <= 1e-9);
    assert!((common::phi(1.2815515655446004) - 0.9).abs() <= 1e-9);
}

#[test]
fn phi_inv_matches_bisection_oracle() {
    assert!((phi_inv(0.9).unwrap() - 1.2815515655).abs() <= 1e-8);
    assert!((common::phi_inv(0.9) - 1.2815515655).abs() <= 1e-8);
    for i in 1..1000 {
        let q = i as f64 / 1000.0;
        let x = phi_inv(q).unwrap();
        assert!((x - common::phi_inv(q)).abs() <= 1e-8, "q={q}");
        assert!((phi(x) - q).abs() <= 1e-9);
    }
    for i in 0..=1000 {
        let x = -5.0 + 10.0 * i as f64 / 1000.0;
        assert!((phi_inv(phi(x)).unwrap() - x).abs() <= 1e-8, "x={x}");
    }
}

#[test]
fn phi_symmetry() {
    let mut rng = Pcg64Mcg::seed_from_u64(1);
    for _ in 0..1000 {
        let x: f64 = rng.gen_range(-8.0..8.0);
        assert!((phi(x) + phi(-x) - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn exceedance_frequency_law_of_large_numbers() {
    let g = GridSpec::new(48).unwrap();
    let mut rng = Pcg64Mcg::seed_from_u64(20);
    let mut positives = 0usize;
    let mut total = 0usize;
    for _ in 0..100 {
        let f = Field::from_fn(g, |_| rng.sample(StandardNormal));
        let l = label_extreme(&f, 0.8).unwrap();
        positives += l.positives();
        total += g.cell_count();
    }
    let rate = positives as f64 / total as f64;
    assert!((rate - 0.2).abs() <= 0.005, "rate {rate}");
}

#[test]
fn climatology_is_order_invariant_and_inverts() {
    let g = GridSpec::new(3).unwrap();
    let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    let mut rng = Pcg64Mcg::seed_from_u64(9);
    let series: Vec<(NaiveDate, Field)> = (0..800)
        .map(|d| {
            let f = Field::from_fn(g, |c| 280.0 + c.face as f64 + 4.0 * rng.sample::<f64, _>(StandardNormal));
            (start + Duration::days(d), f)
        })
        .collect();
    let a = fit_climatology(&series, 31).unwrap();
    let mut shuffled = series.clone();
    shuffled.reverse();
    shuffled.swap(3, 500);
    let b = fit_climatology(&shuffled, 31).unwrap();
    for (x, y) in a.means().iter().zip(b.means()) {
        assert!((x - y).abs() <= 1e-9);
    }
    for (x, y) in a.stds().iter().zip(b.stds()) {
        assert!((x - y).abs() <= 1e-9);
    }
    for (date, f) in series.iter().step_by(37) {
        let z = standardize(f, *date, &a).unwrap();
        let back = destandardize(&z, *date, &a).unwrap();
        for (u, v) in back.values().iter().zip(f.values()) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
        let zero = Field::zeros(g);
        let round = standardize(&destandardize(&zero, *date, &a).unwrap(), *date, &a).unwrap();
        assert!(round.values().iter().all(|v| v.abs() <= 1e-12));
    }
}

#[test]
fn auc_equals_pair_counting() {
    let mut rng = Pcg64Mcg::seed_from_u64(2);
    let mut done = 0;
    while done < 200 {
        let n = rng.gen_range(2..=500);
        let levels = rng.gen_range(2..=40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / (levels - 1) as f64).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.gen::<f64>() < 0.3 + 0.4 * s).collect();
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            continue;
        }
        let samples: Vec<ScoredSample> = scores
            .iter()
            .zip(&labels)
            .map(|(&s, &y)| ScoredSample::new(s, y).unwrap())
            .collect();
        let a = auc(&samples).unwrap();
        assert!((a - common::mann_whitney_auc(&scores, &labels)).abs() <= 1e-12);
        let roc = roc_curve(&samples).unwrap();
        let trapezoid: f64 = roc
            .points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum();
        assert!((trapezoid - a).abs() <= 1e-12);
        assert!(roc.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        done += 1;
    }
}

#[test]
fn crps_matches_integral() {
    let mut rng = Pcg64Mcg::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(1..=20);
        let members: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let truth = rng.gen_range(-10.0..10.0);
        let c = crps_ensemble(&members, truth).unwrap();
        assert!((c - common::crps_integral(&members, truth)).abs() <= 1e-6);
    }
}

#[test]
fn rmse_example() {
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355339059).abs() <= 1e-10);
}

#[test]
fn mean_prediction_differs_from_unit_power_mean() {
    let anoms = [0.0, 2.0];
    let mp = mean_prediction_score(&anoms).unwrap().value;
    let pm = power_mean(&member_scores(&anoms).unwrap(), PowerExponent::new(1.0).unwrap()).value;
    assert!((mp - common::phi(1.0)).abs() <= 1e-9);
    assert!((pm - (0.5 + common::phi(2.0)) / 2.0).abs() <= 1e-9);
    assert!((mp - 0.8413447461).abs() <= 1e-9);
    assert!((pm - 0.7386249340).abs() <= 1e-9);
}

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 1..60)
}

proptest! {
    #[test]
    fn power_mean_bounds_and_monotonicity(s in scores_strategy()) {
        let ms = heatpool::aggregate::MemberScores::new(s.clone()).unwrap();
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut prev = f64::NEG_INFINITY;
        for p in [1.0, 2.0, 5.0, 20.0, 31.9, 32.1, 100.0, 1e3, 1e6] {
            let v = power_mean(&ms, PowerExponent::new(p).unwrap()).value;
            prop_assert!(v >= lo && v <= hi);
            prop_assert!(v >= prev - 1e-12, "p={} v={} prev={}", p, v, prev);
            prev = v;
        }
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        prop_assert!((power_mean(&ms, PowerExponent::new(1.0).unwrap()).value - mean).abs() <= 1e-12);
        if hi >= 0.01 {
            prop_assert!((power_mean(&ms, PowerExponent::new(1e6).unwrap()).value - hi).abs() <= 1e-3);
        }
    }

    #[test]
    fn power_mean_permutation_invariant(s in scores_strategy(), p in 1.0f64..200.0, rot in 0usize..60) {
        let mut r = s.clone();
        let k = rot % r.len();
        r.rotate_left(k);
        r.reverse();
        let a = power_mean(&heatpool::aggregate::MemberScores::new(s).unwrap(), PowerExponent::new(p).unwrap()).value;
        let b = power_mean(&heatpool::aggregate::MemberScores::new(r).unwrap(), PowerExponent::new(p).unwrap()).value;
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1.0) * 4.0);
    }

    #[test]
    fn crps_is_nonnegative(m in prop::collection::vec(-10.0f64..10.0, 1..20), t in -10.0f64..10.0) {
        prop_assert!(crps_ensemble(&m, t).unwrap() >= 0.0);
    }

    #[test]
    fn labels_shrink_with_quantile(x in prop::collection::vec(-4.0f64..4.0, 24), q1 in 0.5f64..0.99, dq in 0.0f64..0.3) {
        let g = GridSpec::new(2).unwrap();
        let f = Field::from_values(g, x).unwrap();
        let q2 = (q1 + dq).min(0.999);
        let a = label_extreme(&f, q1).unwrap();
        let b = label_extreme(&f, q2).unwrap();
        prop_assert!(a.labels().iter().zip(b.labels()).all(|(u, v)| u >= v));
    }
}
