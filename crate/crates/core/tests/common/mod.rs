//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

/// erf by Maclaurin series for |x| <= 3, continued fraction for erfc beyond.
pub fn erf(x: f64) -> f64 {
    if x.abs() <= 3.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let t = term / (2.0 * n + 1.0);
            sum += t;
            if t.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        let c = erfc_cf(x.abs());
        if x > 0.0 {
            1.0 - c
        } else {
            c - 1.0
        }
    }
}

/// erfc(z) for z >= 3 by the Laplace continued fraction, evaluated backward.
fn erfc_cf(z: f64) -> f64 {
    let mut t = z;
    for k in (1..=200).rev() {
        t = z + (k as f64 / 2.0) / t;
    }
    (-z * z).exp() / PI.sqrt() / t
}

pub fn erfc(x: f64) -> f64 {
    if x > 3.0 {
        erfc_cf(x)
    } else if x < -3.0 {
        2.0 - erfc_cf(-x)
    } else {
        1.0 - erf(x)
    }
}

pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of [`phi`] by bisection.
pub fn phi_inv(q: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mann-Whitney statistic by direct pair counting, ties counted one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// CRPS as the integral of `(F(y) - 1{y >= x})^2` for the empirical CDF `F`.
/// The integrand is piecewise constant, so the midpoint rule on each piece
/// between consecutive breakpoints is exact.
pub fn crps_integral(members: &[f64], truth: f64) -> f64 {
    let mut knots: Vec<f64> = members.to_vec();
    knots.push(truth);
    knots.sort_by(f64::total_cmp);
    let n = members.len() as f64;
    let integrand = |y: f64| {
        let f = members.iter().filter(|&&m| m <= y).count() as f64 / n;
        let h = if y >= truth { 1.0 } else { 0.0 };
        (f - h) * (f - h)
    };
    knots
        .windows(2)
        .map(|w| {
            let width = w[1] - w[0];
            if width > 0.0 {
                width * integrand(0.5 * (w[0] + w[1]))
            } else {
                0.0
            }
        })
        .sum()
}

/// Pearson lag-1 autocorrelation of one series.
pub fn lag1(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}
