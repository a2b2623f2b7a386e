//! Ensemble-to-score aggregation: power-mean pooling of member scores, the
//! mean-prediction baseline, max pooling, and thresholding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::climatology::phi;
use crate::error::{Error, Result};

/// Exponents at or above this are evaluated in the log domain.
pub const LOG_DOMAIN_MIN_P: f64 = 32.0;

/// Per-member scores `phi(x_i)`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberScores(Vec<f64>);

impl MemberScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("no member scores"));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("member score {s} outside [0, 1]")));
        }
        Ok(MemberScores(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A power exponent `p >= 1`, or `Infinite` for max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerExponent {
    Finite(f64),
    Infinite,
}

impl PowerExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            return Ok(PowerExponent::Infinite);
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::invalid(format!("power exponent must be >= 1, got {p}")));
        }
        Ok(PowerExponent::Finite(p))
    }

    pub fn value(&self) -> f64 {
        match *self {
            PowerExponent::Finite(p) => p,
            PowerExponent::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for PowerExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerExponent::Finite(p) => write!(f, "{p}"),
            PowerExponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    PowerMean(PowerExponent),
    MeanPrediction,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateScore {
    pub value: f64,
    pub method: Method,
}

pub fn member_scores(anoms: &[f64]) -> Result<MemberScores> {
    if anoms.is_empty() {
        return Err(Error::invalid("no member anomalies"));
    }
    if anoms.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("member anomalies must be finite"));
    }
    MemberScores::new(anoms.iter().map(|&x| phi(x)).collect())
}

fn min_max(s: &[f64]) -> (f64, f64) {
    s.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Direct form of the power mean.
pub(crate) fn power_mean_direct(s: &[f64], p: f64) -> f64 {
    let n = s.len() as f64;
    if p == 1.0 {
        return s.iter().sum::<f64>() / n;
    }
    (s.iter().map(|x| x.powf(p)).sum::<f64>() / n).powf(1.0 / p)
}

/// Log-sum-exp form; zero scores contribute exactly nothing to the sum.
pub(crate) fn power_mean_log(s: &[f64], p: f64) -> f64 {
    let hi = min_max(s).1;
    if hi == 0.0 {
        return 0.0;
    }
    let top = p * hi.ln();
    let sum: f64 = s
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| (p * x.ln() - top).exp())
        .sum();
    ((top + sum.ln() - (s.len() as f64).ln()) / p).exp()
}

/// Power mean of scores in `[0, 1]`; `p` must already be validated.
pub(crate) fn power_mean_raw(s: &[f64], p: f64) -> f64 {
    let (lo, hi) = min_max(s);
    let v = if p == f64::INFINITY {
        return hi;
    } else if p < LOG_DOMAIN_MIN_P {
        power_mean_direct(s, p)
    } else {
        power_mean_log(s, p)
    };
    v.clamp(lo, hi)
}

/// `((1/n) sum s_i^p)^(1/p)`, evaluated in the log domain for large `p`.
pub fn power_mean(s: &MemberScores, p: PowerExponent) -> AggregateScore {
    let method = match p {
        PowerExponent::Finite(_) => Method::PowerMean(p),
        PowerExponent::Infinite => Method::Max,
    };
    AggregateScore {
        value: power_mean_raw(&s.0, p.value()),
        method,
    }
}

pub fn max_score(s: &MemberScores) -> AggregateScore {
    AggregateScore {
        value: min_max(&s.0).1,
        method: Method::Max,
    }
}

/// `phi(mean of anomalies)`.
pub fn mean_prediction_score(anoms: &[f64]) -> Result<AggregateScore> {
    if anoms.is_empty() {
        return Err(Error::invalid("no member anomalies"));
    }
    let mean = anoms.iter().sum::<f64>() / anoms.len() as f64;
    if !mean.is_finite() {
        return Err(Error::invalid("member anomalies must be finite"));
    }
    Ok(AggregateScore {
        value: phi(mean),
        method: Method::MeanPrediction,
    })
}

/// `1` iff `score >= tau`.
pub fn binarize(score: &AggregateScore, tau: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("threshold must lie in [0, 1], got {tau}")));
    }
    Ok(u8::from(score.value >= tau))
}

/// Member log-scores precomputed once so that many exponents can be swept
/// cheaply. `ln 0 = -inf` entries drop out of every sum.
#[derive(Debug, Clone)]
pub struct LogScores<'a> {
    logs: &'a [f64],
}

impl<'a> LogScores<'a> {
    pub fn new(logs: &'a [f64]) -> Self {
        LogScores { logs }
    }

    /// Same value as [`power_mean`] on `exp(logs)`.
    pub fn power_mean(&self, p: f64) -> f64 {
        let n = self.logs.len() as f64;
        let (lo, hi) = min_max(self.logs);
        let v = if p == f64::INFINITY {
            return hi.exp();
        } else if p == 1.0 {
            self.logs.iter().map(|l| l.exp()).sum::<f64>() / n
        } else if p < LOG_DOMAIN_MIN_P {
            (self.logs.iter().map(|l| (p * l).exp()).sum::<f64>() / n).powf(1.0 / p)
        } else {
            if hi == f64::NEG_INFINITY {
                return 0.0;
            }
            let top = p * hi;
            let sum: f64 = self
                .logs
                .iter()
                .filter(|l| l.is_finite())
                .map(|l| (p * l - top).exp())
                .sum();
            ((top + sum.ln() - n.ln()) / p).exp()
        };
        v.clamp(lo.exp(), hi.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: &[f64]) -> MemberScores {
        MemberScores::new(v.to_vec()).unwrap()
    }

    fn pm(v: &[f64], p: f64) -> f64 {
        power_mean(&scores(v), PowerExponent::new(p).unwrap()).value
    }

    #[test]
    fn member_scores_examples() {
        assert_eq!(member_scores(&[0.0, 0.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert!((member_scores(&[1.2815515655]).unwrap().as_slice()[0] - 0.9).abs() < 1e-9);
        let s = member_scores(&[-2.0, -0.5, 0.1, 3.0]).unwrap();
        assert!(s.as_slice().windows(2).all(|w| w[0] < w[1]));
        assert!(member_scores(&[]).is_err());
        assert!(member_scores(&[f64::NAN]).is_err());
    }

    #[test]
    fn exponent_validation() {
        assert!(PowerExponent::new(0.5).is_err());
        assert!(PowerExponent::new(f64::NAN).is_err());
        assert_eq!(PowerExponent::new(f64::INFINITY).unwrap(), PowerExponent::Infinite);
        assert!(MemberScores::new(vec![]).is_err());
        assert!(MemberScores::new(vec![1.1]).is_err());
    }

    #[test]
    fn power_mean_examples() {
        assert!((pm(&[0.2, 0.4, 0.6], 1.0) - 0.4).abs() < 1e-15);
        assert!((pm(&[0.2, 0.8], 2.0) - 0.5830951895).abs() < 1e-10);
        for p in [1.0, 2.5, 31.9, 32.0, 100.0, 1e6] {
            assert!((pm(&[0.37; 7], p) - 0.37).abs() < 1e-12);
        }
        assert_eq!(power_mean(&scores(&[0.1, 0.7]), PowerExponent::Infinite).value, 0.7);
        assert_eq!(power_mean(&scores(&[0.1, 0.7]), PowerExponent::Infinite).method, Method::Max);
    }

    #[test]
    fn zero_scores_in_log_domain() {
        assert_eq!(pm(&[0.0, 0.0], 50.0), 0.0);
        let v = pm(&[0.0, 0.5], 64.0);
        assert!((v - 0.5 * 0.5f64.powf(1.0 / 64.0)).abs() < 1e-12);
    }

    #[test]
    fn mean_prediction_examples() {
        assert_eq!(mean_prediction_score(&[-1.0, 1.0]).unwrap().value, 0.5);
        let single = mean_prediction_score(&[0.7]).unwrap().value;
        assert!((single - pm(member_scores(&[0.7]).unwrap().as_slice(), 1.0)).abs() < 1e-15);
        let mp = mean_prediction_score(&[0.0, 2.0]).unwrap().value;
        let p1 = pm(member_scores(&[0.0, 2.0]).unwrap().as_slice(), 1.0);
        assert!((mp - 0.8413447461).abs() < 1e-9);
        assert!((p1 - 0.7386249340).abs() < 1e-9);
        assert!(mean_prediction_score(&[]).is_err());
    }

    #[test]
    fn binarize_boundaries() {
        let s = |v| AggregateScore { value: v, method: Method::MeanPrediction };
        assert_eq!(binarize(&s(0.3), 0.3).unwrap(), 1);
        assert_eq!(binarize(&s(0.0), 0.0).unwrap(), 1);
        assert_eq!(binarize(&s(0.999), 1.0).unwrap(), 0);
        assert!(binarize(&s(0.5), 1.5).is_err());
        assert!(binarize(&s(0.5), -0.1).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(v in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let (lo, hi) = min_max(&v);
            let mut prev = f64::NEG_INFINITY;
            for p in [1.0, 2.0, 5.0, 20.0, 100.0] {
                let x = pm(&v, p);
                prop_assert!(lo <= x && x <= hi);
                prop_assert!(x >= prev - 1e-15);
                prev = x;
            }
        }

        #[test]
        fn no_jump_at_log_domain_switch(v in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            for p in [31.9, 32.0, 32.1] {
                prop_assert!((power_mean_direct(&v, p) - power_mean_log(&v, p)).abs() <= 1e-9);
            }
            let stepped = pm(&v, 32.1) - pm(&v, 31.9);
            let smooth = power_mean_direct(&v, 32.1) - power_mean_direct(&v, 31.9);
            prop_assert!((stepped - smooth).abs() <= 1e-9);
        }

        #[test]
        fn permutation_invariant(mut v in prop::collection::vec(0.0f64..=1.0, 1..40), p in 1.0f64..200.0) {
            let a = pm(&v, p);
            v.sort_by(|a, b| b.total_cmp(a));
            let b = pm(&v, p);
            prop_assert!((a - b).abs() <= 1e-15);
        }

        #[test]
        fn log_scores_agree(v in prop::collection::vec(0.0f64..=1.0, 1..60), p in 1.0f64..500.0) {
            let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
            let a = pm(&v, p);
            let b = LogScores::new(&logs).power_mean(p);
            prop_assert!((a - b).abs() <= 1e-12, "{} {}", a, b);
        }
    }
}
