//! Power-exponent sweeps, the exponential `ln p_opt = a q + b` law, and
//! AUC-versus-lead evaluation with a fixed exponent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::LogScores;
use crate::climatology::{exceedance_threshold, phi};
use crate::error::{Error, Result};
use crate::metrics::{relative_improvement, rmse, RankedScores};

pub const DEFAULT_P_MAX: f64 = 1000.0;
pub const DEFAULT_P_COUNT: usize = 61;
pub const DEFAULT_QUANTILES: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 0.98];
pub const DEFAULT_SWEEP_LEAD: u32 = 7;

/// Candidate exponents: strictly increasing, starting at exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    p_values: Vec<f64>,
}

impl SweepGrid {
    pub fn new(p_values: Vec<f64>) -> Result<Self> {
        if p_values.first() != Some(&1.0) {
            return Err(Error::invalid("sweep grid must start at p = 1"));
        }
        if p_values.iter().any(|p| !p.is_finite()) || p_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sweep grid must be finite and strictly increasing"));
        }
        Ok(SweepGrid { p_values })
    }

    /// `count` points log-spaced over `[1, max]`, both ends exact.
    pub fn log_spaced(max: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return Self::new(vec![1.0]);
        }
        if count == 0 || !(max > 1.0 && max.is_finite()) {
            return Err(Error::invalid(format!("bad log grid: max={max}, count={count}")));
        }
        let step = max.ln() / (count - 1) as f64;
        let mut p: Vec<f64> = (0..count).map(|i| (step * i as f64).exp()).collect();
        p[0] = 1.0;
        p[count - 1] = max;
        Self::new(p)
    }

    pub fn values(&self) -> &[f64] {
        &self.p_values
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid::log_spaced(DEFAULT_P_MAX, DEFAULT_P_COUNT).expect("valid default grid")
    }
}

/// Member anomalies for a set of samples (sample = location x issue day),
/// `n_members` contiguous values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSamples {
    n_members: usize,
    anomalies: Vec<f32>,
}

impl EnsembleSamples {
    pub fn new(n_members: usize, anomalies: Vec<f32>) -> Result<Self> {
        if n_members == 0 || anomalies.len() % n_members != 0 {
            return Err(Error::invalid(format!(
                "{} anomalies do not split into members of {n_members}",
                anomalies.len()
            )));
        }
        if anomalies.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("member anomalies must be finite"));
        }
        Ok(EnsembleSamples { n_members, anomalies })
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn len(&self) -> usize {
        self.anomalies.len() / self.n_members
    }

    pub fn is_empty(&self) -> bool {
        self.anomalies.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.anomalies[i * self.n_members..(i + 1) * self.n_members]
    }

    pub fn anomalies(&self) -> &[f32] {
        &self.anomalies
    }

    pub fn ensemble_means(&self) -> Vec<f64> {
        self.anomalies
            .chunks_exact(self.n_members)
            .map(|m| m.iter().map(|&x| f64::from(x)).sum::<f64>() / self.n_members as f64)
            .collect()
    }
}

/// Per-sample member log-scores and mean-prediction scores.
#[derive(Debug, Clone)]
pub struct PreparedEnsembles {
    n_members: usize,
    log_scores: Vec<f64>,
    mean_prediction: Vec<f64>,
}

impl PreparedEnsembles {
    pub fn new(ens: &EnsembleSamples) -> Self {
        let log_scores = ens
            .anomalies
            .par_chunks(1 << 16)
            .flat_map_iter(|c| c.iter().map(|&x| phi(f64::from(x)).ln()).collect::<Vec<_>>())
            .collect();
        let mean_prediction = ens.ensemble_means().into_iter().map(phi).collect();
        PreparedEnsembles {
            n_members: ens.n_members,
            log_scores,
            mean_prediction,
        }
    }

    pub fn len(&self) -> usize {
        self.mean_prediction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_prediction.is_empty()
    }

    pub fn mean_prediction(&self) -> &[f64] {
        &self.mean_prediction
    }

    /// Power-mean score of every sample.
    pub fn power_mean_scores(&self, p: f64) -> Vec<f64> {
        self.log_scores
            .par_chunks(self.n_members * 4096)
            .flat_map_iter(|block| {
                block
                    .chunks_exact(self.n_members)
                    .map(|m| LogScores::new(m).power_mean(p))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub q: f64,
    pub auc_by_p: Vec<(f64, f64)>,
    pub p_opt: f64,
    pub auc_opt: f64,
    pub auc_mean_pred: f64,
    pub ri_opt: f64,
}

impl SweepReport {
    pub fn auc_at(&self, p: f64) -> Option<f64> {
        self.auc_by_p.iter().find(|(x, _)| *x == p).map(|&(_, a)| a)
    }
}

fn report_from(q: f64, grid: &SweepGrid, aucs: Vec<f64>, auc_mean_pred: f64) -> Result<SweepReport> {
    let mut best = 0;
    for (i, &a) in aucs.iter().enumerate() {
        if a > aucs[best] {
            best = i;
        }
    }
    Ok(SweepReport {
        q,
        p_opt: grid.p_values[best],
        auc_opt: aucs[best],
        auc_mean_pred,
        ri_opt: relative_improvement(aucs[best], auc_mean_pred)?,
        auc_by_p: grid.p_values.iter().copied().zip(aucs).collect(),
    })
}

/// Sweeps the grid once and scores every `(q, labels)` set against it.
/// Each exponent is an independent task; results are assembled in grid order.
pub fn sweep_label_sets(
    ens: &PreparedEnsembles,
    label_sets: &[(f64, &[bool])],
    grid: &SweepGrid,
) -> Result<Vec<SweepReport>> {
    for (_, labels) in label_sets {
        if labels.len() != ens.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                ens.len()
            )));
        }
    }
    let mean_ranked = RankedScores::new(&ens.mean_prediction)?;
    let mean_aucs = label_sets
        .iter()
        .map(|(_, y)| mean_ranked.auc(y))
        .collect::<Result<Vec<_>>>()?;

    let per_p: Vec<Vec<f64>> = grid
        .p_values
        .par_iter()
        .map(|&p| {
            let ranked = RankedScores::new(&ens.power_mean_scores(p))?;
            label_sets.iter().map(|(_, y)| ranked.auc(y)).collect()
        })
        .collect::<Result<_>>()?;

    label_sets
        .iter()
        .enumerate()
        .map(|(j, &(q, _))| {
            let aucs = per_p.iter().map(|row| row[j]).collect();
            report_from(q, grid, aucs, mean_aucs[j])
        })
        .collect()
}

pub fn sweep_p(ens: &PreparedEnsembles, labels: &[bool], q: f64, grid: &SweepGrid) -> Result<SweepReport> {
    let mut r = sweep_label_sets(ens, &[(q, labels)], grid)?;
    Ok(r.remove(0))
}

/// Exceedance labels of observed anomalies for quantile `q`.
pub fn exceedance_labels(truth: &[f64], q: f64) -> Result<Vec<bool>> {
    let t = exceedance_threshold(q)?;
    Ok(truth.iter().map(|&x| x >= t).collect())
}

/// Golden-section search on `ln p` between the grid neighbors of `p_opt`.
/// Returns the best `(p, auc)` seen, never worse than the grid optimum.
pub fn refine_p_opt(ens: &PreparedEnsembles, labels: &[bool], report: &SweepReport, iterations: usize) -> Result<(f64, f64)> {
    let idx = report
        .auc_by_p
        .iter()
        .position(|&(p, _)| p == report.p_opt)
        .ok_or_else(|| Error::invalid("p_opt is not on the report grid"))?;
    let lo = report.auc_by_p[idx.saturating_sub(1)].0.ln();
    let hi = report.auc_by_p[(idx + 1).min(report.auc_by_p.len() - 1)].0.ln();
    let eval = |lp: f64| -> Result<f64> {
        RankedScores::new(&ens.power_mean_scores(lp.exp()))?.auc(labels)
    };
    let mut best = (report.p_opt, report.auc_opt);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..iterations {
        for (x, f) in [(c, fc), (d, fd)] {
            if f > best.1 {
                best = (x.exp(), f);
            }
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, f) in [(c, fc), (d, fd)] {
        if f > best.1 {
            best = (x.exp(), f);
        }
    }
    Ok(best)
}

/// Least-squares fit of `ln p_opt = slope * q + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    #[serde(rename = "a")]
    pub slope: f64,
    #[serde(rename = "b")]
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ExponentialFit> {
    if points.len() < 2 {
        return Err(Error::invalid("exponential fit needs at least 2 points"));
    }
    if points.iter().any(|&(q, p)| !q.is_finite() || !(p >= 1.0 && p.is_finite())) {
        return Err(Error::invalid("fit points need finite q and p_opt >= 1"));
    }
    let n = points.len() as f64;
    let qm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - qm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("exponential fit needs at least 2 distinct q values"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - qm) * (p.1.ln() - lm)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * qm;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1.ln() - (slope * p.0 + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1.ln() - lm).powi(2)).sum();
    // Constant ln p_opt is fitted exactly by a zero slope.
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let slope_stderr = if points.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ExponentialFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    })
}

/// `exp(a q + b)`, floored at 1.
pub fn predict_p_opt(fit: &ExponentialFit, q: f64) -> f64 {
    (fit.slope * q + fit.intercept).exp().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadMethod {
    PowerMean,
    MeanPrediction,
    Persistence,
    Climatology,
}

impl LeadMethod {
    pub const ALL: [LeadMethod; 4] = [
        LeadMethod::PowerMean,
        LeadMethod::MeanPrediction,
        LeadMethod::Persistence,
        LeadMethod::Climatology,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LeadMethod::PowerMean => "power_mean",
            LeadMethod::MeanPrediction => "mean_prediction",
            LeadMethod::Persistence => "persistence",
            LeadMethod::Climatology => "climatology",
        }
    }
}

/// Forecasts and verifying truth for one lead, aligned by sample.
#[derive(Debug, Clone)]
pub struct LeadData {
    pub ensembles: EnsembleSamples,
    /// Issue-day anomaly carried forward.
    pub persistence: Vec<f64>,
    /// Verifying anomaly at issue day + lead.
    pub truth: Vec<f64>,
}

impl LeadData {
    pub fn validate(&self) -> Result<()> {
        let n = self.ensembles.len();
        if self.persistence.len() != n || self.truth.len() != n {
            return Err(Error::invalid(format!(
                "lead data misaligned: {n} ensembles, {} persistence, {} truth",
                self.persistence.len(),
                self.truth.len()
            )));
        }
        Ok(())
    }
}

/// Supplies per-lead forecast data on demand.
pub trait LeadSource {
    fn available_leads(&self) -> Vec<u32>;
    fn lead_data(&self, lead: u32) -> Result<LeadData>;
}

/// AUC of each method per lead, for one `(q, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadCurve {
    pub q: f64,
    pub p: f64,
    pub points: Vec<(LeadMethod, u32, f64)>,
}

impl LeadCurve {
    pub fn series(&self, method: LeadMethod) -> Vec<(u32, f64)> {
        self.points
            .iter()
            .filter(|(m, _, _)| *m == method)
            .map(|&(_, l, a)| (l, a))
            .collect()
    }
}

/// RMSE and mean CRPS of each method's anomaly forecast at one lead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillRow {
    pub method: LeadMethod,
    pub lead: u32,
    pub rmse: f64,
    pub crps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTable {
    pub curves: Vec<LeadCurve>,
    pub skill: Vec<SkillRow>,
}

/// CRPS by the sorted-member identity
/// `sum_j sum_k |x_j - x_k| = 2 sum_i (2i - n + 1) x_(i)`.
pub(crate) fn crps_sorted(members: &mut [f64], truth: f64) -> f64 {
    members.sort_unstable_by(f64::total_cmp);
    let n = members.len() as f64;
    let skill = members.iter().map(|m| (m - truth).abs()).sum::<f64>() / n;
    let spread: f64 = members
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * i as f64 - n + 1.0) * x)
        .sum();
    (skill - spread / (n * n)).max(0.0)
}

fn mean_crps(data: &LeadData) -> f64 {
    let n = data.ensembles.n_members();
    let total: f64 = (0..data.ensembles.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let mut m: Vec<f64> = data.ensembles.sample(i).iter().map(|&x| f64::from(x)).collect();
            debug_assert_eq!(m.len(), n);
            crps_sorted(&mut m, data.truth[i])
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / data.ensembles.len() as f64
}

fn mean_abs(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

/// Evaluates every `(q, p)` target over `leads`, plus forecast skill.
pub fn evaluate_lead_table(source: &dyn LeadSource, targets: &[(f64, f64)], leads: &[u32]) -> Result<LeadTable> {
    let available = source.available_leads();
    if let Some(l) = leads.iter().find(|l| !available.contains(l)) {
        return Err(Error::invalid(format!("no forecasts for lead {l}")));
    }
    if leads.is_empty() {
        return Err(Error::invalid("no leads requested"));
    }
    let mut curves: Vec<LeadCurve> = targets
        .iter()
        .map(|&(q, p)| LeadCurve { q, p, points: Vec::new() })
        .collect();
    let mut skill = Vec::new();
    for &lead in leads {
        let data = source.lead_data(lead)?;
        data.validate()?;
        let prepared = PreparedEnsembles::new(&data.ensembles);
        let persistence: Vec<f64> = data.persistence.iter().map(|&x| phi(x)).collect();
        let mean_ranked = RankedScores::new(prepared.mean_prediction())?;
        let persist_ranked = RankedScores::new(&persistence)?;
        let clim_ranked = RankedScores::new(&vec![phi(0.0); data.truth.len()])?;
        for curve in curves.iter_mut() {
            let labels = exceedance_labels(&data.truth, curve.q)?;
            let pm = RankedScores::new(&prepared.power_mean_scores(curve.p))?.auc(&labels)?;
            curve.points.push((LeadMethod::PowerMean, lead, pm));
            curve.points.push((LeadMethod::MeanPrediction, lead, mean_ranked.auc(&labels)?));
            curve.points.push((LeadMethod::Persistence, lead, persist_ranked.auc(&labels)?));
            curve.points.push((LeadMethod::Climatology, lead, clim_ranked.auc(&labels)?));
        }
        let means = data.ensembles.ensemble_means();
        let zeros = vec![0.0; data.truth.len()];
        skill.push(SkillRow {
            method: LeadMethod::MeanPrediction,
            lead,
            rmse: rmse(&means, &data.truth)?,
            crps: mean_crps(&data),
        });
        skill.push(SkillRow {
            method: LeadMethod::Persistence,
            lead,
            rmse: rmse(&data.persistence, &data.truth)?,
            crps: mean_abs(&data.persistence, &data.truth),
        });
        skill.push(SkillRow {
            method: LeadMethod::Climatology,
            lead,
            rmse: rmse(&zeros, &data.truth)?,
            crps: mean_abs(&zeros, &data.truth),
        });
    }
    Ok(LeadTable { curves, skill })
}

/// AUC per method per lead with a fixed exponent `p`.
pub fn evaluate_leads(source: &dyn LeadSource, q: f64, p: f64, leads: &[u32]) -> Result<LeadCurve> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("power exponent must be >= 1, got {p}")));
    }
    let mut t = evaluate_lead_table(source, &[(q, p)], leads)?;
    Ok(t.curves.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::crps_ensemble;

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        assert_eq!(g.values().len(), 61);
        assert_eq!(g.values()[0], 1.0);
        assert_eq!(g.values()[60], 1000.0);
        assert!((g.values()[20] - 10.0).abs() < 1e-9);
        assert!(SweepGrid::new(vec![2.0, 3.0]).is_err());
        assert!(SweepGrid::new(vec![1.0, 1.0]).is_err());
        assert_eq!(SweepGrid::log_spaced(1000.0, 1).unwrap().values(), &[1.0]);
    }

    #[test]
    fn exact_exponential_recovery() {
        let pts: Vec<_> = [0.8, 0.85, 0.9, 0.95, 0.98]
            .iter()
            .map(|&q| (q, (5.0 * q - 2.0f64).exp()))
            .collect();
        let f = fit_exponential(&pts).unwrap();
        assert!((f.slope - 5.0).abs() < 1e-9);
        assert!((f.intercept + 2.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        for &(q, p) in &pts {
            assert!((predict_p_opt(&f, q) - p).abs() < 1e-9 * p);
        }
        let two = fit_exponential(&[(0.8, 3.0), (0.9, 7.0)]).unwrap();
        assert_eq!(two.r_squared, 1.0);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_exponential(&[(0.8, 2.0)]).is_err());
        assert!(fit_exponential(&[(0.8, 2.0), (0.8, 3.0)]).is_err());
        assert!(fit_exponential(&[(0.8, 0.5), (0.9, 3.0)]).is_err());
    }

    #[test]
    fn predict_examples() {
        let f = |a: f64, b: f64| ExponentialFit { slope: a, intercept: b, r_squared: 1.0, slope_stderr: 0.0 };
        assert_eq!(predict_p_opt(&f(0.0, 0.0), 0.93), 1.0);
        assert!((predict_p_opt(&f(0.0, 5f64.ln()), 0.7) - 5.0).abs() < 1e-12);
        assert_eq!(predict_p_opt(&f(-10.0, 0.0), 0.9), 1.0);
    }

    #[test]
    fn sorted_crps_matches_pairwise() {
        let mut m = vec![0.3, -1.2, 2.5, 0.3, 4.0, -0.7];
        let want = crps_ensemble(&m, 0.9).unwrap();
        assert!((crps_sorted(&mut m, 0.9) - want).abs() < 1e-12);
    }

    #[test]
    fn ensemble_samples_validation() {
        assert!(EnsembleSamples::new(0, vec![]).is_err());
        assert!(EnsembleSamples::new(3, vec![0.0; 4]).is_err());
        assert!(EnsembleSamples::new(2, vec![0.0, f32::NAN]).is_err());
        let e = EnsembleSamples::new(2, vec![1.0, 3.0, -1.0, 0.0]).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.ensemble_means(), vec![2.0, -0.5]);
    }

    #[test]
    fn singleton_grid() {
        let ens = EnsembleSamples::new(2, vec![1.0, 0.0, -1.0, 0.5, 0.2, 0.1, 2.0, 1.5]).unwrap();
        let prepared = PreparedEnsembles::new(&ens);
        let labels = [true, false, false, true];
        let grid = SweepGrid::new(vec![1.0]).unwrap();
        let r = sweep_p(&prepared, &labels, 0.9, &grid).unwrap();
        assert_eq!(r.p_opt, 1.0);
        assert_eq!(Some(r.auc_opt), r.auc_at(1.0));
        assert!(sweep_p(&prepared, &[true; 4], 0.9, &grid).is_err());
        assert!(sweep_p(&prepared, &[true; 3], 0.9, &grid).is_err());
    }
}
