//! End-to-end synthetic experiment: truth, seasonal temperatures, fitted
//! climatology, exponent sweep at one lead, exponential fit, lead curves.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::climatology::{day_of_year_index, fit_climatology, Climatology, DAYS_PER_YEAR, DEFAULT_WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{GridSpec, LatLon};
use crate::metrics::{RankedScores, RocCurve};
use crate::noise::FractalSpec;
use crate::synth::{
    default_leads, default_start, gen_truth, ForecastConfig, ObservationMap, SyntheticForecaster, TruthProcess,
    TruthSeries, Volatility, DEFAULT_BETA, DEFAULT_MEMBERS, DEFAULT_RHO,
};
use crate::tuner::{
    evaluate_lead_table, exceedance_labels, fit_exponential, refine_p_opt, sweep_label_sets, ExponentialFit,
    LeadSource, LeadTable, PreparedEnsembles, SweepGrid, SweepReport, DEFAULT_P_COUNT, DEFAULT_P_MAX,
    DEFAULT_QUANTILES, DEFAULT_SWEEP_LEAD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PGridConfig {
    pub max: f64,
    pub count: usize,
    /// Explicit exponents; overrides `max` and `count`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl Default for PGridConfig {
    fn default() -> Self {
        PGridConfig {
            max: DEFAULT_P_MAX,
            count: DEFAULT_P_COUNT,
            values: None,
        }
    }
}

impl PGridConfig {
    pub fn build(&self) -> Result<SweepGrid> {
        match &self.values {
            Some(v) => SweepGrid::new(v.clone()),
            None => SweepGrid::log_spaced(self.max, self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub resolution: usize,
    pub start: NaiveDate,
    pub train_days: usize,
    pub validation_days: usize,
    pub rho: f64,
    pub beta: f64,
    pub n_members: usize,
    pub leads: Vec<u32>,
    pub sweep_lead: u32,
    pub quantiles: Vec<f64>,
    pub p_grid: PGridConfig,
    pub refine: bool,
    pub window_days: usize,
    pub spatial: FractalSpec,
    pub volatility: Volatility,
    pub roc_svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            resolution: 8,
            start: default_start(),
            train_days: 3000,
            validation_days: 1000,
            rho: DEFAULT_RHO,
            beta: DEFAULT_BETA,
            n_members: DEFAULT_MEMBERS,
            leads: default_leads(),
            sweep_lead: DEFAULT_SWEEP_LEAD,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            p_grid: PGridConfig::default(),
            refine: false,
            window_days: DEFAULT_WINDOW_DAYS,
            spatial: FractalSpec::default(),
            volatility: Volatility::default(),
            roc_svg: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.resolution)?;
        self.truth_process().validate()?;
        self.forecast_config().validate()?;
        self.p_grid.build()?;
        if self.train_days < DAYS_PER_YEAR {
            return Err(Error::invalid(format!(
                "need at least {DAYS_PER_YEAR} training days, got {}",
                self.train_days
            )));
        }
        if self.validation_days == 0 {
            return Err(Error::invalid("validation period is empty"));
        }
        if !self.leads.contains(&self.sweep_lead) {
            return Err(Error::invalid(format!("sweep lead {} is not among the leads", self.sweep_lead)));
        }
        if self.window_days == 0 || self.window_days % 2 == 0 {
            return Err(Error::invalid("window_days must be odd and >= 1"));
        }
        if self.quantiles.is_empty() {
            return Err(Error::invalid("no quantiles"));
        }
        for &q in &self.quantiles {
            crate::climatology::check_label_quantile(q)?;
        }
        Ok(())
    }

    pub fn total_days(&self) -> usize {
        self.train_days + self.validation_days + self.leads.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn truth_process(&self) -> TruthProcess {
        TruthProcess {
            rho: self.rho,
            spatial: self.spatial.clone(),
            seed: self.seed,
            days: self.total_days(),
            volatility: self.volatility,
            start: self.start,
        }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        ForecastConfig {
            n_members: self.n_members,
            beta: self.beta,
            leads: self.leads.clone(),
        }
    }
}

/// Synthetic near-surface temperature climate in kelvin: warm tropics,
/// a seasonal cycle that flips sign across the equator, and wider spread
/// at high latitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalCycle;

impl SeasonalCycle {
    pub fn mean(&self, p: LatLon, doy: usize) -> f64 {
        let s = p.lat().to_radians().sin();
        let phase = 2.0 * std::f64::consts::PI * (doy as f64 - 196.0) / DAYS_PER_YEAR as f64;
        300.0 - 35.0 * s * s + 12.0 * s * phase.cos() + 2.0 * (p.lon().to_radians()).cos()
    }

    pub fn std(&self, p: LatLon) -> f64 {
        1.5 + 3.5 * p.lat().to_radians().sin().abs()
    }

    /// Temperature field for anomaly `x` on `date`.
    pub fn temperature(&self, x: &Field, date: NaiveDate, centers: &[LatLon]) -> Field {
        let doy = day_of_year_index(date);
        let v = x
            .values()
            .iter()
            .zip(centers)
            .map(|(&a, &p)| self.mean(p, doy) + self.std(p) * a)
            .collect();
        Field::from_values(x.grid(), v).expect("same grid")
    }
}

fn cell_centers(grid: GridSpec) -> Vec<LatLon> {
    grid.center_vecs().into_iter().map(LatLon::from_vec).collect()
}

/// Fits the climatology on the training period of the seasonal temperatures.
pub fn fit_training_climatology(truth: &TruthSeries, train_days: usize, window_days: usize) -> Result<Climatology> {
    let centers = cell_centers(truth.grid());
    let series: Vec<(NaiveDate, Field)> = (0..train_days)
        .map(|d| {
            let date = truth.date(d);
            Ok((date, SeasonalCycle.temperature(truth.field(d)?, date, &centers)))
        })
        .collect::<Result<_>>()?;
    fit_climatology(&series, window_days)
}

/// Maps true-process anomalies to anomalies against a fitted climatology.
pub fn observation_map(truth: &TruthSeries, clim: &Climatology) -> Result<ObservationMap> {
    let centers = cell_centers(truth.grid());
    let cells = centers.len();
    let mut scale = Vec::with_capacity(truth.len() * cells);
    let mut offset = Vec::with_capacity(truth.len() * cells);
    for d in 0..truth.len() {
        let doy = day_of_year_index(truth.date(d));
        let (mu, sd) = (clim.mean_slice(doy), clim.std_slice(doy));
        for (c, &p) in centers.iter().enumerate() {
            scale.push(SeasonalCycle.std(p) / sd[c]);
            offset.push((SeasonalCycle.mean(p, doy) - mu[c]) / sd[c]);
        }
    }
    ObservationMap::new(cells, scale, offset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedOptimum {
    pub q: f64,
    pub p: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub sweeps: Vec<SweepReport>,
    pub refined: Vec<RefinedOptimum>,
    pub fit: Option<ExponentialFit>,
    pub leads: LeadTable,
    pub roc: Vec<(f64, RocCurve)>,
}

impl ExperimentResults {
    /// Exponent carried to other leads for quantile `q`.
    pub fn tuned_p(&self, q: f64) -> Option<f64> {
        if let Some(r) = self.refined.iter().find(|r| r.q == q) {
            return Some(r.p);
        }
        self.sweeps.iter().find(|s| s.q == q).map(|s| s.p_opt)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let grid = GridSpec::new(config.resolution)?;
    let truth = gen_truth(grid, &config.truth_process())?;
    let clim = fit_training_climatology(&truth, config.train_days, config.window_days)?;
    let obs = observation_map(&truth, &clim)?;
    let issue = config.train_days..config.train_days + config.validation_days;
    let forecaster = SyntheticForecaster::new(&truth, issue, config.forecast_config(), config.seed, Some(&obs))?;

    let grid_p = config.p_grid.build()?;
    let data = forecaster.lead_data(config.sweep_lead)?;
    let prepared = PreparedEnsembles::new(&data.ensembles);
    let labels: Vec<Vec<bool>> = config
        .quantiles
        .iter()
        .map(|&q| exceedance_labels(&data.truth, q))
        .collect::<Result<_>>()?;
    let sets: Vec<(f64, &[bool])> = config.quantiles.iter().copied().zip(labels.iter().map(Vec::as_slice)).collect();
    let sweeps = sweep_label_sets(&prepared, &sets, &grid_p)?;

    let mut refined = Vec::new();
    if config.refine {
        for (report, y) in sweeps.iter().zip(&labels) {
            let (p, auc) = refine_p_opt(&prepared, y, report, 24)?;
            refined.push(RefinedOptimum { q: report.q, p, auc });
        }
    }

    let mut roc = Vec::new();
    if config.roc_svg {
        for (report, y) in sweeps.iter().zip(&labels) {
            let p = refined.iter().find(|r| r.q == report.q).map_or(report.p_opt, |r| r.p);
            let ranked = RankedScores::new(&prepared.power_mean_scores(p))?;
            roc.push((report.q, ranked.roc_curve(y)?));
        }
    }
    drop(prepared);
    drop(data);

    let distinct = {
        let mut q = config.quantiles.clone();
        q.sort_by(f64::total_cmp);
        q.dedup();
        q.len()
    };
    let mut results = ExperimentResults {
        config: config.clone(),
        sweeps,
        refined,
        fit: None,
        leads: LeadTable {
            curves: Vec::new(),
            skill: Vec::new(),
        },
        roc,
    };
    if distinct >= 2 {
        let points: Vec<(f64, f64)> = config
            .quantiles
            .iter()
            .map(|&q| (q, results.tuned_p(q).expect("swept q")))
            .collect();
        results.fit = Some(fit_exponential(&points)?);
    }
    let targets: Vec<(f64, f64)> = config
        .quantiles
        .iter()
        .map(|&q| (q, results.tuned_p(q).expect("swept q")))
        .collect();
    let leads = forecaster.available_leads();
    results.leads = evaluate_lead_table(&forecaster, &targets, &leads)?;
    Ok(results)
}
