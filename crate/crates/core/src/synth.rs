//! Synthetic truth process and ensemble forecaster.
//!
//! Truth is a spatially correlated AR(1) anomaly process. Innovations are
//! modulated by a slowly varying volatility field `V_d = exp(s w_d - s^2)`,
//! where `w_d` is itself a unit-variance AR(1) field, so `E[V^2] = 1` and the
//! stationary variance stays 1. Strength `s = 0` gives the plain process
//!
//! ```text
//! x_0 = eta_0,  x_{d+1} = rho x_d + sqrt(1 - rho^2) V_d eta_{d+1}
//! ```
//!
//! The forecaster knows the volatility path, so with `beta = 1` member `i`
//! at lead `L` is a draw from the exact conditional law
//!
//! ```text
//! m_i = rho^L x_d + beta S_L(d) eps_i,
//! S_L(d)^2 = (1 - rho^2) sum_{k<L} rho^(2(L-1-k)) V_{d+k}^2
//! ```
//!
//! Member noise `eps_i` for an issue day is shared across leads.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::GridSpec;
use crate::noise::{FractalSpec, SphereSampler};
use crate::seed::derive_seed;
use crate::tuner::{EnsembleSamples, LeadData, LeadSource};

pub const DEFAULT_RHO: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.6;
pub const DEFAULT_MEMBERS: usize = 50;
pub const DEFAULT_VOLATILITY: f64 = 0.2;
pub const DEFAULT_VOLATILITY_PERSISTENCE: f64 = 0.9;
pub const STANDARDIZER_SAMPLES: usize = 10_000;

const STANDARDIZER_SEED: u64 = 0x5eed_0f_a11_ce11;
const TAG_ETA: u64 = 1;
const TAG_VOL: u64 = 2;
const TAG_MEMBER: u64 = 3;
const CHUNK_DAYS: usize = 256;

pub fn default_leads() -> Vec<u32> {
    (1..=12).collect()
}

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

type ScaleCache = Mutex<HashMap<(usize, String), Arc<Vec<f64>>>>;

fn scale_cache() -> &'static ScaleCache {
    static CACHE: OnceLock<ScaleCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Per-cell factors that bring raw fractal noise to unit variance, from
/// `E[f^2]` over [`STANDARDIZER_SAMPLES`] seeded fields. Cached per
/// (resolution, spec). Cells where the noise vanishes identically get 0.
pub fn unit_variance_scale(grid: GridSpec, spec: &FractalSpec) -> Arc<Vec<f64>> {
    let key = (grid.resolution(), format!("{spec:?}"));
    if let Some(s) = scale_cache().lock().expect("cache lock").get(&key) {
        return Arc::clone(s);
    }
    let sampler = SphereSampler::new(grid, spec);
    let cells = grid.cell_count();
    let blocks = 100;
    let per_block = STANDARDIZER_SAMPLES / blocks;
    let partial: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; cells];
            for i in b * per_block..(b + 1) * per_block {
                let f = sampler.sample(derive_seed(STANDARDIZER_SEED, &[i as u64]));
                for (a, v) in acc.iter_mut().zip(f.values()) {
                    *a += v * v;
                }
            }
            acc
        })
        .collect();
    let mut second = vec![0.0; cells];
    for block in &partial {
        for (s, v) in second.iter_mut().zip(block) {
            *s += v;
        }
    }
    let scale: Vec<f64> = second
        .iter()
        .map(|&s| {
            let m = s / (blocks * per_block) as f64;
            if m > 0.0 {
                m.sqrt().recip()
            } else {
                0.0
            }
        })
        .collect();
    let scale = Arc::new(scale);
    scale_cache()
        .lock()
        .expect("cache lock")
        .insert(key, Arc::clone(&scale));
    scale
}

/// Fractal noise rescaled to unit per-cell variance.
#[derive(Debug, Clone)]
pub struct UnitNoise {
    sampler: SphereSampler,
    scale: Arc<Vec<f64>>,
}

impl UnitNoise {
    pub fn new(grid: GridSpec, spec: &FractalSpec) -> Self {
        UnitNoise {
            sampler: SphereSampler::new(grid, spec),
            scale: unit_variance_scale(grid, spec),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.sampler.grid()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut v = self.sampler.sample(seed).into_values();
        for (x, s) in v.iter_mut().zip(self.scale.iter()) {
            *x *= s;
        }
        v
    }

    fn sample_range(&self, seed: u64, tag: u64, days: Range<usize>) -> Vec<Vec<f64>> {
        days.into_par_iter()
            .map(|d| self.sample(derive_seed(seed, &[tag, d as u64])))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volatility {
    /// Log-volatility scale `s`; 0 disables modulation.
    pub strength: f64,
    /// Daily autocorrelation of the log-volatility driver.
    pub persistence: f64,
}

impl Volatility {
    pub fn none() -> Self {
        Volatility {
            strength: 0.0,
            persistence: DEFAULT_VOLATILITY_PERSISTENCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid(format!("volatility strength must be >= 0, got {}", self.strength)));
        }
        if !(self.persistence >= 0.0 && self.persistence < 1.0) {
            return Err(Error::invalid(format!(
                "volatility persistence must lie in [0, 1), got {}",
                self.persistence
            )));
        }
        Ok(())
    }
}

impl Default for Volatility {
    fn default() -> Self {
        Volatility {
            strength: DEFAULT_VOLATILITY,
            persistence: DEFAULT_VOLATILITY_PERSISTENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthProcess {
    pub rho: f64,
    pub spatial: FractalSpec,
    pub seed: u64,
    pub days: usize,
    #[serde(default)]
    pub volatility: Volatility,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
}

impl TruthProcess {
    pub fn new(rho: f64, seed: u64, days: usize) -> Self {
        TruthProcess {
            rho,
            spatial: FractalSpec::default(),
            seed,
            days,
            volatility: Volatility::default(),
            start: default_start(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.days == 0 {
            return Err(Error::invalid("truth process needs at least one day"));
        }
        self.volatility.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSeries {
    process: TruthProcess,
    grid: GridSpec,
    anomalies: Vec<Field>,
    volatility: Vec<Field>,
}

impl TruthSeries {
    pub fn process(&self) -> &TruthProcess {
        &self.process
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.anomalies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anomalies.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.process.rho
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.process.start + Days::new(day as u64)
    }

    pub fn field(&self, day: usize) -> Result<&Field> {
        self.anomalies
            .get(day)
            .ok_or_else(|| Error::invalid(format!("day {day} outside truth of {} days", self.len())))
    }

    pub fn fields(&self) -> &[Field] {
        &self.anomalies
    }

    /// Volatility multiplier `V_d` applied to the innovation into day `d + 1`.
    pub fn volatility(&self, day: usize) -> Result<&Field> {
        self.volatility
            .get(day)
            .ok_or_else(|| Error::invalid(format!("day {day} outside truth of {} days", self.len())))
    }

    pub fn dated(&self) -> Vec<(NaiveDate, Field)> {
        self.anomalies
            .iter()
            .enumerate()
            .map(|(d, f)| (self.date(d), f.clone()))
            .collect()
    }

    /// Rebuilds a series from stored parts, e.g. after reading files.
    pub fn from_parts(process: TruthProcess, anomalies: Vec<Field>, volatility: Vec<Field>) -> Result<Self> {
        process.validate()?;
        let grid = anomalies
            .first()
            .map(Field::grid)
            .ok_or_else(|| Error::invalid("empty truth series"))?;
        if anomalies.len() != process.days || volatility.len() != process.days {
            return Err(Error::invalid(format!(
                "expected {} days, got {} anomaly and {} volatility fields",
                process.days,
                anomalies.len(),
                volatility.len()
            )));
        }
        for f in anomalies.iter().chain(&volatility) {
            f.ensure_grid(grid)?;
        }
        Ok(TruthSeries {
            process,
            grid,
            anomalies,
            volatility,
        })
    }

    /// Conditional spread `S_L(d)` of the truth `L` days after `d`.
    pub fn conditional_std(&self, day: usize, lead: u32) -> Result<Vec<f64>> {
        let lead = lead as usize;
        if lead == 0 || day + lead >= self.len() {
            return Err(Error::invalid(format!(
                "issue day {day} + lead {lead} outside truth of {} days",
                self.len()
            )));
        }
        let rho2 = self.process.rho * self.process.rho;
        let mut s2 = vec![0.0; self.grid.cell_count()];
        for k in 0..lead {
            let w = (1.0 - rho2) * rho2.powi((lead - 1 - k) as i32);
            for (s, v) in s2.iter_mut().zip(self.volatility[day + k].values()) {
                *s += w * v * v;
            }
        }
        Ok(s2.into_iter().map(f64::sqrt).collect())
    }
}

pub fn gen_truth(grid: GridSpec, process: &TruthProcess) -> Result<TruthSeries> {
    process.validate()?;
    let noise = UnitNoise::new(grid, &process.spatial);
    let cells = grid.cell_count();
    let (rho, s, rw) = (process.rho, process.volatility.strength, process.volatility.persistence);
    let innov = (1.0 - rho * rho).sqrt();
    let vol_innov = (1.0 - rw * rw).sqrt();

    let mut anomalies = Vec::with_capacity(process.days);
    let mut volatility: Vec<Field> = Vec::with_capacity(process.days);
    let mut x = vec![0.0; cells];
    let mut w = vec![0.0; cells];
    let mut start = 0;
    while start < process.days {
        let end = (start + CHUNK_DAYS).min(process.days);
        let eta = noise.sample_range(process.seed, TAG_ETA, start..end);
        let zeta = if s > 0.0 {
            noise.sample_range(process.seed, TAG_VOL, start..end)
        } else {
            Vec::new()
        };
        for (off, e) in eta.iter().enumerate() {
            let d = start + off;
            if d == 0 {
                x.copy_from_slice(e);
            } else {
                let v = volatility[d - 1].values();
                for c in 0..cells {
                    x[c] = rho * x[c] + innov * v[c] * e[c];
                }
            }
            anomalies.push(Field::from_values(grid, x.clone())?);
            let vol = if s > 0.0 {
                let z = &zeta[off];
                for c in 0..cells {
                    w[c] = if d == 0 { z[c] } else { rw * w[c] + vol_innov * z[c] };
                }
                w.iter().map(|&wc| (s * wc - s * s).exp()).collect()
            } else {
                vec![1.0; cells]
            };
            volatility.push(Field::from_values(grid, vol)?);
        }
        start = end;
    }
    Ok(TruthSeries {
        process: process.clone(),
        grid,
        anomalies,
        volatility,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub n_members: usize,
    pub beta: f64,
    pub leads: Vec<u32>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            n_members: DEFAULT_MEMBERS,
            beta: DEFAULT_BETA,
            leads: default_leads(),
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_members == 0 {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.leads.is_empty() || self.leads.contains(&0) {
            return Err(Error::invalid("leads must be a non-empty list of positive days"));
        }
        let mut sorted = self.leads.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.leads.len() {
            return Err(Error::invalid("leads must be unique"));
        }
        Ok(())
    }

    pub fn max_lead(&self) -> u32 {
        self.leads.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub issue_day: usize,
    pub lead: u32,
    pub members: Vec<Field>,
}

fn member_seed(seed: u64, day: usize, member: usize) -> u64 {
    derive_seed(seed, &[TAG_MEMBER, day as u64, member as u64])
}

fn check_issue_day(truth: &TruthSeries, day: usize, max_lead: u32) -> Result<()> {
    if day + max_lead as usize >= truth.len() {
        return Err(Error::invalid(format!(
            "issue day {day} + lead {max_lead} outside truth of {} days",
            truth.len()
        )));
    }
    Ok(())
}

/// Ensemble for issue day `day` at every configured lead.
pub fn forecast_ensemble(
    truth: &TruthSeries,
    day: usize,
    config: &ForecastConfig,
    seed: u64,
) -> Result<Vec<EnsembleForecast>> {
    config.validate()?;
    check_issue_day(truth, day, config.max_lead())?;
    let grid = truth.grid();
    let noise = UnitNoise::new(grid, &truth.process.spatial);
    let eps: Vec<Vec<f64>> = (0..config.n_members)
        .into_par_iter()
        .map(|i| noise.sample(member_seed(seed, day, i)))
        .collect();
    let x = truth.anomalies[day].values();
    config
        .leads
        .iter()
        .map(|&lead| {
            let decay = truth.rho().powi(lead as i32);
            let spread = truth.conditional_std(day, lead)?;
            let members = eps
                .iter()
                .map(|e| {
                    let v = (0..x.len())
                        .map(|c| decay * x[c] + config.beta * spread[c] * e[c])
                        .collect();
                    Field::from_values(grid, v)
                })
                .collect::<Result<_>>()?;
            Ok(EnsembleForecast {
                issue_day: day,
                lead,
                members,
            })
        })
        .collect()
}

/// Issue-day anomaly carried forward unchanged.
pub fn persistence_forecast(truth: &TruthSeries, day: usize, lead: u32) -> Result<Field> {
    if lead == 0 {
        return Err(Error::invalid("persistence lead must be >= 1"));
    }
    check_issue_day(truth, day, lead)?;
    Ok(truth.anomalies[day].clone())
}

/// Climatological mean in anomaly space.
pub fn climatology_forecast(grid: GridSpec) -> Field {
    Field::zeros(grid)
}

/// Per-day affine map from model anomalies to observed anomalies,
/// `obs = scale * x + offset`, laid out `[day][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMap {
    cells: usize,
    scale: Vec<f64>,
    offset: Vec<f64>,
}

impl ObservationMap {
    pub fn new(cells: usize, scale: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if cells == 0 || scale.len() != offset.len() || scale.len() % cells != 0 {
            return Err(Error::invalid("observation map shape mismatch"));
        }
        Ok(ObservationMap { cells, scale, offset })
    }

    pub fn days(&self) -> usize {
        self.scale.len() / self.cells
    }

    #[inline]
    fn apply(&self, day: usize, cell: usize, x: f64) -> f64 {
        let i = day * self.cells + cell;
        self.scale[i] * x + self.offset[i]
    }
}

/// Lazily assembles per-lead datasets over a block of issue days.
/// Member noise is drawn once and stored as `f32`.
pub struct SyntheticForecaster<'a> {
    truth: &'a TruthSeries,
    issue_days: Range<usize>,
    config: ForecastConfig,
    obs: Option<&'a ObservationMap>,
    eps: Vec<f32>,
}

impl<'a> SyntheticForecaster<'a> {
    pub fn new(
        truth: &'a TruthSeries,
        issue_days: Range<usize>,
        config: ForecastConfig,
        seed: u64,
        obs: Option<&'a ObservationMap>,
    ) -> Result<Self> {
        config.validate()?;
        if issue_days.is_empty() {
            return Err(Error::invalid("no issue days"));
        }
        check_issue_day(truth, issue_days.end - 1, config.max_lead())?;
        if let Some(m) = obs {
            if m.cells != truth.grid().cell_count() || m.days() < truth.len() {
                return Err(Error::invalid("observation map does not cover the truth series"));
            }
        }
        let noise = UnitNoise::new(truth.grid(), &truth.process.spatial);
        let n = config.n_members;
        let eps: Vec<f32> = issue_days
            .clone()
            .into_par_iter()
            .flat_map_iter(|d| {
                (0..n).flat_map(|i| noise.sample(member_seed(seed, d, i)).into_iter().map(|v| v as f32)).collect::<Vec<_>>()
            })
            .collect();
        Ok(SyntheticForecaster {
            truth,
            issue_days,
            config,
            obs,
            eps,
        })
    }

    pub fn config(&self) -> &ForecastConfig {
        &self.config
    }

    pub fn issue_days(&self) -> Range<usize> {
        self.issue_days.clone()
    }

    fn observe(&self, day: usize, cell: usize, x: f64) -> f64 {
        match self.obs {
            Some(m) => m.apply(day, cell, x),
            None => x,
        }
    }

    /// Observed truth anomalies, sample order `(issue day, cell)`, at `offset` days after issue.
    pub fn observed_truth(&self, offset: usize) -> Vec<f64> {
        let cells = self.truth.grid().cell_count();
        self.issue_days
            .clone()
            .flat_map(|d| {
                let t = d + offset;
                let x = self.truth.anomalies[t].values();
                (0..cells).map(move |c| self.observe(t, c, x[c]))
            })
            .collect()
    }
}

impl LeadSource for SyntheticForecaster<'_> {
    fn available_leads(&self) -> Vec<u32> {
        self.config.leads.clone()
    }

    fn lead_data(&self, lead: u32) -> Result<LeadData> {
        if !self.config.leads.contains(&lead) {
            return Err(Error::invalid(format!("no forecasts for lead {lead}")));
        }
        let cells = self.truth.grid().cell_count();
        let n = self.config.n_members;
        let decay = self.truth.rho().powi(lead as i32);
        let beta = self.config.beta;
        let first = self.issue_days.start;
        let per_day: Vec<Vec<f32>> = self
            .issue_days
            .clone()
            .into_par_iter()
            .map(|d| {
                let spread = self.truth.conditional_std(d, lead)?;
                let x = self.truth.anomalies[d].values();
                let t = d + lead as usize;
                let eps = &self.eps[(d - first) * n * cells..(d - first + 1) * n * cells];
                let mut out = Vec::with_capacity(cells * n);
                for c in 0..cells {
                    for i in 0..n {
                        let m = decay * x[c] + beta * spread[c] * f64::from(eps[i * cells + c]);
                        out.push(self.observe(t, c, m) as f32);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let anomalies: Vec<f32> = per_day.into_iter().flatten().collect();
        Ok(LeadData {
            ensembles: EnsembleSamples::new(n, anomalies)?,
            persistence: self.observed_truth(0),
            truth: self.observed_truth(lead as usize),
        })
    }
}
