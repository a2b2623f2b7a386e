//! Field files, report tables, ROC plots and run manifests.
//!
//! Field file layout, all little-endian:
//!
//! | offset | size            | content                              |
//! |--------|-----------------|--------------------------------------|
//! | 0      | 4               | magic `CSF1`                         |
//! | 4      | 4               | `u32` resolution N                   |
//! | 8      | 4               | `u32` time steps T                   |
//! | 12     | 4               | `u32` channels C                     |
//! | 16     | `4 T C 6 N N`   | `f32` values: time, channel, face, row-major within face |
//!
//! Optional metadata lives in a JSON sidecar next to the file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::climatology::{Climatology, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ExperimentResults};
use crate::field::Field;
use crate::grid::{knn_point_weights, GridSpec, LatLon};
use crate::metrics::RocCurve;
use crate::synth::{SyntheticForecaster, TruthProcess, TruthSeries};
use crate::tuner::{EnsembleSamples, ExponentialFit, LeadCurve, LeadData, LeadSource, SkillRow, SweepReport};

pub const FIELD_MAGIC: [u8; 4] = *b"CSF1";
pub const HEADER_LEN: u64 = 16;

/// `T x C` fields stored as `f32`, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    grid: GridSpec,
    steps: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FieldBlock {
    pub fn new(grid: GridSpec, steps: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let want = steps
            .checked_mul(channels)
            .and_then(|n| n.checked_mul(grid.cell_count()))
            .ok_or_else(|| Error::invalid("field block too large"))?;
        if data.len() != want {
            return Err(Error::invalid(format!(
                "{} values for {steps} steps x {channels} channels x {} cells",
                data.len(),
                grid.cell_count()
            )));
        }
        Ok(FieldBlock {
            grid,
            steps,
            channels,
            data,
        })
    }

    /// Packs `fields[t][c]`, narrowing to `f32`.
    pub fn from_fields(grid: GridSpec, fields: &[Vec<Field>]) -> Result<Self> {
        let channels = fields.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(fields.len() * channels * grid.cell_count());
        for row in fields {
            if row.len() != channels {
                return Err(Error::invalid("ragged channel count"));
            }
            for f in row {
                f.ensure_grid(grid)?;
                data.extend(f.values().iter().map(|&v| v as f32));
            }
        }
        Self::new(grid, fields.len(), channels, data)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn slice(&self, step: usize, channel: usize) -> &[f32] {
        let cells = self.grid.cell_count();
        let i = (step * self.channels + channel) * cells;
        &self.data[i..i + cells]
    }

    pub fn field(&self, step: usize, channel: usize) -> Result<Field> {
        if step >= self.steps || channel >= self.channels {
            return Err(Error::invalid(format!(
                "({step}, {channel}) outside {} steps x {} channels",
                self.steps, self.channels
            )));
        }
        Field::from_values(self.grid, self.slice(step, channel).iter().map(|&v| f64::from(v)).collect())
    }
}

pub fn encode_field_block(block: &FieldBlock) -> Result<Vec<u8>> {
    let header = [block.grid.resolution(), block.steps, block.channels]
        .iter()
        .map(|&v| u32::try_from(v).map_err(|_| Error::invalid(format!("header value {v} exceeds u32"))))
        .collect::<Result<Vec<u32>>>()?;
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * block.data.len());
    out.extend_from_slice(&FIELD_MAGIC);
    for h in header {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in &block.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_field_block(bytes: &[u8]) -> Result<FieldBlock> {
    if bytes.len() < 4 || bytes[..4] != FIELD_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected CSF1".into(),
        });
    }
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        });
    }
    let n = read_u32(bytes, 4) as usize;
    let steps = read_u32(bytes, 8) as u64;
    let channels = read_u32(bytes, 12) as u64;
    let grid = GridSpec::new(n).map_err(|e| Error::Format {
        offset: 4,
        message: e.to_string(),
    })?;
    let expected = steps
        .checked_mul(channels)
        .and_then(|v| v.checked_mul(grid.cell_count() as u64))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format {
            offset: 8,
            message: "header sizes overflow".into(),
        })?;
    let actual = bytes.len() as u64 - HEADER_LEN;
    if actual < expected {
        return Err(Error::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format {
            offset: HEADER_LEN + expected,
            message: format!("{} trailing bytes after payload", actual - expected),
        });
    }
    let data = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FieldBlock::new(grid, steps as usize, channels as usize, data)
}

/// `<path>.json`, e.g. `truth.csf.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_field_file<M: Serialize>(path: &Path, block: &FieldBlock, metadata: Option<&M>) -> Result<()> {
    let bytes = encode_field_block(block)?;
    fs::write(path, bytes)?;
    if let Some(m) = metadata {
        write_json(&sidecar_path(path), m)?;
    }
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_field_file(path: &Path) -> Result<FieldBlock> {
    decode_field_block(&read_bytes(path)?)
}

pub fn read_sidecar<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<M> {
    read_json(&sidecar_path(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    q: f64,
    p: f64,
    auc: f64,
}

pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for &(p, auc) in &report.auc_by_p {
        w.serialize(SweepRow { q: report.q, p, auc })?;
    }
    w.flush()?;
    Ok(())
}

/// `(q, p, auc)` rows as written by [`write_sweep_csv`].
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<SweepRow>()
        .map(|row| row.map(|x| (x.q, x.p, x.auc)).map_err(Error::from))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct LeadRow<'a> {
    method: &'a str,
    lead: u32,
    auc: f64,
}

pub fn write_lead_csv(path: &Path, curve: &LeadCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (m, lead, auc) in &curve.points {
        w.serialize(LeadRow {
            method: m.as_str(),
            lead: *lead,
            auc: *auc,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SkillCsvRow<'a> {
    method: &'a str,
    lead: u32,
    rmse: f64,
    crps: f64,
}

pub fn write_skill_csv(path: &Path, rows: &[SkillRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(SkillCsvRow {
            method: r.method.as_str(),
            lead: r.lead,
            rmse: r.rmse,
            crps: r.crps,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub q: f64,
    pub p_opt: f64,
    pub auc_opt: f64,
    pub auc_mean_pred: f64,
    pub ri_opt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_refined: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_refined: Option<f64>,
}

impl From<&SweepReport> for QuantileSummary {
    fn from(r: &SweepReport) -> Self {
        QuantileSummary {
            q: r.q,
            p_opt: r.p_opt,
            auc_opt: r.auc_opt,
            auc_mean_pred: r.auc_mean_pred,
            ri_opt: r.ri_opt,
            p_refined: None,
            auc_refined: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead: Option<u32>,
    pub quantiles: Vec<QuantileSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<ExponentialFit>,
}

impl Summary {
    pub fn from_results(r: &ExperimentResults) -> Self {
        let quantiles = r
            .sweeps
            .iter()
            .map(|s| {
                let mut q = QuantileSummary::from(s);
                if let Some(x) = r.refined.iter().find(|x| x.q == s.q) {
                    q.p_refined = Some(x.p);
                    q.auc_refined = Some(x.auc);
                }
                q
            })
            .collect();
        Summary {
            lead: Some(r.config.sweep_lead),
            quantiles,
            fit: r.fit,
        }
    }

    /// `(q, p)` pairs for an exponential fit, preferring refined exponents.
    pub fn p_opt_points(&self) -> Vec<(f64, f64)> {
        self.quantiles
            .iter()
            .map(|q| (q.q, q.p_refined.unwrap_or(q.p_opt)))
            .collect()
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        Ok(Manifest {
            tool: "heatpool".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Creates `dir` (and parents), failing if it already holds a manifest so
/// that earlier runs are never overwritten.
pub fn prepare_run_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if dir.join(MANIFEST_NAME).exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} already contains a run", dir.display()),
        )));
    }
    Ok(())
}

fn q_tag(q: f64) -> String {
    format!("q{q}")
}

/// Writes the full report bundle into a fresh directory; returns file names.
pub fn write_report_bundle(dir: &Path, results: &ExperimentResults) -> Result<Vec<String>> {
    prepare_run_dir(dir)?;
    let mut outputs = Vec::new();
    let mut emit = |name: String, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        f(&dir.join(&name))?;
        outputs.push(name);
        Ok(())
    };
    for s in &results.sweeps {
        emit(format!("sweep_{}.csv", q_tag(s.q)), &|p| write_sweep_csv(p, s))?;
    }
    emit("summary.json".into(), &|p| write_json(p, &Summary::from_results(results)))?;
    for c in &results.leads.curves {
        emit(format!("leads_{}.csv", q_tag(c.q)), &|p| write_lead_csv(p, c))?;
    }
    emit("skill.csv".into(), &|p| write_skill_csv(p, &results.leads.skill))?;
    for (q, curve) in &results.roc {
        emit(format!("roc_{}.svg", q_tag(*q)), &|p| render_roc_svg(curve, p))?;
    }
    let mut manifest = Manifest::new("report", Some(results.config.seed), &results.config)?;
    manifest.outputs = outputs.clone();
    write_json(&dir.join(MANIFEST_NAME), &manifest)?;
    outputs.push(MANIFEST_NAME.into());
    Ok(outputs)
}

/// Reads the configuration back from a bundle manifest.
pub fn replay_config(dir: &Path) -> Result<ExperimentConfig> {
    let m: Manifest = read_json(&dir.join(MANIFEST_NAME))?;
    let c: ExperimentConfig = serde_json::from_value(m.config)?;
    c.validate()?;
    Ok(c)
}

pub const SVG_SIZE: f64 = 400.0;
pub const SVG_MARGIN: f64 = 40.0;

/// Pixel position of an ROC point.
pub fn roc_to_pixel(fpr: f64, tpr: f64) -> (f64, f64) {
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    (SVG_MARGIN + span * fpr, SVG_SIZE - SVG_MARGIN - span * tpr)
}

/// Standalone SVG: unit-square axes, chance diagonal, ROC polyline and the
/// AUC to four decimals. Points closer than a quarter pixel are merged.
pub fn roc_svg(curve: &RocCurve) -> String {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let last = curve.points.len().saturating_sub(1);
    for (i, p) in curve.points.iter().enumerate() {
        let xy = roc_to_pixel(p.fpr, p.tpr);
        let keep = match pts.last() {
            None => true,
            Some(&(x, y)) => i == last || (xy.0 - x).hypot(xy.1 - y) >= 0.25,
        };
        if keep {
            pts.push(xy);
        }
    }
    let poly: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
    let (x0, y0) = roc_to_pixel(0.0, 0.0);
    let (x1, y1) = roc_to_pixel(1.0, 1.0);
    let span = x1 - x0;
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n",
            "  <rect x=\"{x0}\" y=\"{y1}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"black\"/>\n",
            "  <line id=\"diagonal\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
            "  <polyline id=\"roc\" fill=\"none\" stroke=\"crimson\" stroke-width=\"2\" points=\"{poly}\"/>\n",
            "  <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\">False positive rate</text>\n",
            "  <text x=\"12\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 12 {ly})\">True positive rate</text>\n",
            "  <text id=\"auc\" x=\"{ax}\" y=\"{ay}\" font-family=\"sans-serif\" font-size=\"14\">AUC = {auc:.4}</text>\n",
            "</svg>\n"
        ),
        s = SVG_SIZE,
        x0 = x0,
        y0 = y0,
        x1 = x1,
        y1 = y1,
        span = span,
        poly = poly.join(" "),
        tx = SVG_SIZE / 2.0 - 45.0,
        ty = SVG_SIZE - 10.0,
        ly = SVG_SIZE / 2.0 + 45.0,
        ax = x0 + span * 0.55,
        ay = y0 - span * 0.1,
        auc = curve.auc,
    )
}

pub fn render_roc_svg(curve: &RocCurve, path: &Path) -> Result<()> {
    fs::write(path, roc_svg(curve))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LatLonRow {
    lat: f64,
    lon: f64,
    value: f64,
}

/// Regrids scattered `lat,lon,value` rows onto `grid` by inverse-distance
/// weighting of the `k` nearest rows around each cell center.
pub fn import_latlon_csv(path: &Path, grid: GridSpec, k: usize) -> Result<Field> {
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for row in r.deserialize::<LatLonRow>() {
        let row = row?;
        if !row.value.is_finite() {
            return Err(Error::invalid(format!("non-finite value at ({}, {})", row.lat, row.lon)));
        }
        points.push(LatLon::new(row.lat, row.lon)?.to_vec());
        values.push(row.value);
    }
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("k = {k} with {} source points", points.len())));
    }
    let v = grid
        .center_vecs()
        .into_iter()
        .map(|c| knn_point_weights(&points, c, k).iter().map(|&(i, w)| w * values[i]).sum())
        .collect();
    Field::from_values(grid, v)
}

/// Sidecar of a truth file: channel 0 holds anomalies, channel 1 the
/// volatility multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMeta {
    pub resolution: usize,
    pub process: TruthProcess,
}

pub fn truth_block(truth: &TruthSeries) -> Result<FieldBlock> {
    let rows: Vec<Vec<Field>> = (0..truth.len())
        .map(|d| Ok(vec![truth.field(d)?.clone(), truth.volatility(d)?.clone()]))
        .collect::<Result<_>>()?;
    FieldBlock::from_fields(truth.grid(), &rows)
}

/// Rebuilds a truth series from a truth file and its sidecar.
pub fn truth_from_block(block: &FieldBlock, meta: &TruthMeta) -> Result<TruthSeries> {
    if block.channels() != 2 || block.grid().resolution() != meta.resolution {
        return Err(Error::invalid("truth file needs 2 channels at the sidecar resolution"));
    }
    let anomalies = (0..block.steps()).map(|t| block.field(t, 0)).collect::<Result<_>>()?;
    let volatility = (0..block.steps()).map(|t| block.field(t, 1)).collect::<Result<_>>()?;
    TruthSeries::from_parts(meta.process.clone(), anomalies, volatility)
}

/// Sidecar of a forecast file: step `k * leads.len() + j` holds issue day
/// `issue_start + k` at lead `leads[j]`, one channel per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMeta {
    pub resolution: usize,
    pub issue_start: usize,
    pub issue_count: usize,
    pub leads: Vec<u32>,
    pub n_members: usize,
    pub beta: f64,
    pub rho: f64,
    pub seed: u64,
}

/// Lays out every lead of `source` in forecast-file order.
pub fn forecast_block(forecaster: &SyntheticForecaster<'_>, grid: GridSpec) -> Result<FieldBlock> {
    let leads = forecaster.available_leads();
    let n = forecaster.config().n_members;
    let days = forecaster.issue_days().len();
    let cells = grid.cell_count();
    let mut data = vec![0f32; days * leads.len() * n * cells];
    for (j, &lead) in leads.iter().enumerate() {
        let d = forecaster.lead_data(lead)?;
        for k in 0..days {
            let step = k * leads.len() + j;
            for c in 0..cells {
                for (i, &v) in d.ensembles.sample(k * cells + c).iter().enumerate() {
                    data[(step * n + i) * cells + c] = v;
                }
            }
        }
    }
    FieldBlock::new(grid, days * leads.len(), n, data)
}

/// Lead data read back from a forecast file and the truth anomalies.
pub struct FileLeadSource<'a> {
    forecast: &'a FieldBlock,
    meta: &'a ForecastMeta,
    truth: &'a FieldBlock,
}

impl<'a> FileLeadSource<'a> {
    pub fn new(forecast: &'a FieldBlock, meta: &'a ForecastMeta, truth: &'a FieldBlock) -> Result<Self> {
        if forecast.grid() != truth.grid() || forecast.grid().resolution() != meta.resolution {
            return Err(Error::invalid("forecast and truth grids differ"));
        }
        if forecast.steps() != meta.issue_count * meta.leads.len() || forecast.channels() != meta.n_members {
            return Err(Error::invalid("forecast file shape disagrees with its sidecar"));
        }
        let max_lead = meta.leads.iter().copied().max().unwrap_or(0) as usize;
        if meta.issue_start + meta.issue_count + max_lead > truth.steps() {
            return Err(Error::invalid("truth file does not cover the forecast verification days"));
        }
        Ok(FileLeadSource { forecast, meta, truth })
    }

    fn truth_at(&self, day: usize) -> &[f32] {
        self.truth.slice(day, 0)
    }
}

impl LeadSource for FileLeadSource<'_> {
    fn available_leads(&self) -> Vec<u32> {
        self.meta.leads.clone()
    }

    fn lead_data(&self, lead: u32) -> Result<LeadData> {
        let j = self
            .meta
            .leads
            .iter()
            .position(|&l| l == lead)
            .ok_or_else(|| Error::invalid(format!("no forecasts for lead {lead}")))?;
        let cells = self.forecast.grid().cell_count();
        let n = self.meta.n_members;
        let mut anomalies = Vec::with_capacity(self.meta.issue_count * cells * n);
        let mut persistence = Vec::with_capacity(self.meta.issue_count * cells);
        let mut truth = Vec::with_capacity(self.meta.issue_count * cells);
        for k in 0..self.meta.issue_count {
            let step = k * self.meta.leads.len() + j;
            let members: Vec<&[f32]> = (0..n).map(|i| self.forecast.slice(step, i)).collect();
            let day = self.meta.issue_start + k;
            for c in 0..cells {
                anomalies.extend(members.iter().map(|m| m[c]));
            }
            persistence.extend(self.truth_at(day).iter().map(|&v| f64::from(v)));
            truth.extend(self.truth_at(day + lead as usize).iter().map(|&v| f64::from(v)));
        }
        Ok(LeadData {
            ensembles: EnsembleSamples::new(n, anomalies)?,
            persistence,
            truth,
        })
    }
}

/// Sidecar of a dated single-channel series, e.g. temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub resolution: usize,
    pub start: NaiveDate,
}

/// Sidecar of a climatology file: step = day of year, channels (mean, std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimMeta {
    pub resolution: usize,
    pub window_days: usize,
    pub source_years: (i32, i32),
}

pub fn climatology_block(clim: &Climatology) -> Result<(FieldBlock, ClimMeta)> {
    let cells = clim.grid().cell_count();
    let mut data = Vec::with_capacity(DAYS_PER_YEAR * 2 * cells);
    for doy in 0..DAYS_PER_YEAR {
        data.extend(clim.mean_slice(doy).iter().map(|&v| v as f32));
        data.extend(clim.std_slice(doy).iter().map(|&v| v as f32));
    }
    let meta = ClimMeta {
        resolution: clim.grid().resolution(),
        window_days: clim.window_days(),
        source_years: clim.source_years(),
    };
    Ok((FieldBlock::new(clim.grid(), DAYS_PER_YEAR, 2, data)?, meta))
}

pub fn climatology_from_block(block: &FieldBlock, meta: &ClimMeta) -> Result<Climatology> {
    if block.steps() != DAYS_PER_YEAR || block.channels() != 2 || block.grid().resolution() != meta.resolution {
        return Err(Error::invalid(format!(
            "climatology file needs {DAYS_PER_YEAR} steps x 2 channels at the sidecar resolution"
        )));
    }
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for doy in 0..DAYS_PER_YEAR {
        mean.extend(block.slice(doy, 0).iter().map(|&v| f64::from(v)));
        std.extend(block.slice(doy, 1).iter().map(|&v| f64::from(v)));
    }
    Climatology::from_parts(block.grid(), meta.window_days, meta.source_years, mean, std)
}
