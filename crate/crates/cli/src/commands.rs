use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Days, NaiveDate};
use clap::Args;
use serde::Serialize;

use heatpool::climatology::{fit_climatology, label_extreme, standardize, DEFAULT_WINDOW_DAYS};
use heatpool::experiment::{run_experiment, ExperimentConfig, SeasonalCycle};
use heatpool::io::{
    climatology_block, climatology_from_block, forecast_block, prepare_run_dir, read_field_file, read_json,
    read_sidecar, render_roc_svg, truth_block, truth_from_block, write_field_file, write_json,
    write_lead_csv, write_report_bundle, write_roc_csv, write_skill_csv, write_sweep_csv, ClimMeta, FieldBlock,
    FileLeadSource, ForecastMeta, Manifest, QuantileSummary, SeriesMeta, Summary, TruthMeta, MANIFEST_NAME,
};
use heatpool::metrics::RankedScores;
use heatpool::noise::FractalSpec;
use heatpool::synth::{
    self, ForecastConfig, SyntheticForecaster, TruthProcess, Volatility, DEFAULT_BETA, DEFAULT_MEMBERS,
    DEFAULT_RHO, DEFAULT_VOLATILITY, DEFAULT_VOLATILITY_PERSISTENCE,
};
use heatpool::tuner::{
    evaluate_lead_table, exceedance_labels, fit_exponential, refine_p_opt, sweep_label_sets, LeadSource,
    PreparedEnsembles, SweepGrid, DEFAULT_P_COUNT, DEFAULT_P_MAX, DEFAULT_SWEEP_LEAD,
};
use heatpool::{Error, Field, GridSpec};

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn report(&self) -> ExitCode {
        let line = self.message.replace('\n', " ");
        eprintln!("heatpool: error: {line}");
        ExitCode::from(self.code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::io(e.to_string())
        } else {
            Failure::usage(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

/// A run manifest stands in for its own configuration.
pub fn unwrap_manifest(value: serde_json::Value) -> serde_json::Value {
    match value {
        serde_json::Value::Object(mut m) if m.contains_key("tool") && m.contains_key("config") => {
            m.remove("config").unwrap_or_default()
        }
        other => other,
    }
}

fn fresh(path: &Path) -> CmdResult {
    if path.exists() {
        return Err(Failure::io(format!("refusing to overwrite {}", path.display())));
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn display(paths: &[&Path]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn write_manifest<C: Serialize>(
    path: &Path,
    command: &str,
    seed: Option<u64>,
    args: &C,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CmdResult {
    let mut m = Manifest::new(command, seed, args)?;
    m.inputs = display(inputs);
    m.outputs = display(outputs);
    write_json(path, &m)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct GenTruthArgs {
    /// Output truth file (anomaly and volatility channels).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub resolution: usize,
    #[arg(long, default_value_t = 4012)]
    pub days: usize,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Log-volatility strength; 0 gives a plain AR(1) process.
    #[arg(long, default_value_t = DEFAULT_VOLATILITY)]
    pub volatility: f64,
    #[arg(long, default_value_t = DEFAULT_VOLATILITY_PERSISTENCE)]
    pub volatility_persistence: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "2000-01-01")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 4)]
    pub base_frequency: usize,
    #[arg(long, default_value_t = 3)]
    pub octaves: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_ln: f64,
    /// Also write synthetic seasonal temperatures to this file.
    #[arg(long)]
    pub temperatures: Option<PathBuf>,
}

pub fn gen_truth(a: GenTruthArgs) -> CmdResult {
    fresh(&a.out)?;
    if let Some(t) = &a.temperatures {
        fresh(t)?;
    }
    let grid = GridSpec::new(a.resolution)?;
    let process = TruthProcess {
        rho: a.rho,
        spatial: FractalSpec::standard(a.base_frequency, a.octaves, a.sigma_ln)?,
        seed: a.seed,
        days: a.days,
        volatility: Volatility {
            strength: a.volatility,
            persistence: a.volatility_persistence,
        },
        start: a.start,
    };
    let truth = synth::gen_truth(grid, &process)?;
    let meta = TruthMeta {
        resolution: a.resolution,
        process,
    };
    write_field_file(&a.out, &truth_block(&truth)?, Some(&meta))?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(t) = &a.temperatures {
        let centers: Vec<_> = grid.center_vecs().into_iter().map(heatpool::LatLon::from_vec).collect();
        let rows: Vec<Vec<Field>> = (0..truth.len())
            .map(|d| vec![SeasonalCycle.temperature(&truth.fields()[d], truth.date(d), &centers)])
            .collect();
        let block = FieldBlock::from_fields(grid, &rows)?;
        let meta = SeriesMeta {
            resolution: a.resolution,
            start: a.start,
        };
        write_field_file(t, &block, Some(&meta))?;
        outputs.push(t);
    }
    write_manifest(&manifest_path(&a.out), "gen-truth", Some(a.seed), &a, &[], &outputs)
}

fn default_leads_arg() -> Vec<u32> {
    heatpool::synth::default_leads()
}

#[derive(Debug, Args, Serialize)]
pub struct GenForecastArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MEMBERS)]
    pub members: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, value_delimiter = ',', default_values_t = default_leads_arg())]
    pub leads: Vec<u32>,
    /// First issue day (index into the truth series).
    #[arg(long)]
    pub issue_start: usize,
    #[arg(long)]
    pub issue_count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub fn gen_forecast(a: GenForecastArgs) -> CmdResult {
    fresh(&a.out)?;
    let block = read_field_file(&a.truth)?;
    let meta: TruthMeta = read_sidecar(&a.truth)?;
    let truth = truth_from_block(&block, &meta)?;
    let config = ForecastConfig {
        n_members: a.members,
        beta: a.beta,
        leads: a.leads.clone(),
    };
    let forecaster = SyntheticForecaster::new(&truth, a.issue_start..a.issue_start + a.issue_count, config, a.seed, None)?;
    let out = forecast_block(&forecaster, truth.grid())?;
    let fmeta = ForecastMeta {
        resolution: meta.resolution,
        issue_start: a.issue_start,
        issue_count: a.issue_count,
        leads: a.leads.clone(),
        n_members: a.members,
        beta: a.beta,
        rho: truth.rho(),
        seed: a.seed,
    };
    write_field_file(&a.out, &out, Some(&fmeta))?;
    write_manifest(&manifest_path(&a.out), "gen-forecast", Some(a.seed), &a, &[&a.truth], &[&a.out])
}

fn dated_series(block: &FieldBlock, meta: &SeriesMeta, steps: usize) -> Result<Vec<(NaiveDate, Field)>, Failure> {
    (0..steps)
        .map(|t| Ok((meta.start + Days::new(t as u64), block.field(t, 0)?)))
        .collect()
}

#[derive(Debug, Args, Serialize)]
pub struct FitClimArgs {
    /// Single-channel temperature file with a dated sidecar.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
    pub window: usize,
    /// Use only the first N days (default: all).
    #[arg(long)]
    pub train_days: Option<usize>,
}

pub fn fit_clim(a: FitClimArgs) -> CmdResult {
    fresh(&a.out)?;
    let block = read_field_file(&a.input)?;
    let meta: SeriesMeta = read_sidecar(&a.input)?;
    if block.channels() != 1 {
        return Err(Failure::usage("temperature file must have exactly one channel"));
    }
    let steps = a.train_days.unwrap_or(block.steps());
    if steps > block.steps() {
        return Err(Failure::usage(format!("{steps} training days requested, file has {}", block.steps())));
    }
    let clim = fit_climatology(&dated_series(&block, &meta, steps)?, a.window)?;
    let (out, cmeta) = climatology_block(&clim)?;
    write_field_file(&a.out, &out, Some(&cmeta))?;
    write_manifest(&manifest_path(&a.out), "fit-clim", None, &a, &[&a.input], &[&a.out])
}

#[derive(Debug, Args, Serialize)]
pub struct LabelArgs {
    /// Anomaly file (channel 0), or temperatures when `--clim` is given.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub clim: Option<PathBuf>,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct LabelMeta {
    resolution: usize,
    q: f64,
    threshold: f64,
    positives: usize,
    total: usize,
}

pub fn label(a: LabelArgs) -> CmdResult {
    fresh(&a.out)?;
    let block = read_field_file(&a.input)?;
    let anomalies: Vec<Field> = match &a.clim {
        Some(path) => {
            let cmeta: ClimMeta = read_sidecar(path)?;
            let clim = climatology_from_block(&read_field_file(path)?, &cmeta)?;
            let smeta: SeriesMeta = read_sidecar(&a.input)?;
            dated_series(&block, &smeta, block.steps())?
                .iter()
                .map(|(d, f)| standardize(f, *d, &clim))
                .collect::<Result<_, _>>()?
        }
        None => (0..block.steps()).map(|t| block.field(t, 0)).collect::<Result<_, _>>()?,
    };
    let mut rows = Vec::with_capacity(anomalies.len());
    let mut positives = 0;
    for f in &anomalies {
        let l = label_extreme(f, a.q)?;
        positives += l.positives();
        let v = l.labels().iter().map(|&y| f64::from(y)).collect();
        rows.push(vec![Field::from_values(block.grid(), v)?]);
    }
    let meta = LabelMeta {
        resolution: block.grid().resolution(),
        q: a.q,
        threshold: heatpool::climatology::exceedance_threshold(a.q)?,
        positives,
        total: anomalies.len() * block.grid().cell_count(),
    };
    write_field_file(&a.out, &FieldBlock::from_fields(block.grid(), &rows)?, Some(&meta))?;
    let mut inputs = vec![a.input.as_path()];
    if let Some(c) = &a.clim {
        inputs.push(c);
    }
    write_manifest(&manifest_path(&a.out), "label", None, &a, &inputs, &[&a.out])
}

fn default_quantiles() -> Vec<f64> {
    heatpool::tuner::DEFAULT_QUANTILES.to_vec()
}

struct Loaded {
    forecast: FieldBlock,
    meta: ForecastMeta,
    truth: FieldBlock,
}

impl Loaded {
    fn read(forecast: &Path, truth: &Path) -> Result<Self, Failure> {
        Ok(Loaded {
            forecast: read_field_file(forecast)?,
            meta: read_sidecar(forecast)?,
            truth: read_field_file(truth)?,
        })
    }

    fn source(&self) -> Result<FileLeadSource<'_>, Failure> {
        Ok(FileLeadSource::new(&self.forecast, &self.meta, &self.truth)?)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub forecast: PathBuf,
    /// Truth file whose channel 0 holds the verifying anomalies.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = default_quantiles())]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SWEEP_LEAD)]
    pub lead: u32,
    /// Explicit exponents; overrides `--p-max` and `--p-count`.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_P_MAX)]
    pub p_max: f64,
    #[arg(long, default_value_t = DEFAULT_P_COUNT)]
    pub p_count: usize,
    /// Golden-section refinement around each grid optimum.
    #[arg(long)]
    pub refine: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sweep_p(a: SweepArgs) -> CmdResult {
    let grid = match &a.p {
        Some(p) => SweepGrid::new(p.clone())?,
        None => SweepGrid::log_spaced(a.p_max, a.p_count)?,
    };
    let loaded = Loaded::read(&a.forecast, &a.truth)?;
    let data = loaded.source()?.lead_data(a.lead)?;
    let prepared = PreparedEnsembles::new(&data.ensembles);
    let labels: Vec<Vec<bool>> = a
        .q
        .iter()
        .map(|&q| exceedance_labels(&data.truth, q))
        .collect::<Result<_, _>>()?;
    let sets: Vec<(f64, &[bool])> = a.q.iter().copied().zip(labels.iter().map(Vec::as_slice)).collect();
    let reports = sweep_label_sets(&prepared, &sets, &grid)?;
    let mut summary = Summary {
        lead: Some(a.lead),
        quantiles: reports.iter().map(QuantileSummary::from).collect(),
        fit: None,
    };
    if a.refine {
        for ((r, y), s) in reports.iter().zip(&labels).zip(summary.quantiles.iter_mut()) {
            let (p, auc) = refine_p_opt(&prepared, y, r, 24)?;
            s.p_refined = Some(p);
            s.auc_refined = Some(auc);
        }
    }
    summary.fit = fit_exponential(&summary.p_opt_points()).ok();

    prepare_run_dir(&a.out)?;
    let mut outputs = Vec::new();
    for r in &reports {
        let p = a.out.join(format!("sweep_q{}.csv", r.q));
        write_sweep_csv(&p, r)?;
        outputs.push(p);
    }
    let sp = a.out.join("summary.json");
    write_json(&sp, &summary)?;
    outputs.push(sp);
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&a.out.join(MANIFEST_NAME), "sweep-p", None, &a, &[&a.forecast, &a.truth], &outs)
}

#[derive(Debug, Args, Serialize)]
pub struct FitExponentArgs {
    /// Summary JSON written by `sweep-p` or `report`.
    #[arg(long)]
    pub summary: PathBuf,
    /// Output fit JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn fit_exponent(a: FitExponentArgs) -> CmdResult {
    fresh(&a.out)?;
    let summary: Summary = read_json(&a.summary)?;
    let fit = fit_exponential(&summary.p_opt_points())?;
    write_json(&a.out, &fit)?;
    write_manifest(&manifest_path(&a.out), "fit-exponent", None, &a, &[&a.summary], &[&a.out])
}

#[derive(Debug, Args, Serialize)]
pub struct EvalLeadsArgs {
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    /// Exponent per quantile; otherwise taken from `--summary`.
    #[arg(long, value_delimiter = ',', conflicts_with = "summary")]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Leads to evaluate (default: all in the forecast file).
    #[arg(long, value_delimiter = ',')]
    pub leads: Option<Vec<u32>>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval_leads(a: EvalLeadsArgs) -> CmdResult {
    let ps: Vec<f64> = match (&a.p, &a.summary) {
        (Some(p), _) => p.clone(),
        (None, Some(path)) => {
            let s: Summary = read_json(path)?;
            let points = s.p_opt_points();
            a.q.iter()
                .map(|&q| {
                    points
                        .iter()
                        .find(|(x, _)| *x == q)
                        .map(|&(_, p)| p)
                        .ok_or_else(|| Failure::usage(format!("summary has no p_opt for q = {q}")))
                })
                .collect::<Result<_, _>>()?
        }
        (None, None) => return Err(Failure::usage("either --p or --summary is required")),
    };
    if ps.len() != a.q.len() {
        return Err(Failure::usage(format!("{} exponents for {} quantiles", ps.len(), a.q.len())));
    }
    let targets: Vec<(f64, f64)> = a.q.iter().copied().zip(ps).collect();
    let loaded = Loaded::read(&a.forecast, &a.truth)?;
    let source = loaded.source()?;
    let leads = a.leads.clone().unwrap_or_else(|| source.available_leads());
    let table = evaluate_lead_table(&source, &targets, &leads)?;

    prepare_run_dir(&a.out)?;
    let mut outputs = Vec::new();
    for c in &table.curves {
        let p = a.out.join(format!("leads_q{}.csv", c.q));
        write_lead_csv(&p, c)?;
        outputs.push(p);
    }
    let sp = a.out.join("skill.csv");
    write_skill_csv(&sp, &table.skill)?;
    outputs.push(sp);
    let mut inputs = vec![a.forecast.as_path(), a.truth.as_path()];
    if let Some(s) = &a.summary {
        inputs.push(s);
    }
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&a.out.join(MANIFEST_NAME), "eval-leads", None, &a, &inputs, &outs)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output run directory; must not already hold a run.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub train_days: Option<usize>,
    #[arg(long)]
    pub validation_days: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub volatility: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub leads: Option<Vec<u32>>,
    #[arg(long)]
    pub sweep_lead: Option<u32>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub p_count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub refine: bool,
    /// Skip the ROC plots.
    #[arg(long)]
    pub no_roc: bool,
}

pub fn report(a: ReportArgs, config: Option<&Path>) -> CmdResult {
    let mut c: ExperimentConfig = match config {
        Some(p) => {
            let v: serde_json::Value = read_json(p)?;
            serde_json::from_value(unwrap_manifest(v)).map_err(|e| Failure::usage(format!("bad config: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($arg:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = a.$arg.clone() { $field = v; })*
        };
    }
    set! {
        seed => c.seed,
        resolution => c.resolution,
        train_days => c.train_days,
        validation_days => c.validation_days,
        rho => c.rho,
        beta => c.beta,
        members => c.n_members,
        volatility => c.volatility.strength,
        q => c.quantiles,
        leads => c.leads,
        sweep_lead => c.sweep_lead,
        p_max => c.p_grid.max,
        p_count => c.p_grid.count,
        window => c.window_days,
    }
    if a.p.is_some() {
        c.p_grid.values = a.p.clone();
    }
    c.refine |= a.refine;
    c.roc_svg &= !a.no_roc;
    c.validate()?;
    if a.out.join(MANIFEST_NAME).exists() {
        return Err(Failure::io(format!("{} already contains a run", a.out.display())));
    }
    let results = run_experiment(&c)?;
    write_report_bundle(&a.out, &results)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct RocSvgArgs {
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = DEFAULT_SWEEP_LEAD)]
    pub lead: u32,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the curve as CSV (threshold, fpr, tpr).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn roc_svg(a: RocSvgArgs) -> CmdResult {
    fresh(&a.out)?;
    if let Some(c) = &a.csv {
        fresh(c)?;
    }
    if !(a.p >= 1.0) {
        return Err(Failure::usage(format!("power exponent must be >= 1, got {}", a.p)));
    }
    let loaded = Loaded::read(&a.forecast, &a.truth)?;
    let data = loaded.source()?.lead_data(a.lead)?;
    let labels = exceedance_labels(&data.truth, a.q)?;
    let scores = PreparedEnsembles::new(&data.ensembles).power_mean_scores(a.p);
    let curve = RankedScores::new(&scores)?.roc_curve(&labels)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(e.to_string()))?;
    }
    render_roc_svg(&curve, &a.out)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(c) = &a.csv {
        write_roc_csv(c, &curve)?;
        outputs.push(c);
    }
    write_manifest(&manifest_path(&a.out), "roc-svg", None, &a, &[&a.forecast, &a.truth], &outputs)
}
