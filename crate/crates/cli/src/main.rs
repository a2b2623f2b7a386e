//! `heatpool` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::{
    EvalLeadsArgs, FitClimArgs, FitExponentArgs, GenForecastArgs, GenTruthArgs, LabelArgs, ReportArgs, RocSvgArgs,
    SweepArgs,
};

#[derive(Debug, Parser)]
#[command(name = "heatpool", version, about = "Extreme-heat pooling of ensemble forecasts on a cube-sphere")]
struct Cli {
    /// JSON file of flag values (keys are flag names); explicit flags win.
    /// For `report` it is an experiment configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic truth anomaly series.
    GenTruth(GenTruthArgs),
    /// Generate ensemble forecasts from a truth file.
    GenForecast(GenForecastArgs),
    /// Fit a day-of-year climatology to a temperature file.
    FitClim(FitClimArgs),
    /// Label exceedances of a quantile threshold.
    Label(LabelArgs),
    /// Sweep the power exponent and locate p_opt per quantile.
    SweepP(SweepArgs),
    /// Fit ln(p_opt) = a q + b to a sweep summary.
    FitExponent(FitExponentArgs),
    /// AUC and skill per lead with fixed exponents.
    EvalLeads(EvalLeadsArgs),
    /// Run the full synthetic experiment and write a report bundle.
    Report(ReportArgs),
    /// Render the ROC curve of one quantile and lead as SVG.
    RocSvg(RocSvgArgs),
}

const SUBCOMMANDS: [&str; 9] = [
    "gen-truth",
    "gen-forecast",
    "fit-clim",
    "label",
    "sweep-p",
    "fit-exponent",
    "eval-leads",
    "report",
    "roc-svg",
];

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Turns a flat JSON object into `--flag value` tokens.
fn config_tokens(value: &serde_json::Value) -> Result<Vec<OsString>, String> {
    let obj = value.as_object().ok_or("config must be a JSON object")?;
    let mut out = Vec::new();
    for (k, v) in obj {
        let flag = format!("--{}", k.replace('_', "-"));
        let text = match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => continue,
            serde_json::Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => return Err(format!("config key {k}: nested objects are not flags")),
        };
        out.push(flag.into());
        out.push(text.into());
    }
    Ok(out)
}

/// Splices config-file flags in front of the explicit subcommand flags.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, commands::Failure> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    if args[pos] == "report" {
        return Ok(args);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| commands::Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| commands::Failure::usage(format!("bad config {}: {e}", path.display())))?;
    let tokens = config_tokens(&commands::unwrap_manifest(value)).map_err(commands::Failure::usage)?;
    args.splice(pos + 1..pos + 1, tokens);
    Ok(args)
}

fn parse(args: Vec<OsString>) -> Result<Cli, ExitCode> {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(f) => return Err(f.report()),
    };
    let matches = Cli::command().args_override_self(true).try_get_matches_from(args);
    let parsed = matches.and_then(|m| Cli::from_arg_matches(&m));
    match parsed {
        Ok(cli) => Ok(cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            Err(ExitCode::SUCCESS)
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            let line = line.strip_prefix("error: ").unwrap_or(line);
            Err(commands::Failure::usage(line.to_string()).report())
        }
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return commands::Failure::usage(format!("cannot start {n} threads: {e}")).report();
        }
    }
    let result = match cli.command {
        Command::GenTruth(a) => commands::gen_truth(a),
        Command::GenForecast(a) => commands::gen_forecast(a),
        Command::FitClim(a) => commands::fit_clim(a),
        Command::Label(a) => commands::label(a),
        Command::SweepP(a) => commands::sweep_p(a),
        Command::FitExponent(a) => commands::fit_exponent(a),
        Command::EvalLeads(a) => commands::eval_leads(a),
        Command::Report(a) => commands::report(a, cli.config.as_deref()),
        Command::RocSvg(a) => commands::roc_svg(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_tokens_follow_flag_syntax() {
        let v = serde_json::json!({"p_max": 100, "q": [0.8, 0.9], "refine": true, "skip": false, "out": "x"});
        let t: Vec<String> = config_tokens(&v)
            .unwrap()
            .into_iter()
            .map(|s| s.into_string().unwrap())
            .collect();
        assert_eq!(t, ["--out", "x", "--p-max", "100", "--q", "0.8,0.9", "--refine"]);
        assert!(config_tokens(&serde_json::json!([1])).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
        let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
        assert_eq!(names, SUBCOMMANDS);
    }
}
