use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gtg_core::estimators::{EstimatorReport, EstimatorSpec};
use gtg_core::experiment::{ExperimentConfig, Simulation};
use gtg_core::fl::{load_log, save_log, sidecar_path, LogSidecar};
use gtg_core::metrics::{build_report, format_table, merge_reports, ComparisonRow, ReportDocument, ReportMetadata};
use gtg_core::seed;

use crate::{Cli, Command};

const DEFAULT_OUT_DIR: &str = "gtg-out";

#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration; exit code 1.
    Usage(String),
    /// The work itself failed (I/O, corrupt input, numerical failure); exit code 2.
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<gtg_core::Error> for Failure {
    fn from(e: gtg_core::Error) -> Self {
        use gtg_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::Capacity { .. } | E::InsufficientPool(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

struct Printer {
    quiet: bool,
}

impl Printer {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let out = Printer { quiet: cli.quiet };
    match &cli.command {
        Command::Simulate { config, out: dir } => simulate(cli, &out, config, dir.as_deref()),
        Command::Evaluate {
            log,
            estimator,
            params,
            out: dir,
        } => evaluate(cli, &out, log, estimator, params.as_deref(), dir.as_deref()),
        Command::Compare { config, out: dir } => compare(cli, &out, config, dir.as_deref()),
        Command::Report { paths } => report(cli, paths),
    }
}

/// Reads and validates a config, applying `--seed`. Parse errors keep the
/// TOML parser's line and field context.
pub fn load_config(path: &Path, seed_override: Option<u64>) -> Outcome<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn to_toml<T: serde::Serialize>(value: &T) -> Outcome<String> {
    toml::to_string_pretty(value).map_err(|e| Failure::Usage(format!("cannot express config as TOML: {e}")))
}

fn out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn simulate(cli: &Cli, out: &Printer, config: &Path, dir: Option<&Path>) -> Outcome {
    let cfg = load_config(config, cli.seed)?;
    if cli.print_config {
        print!("{}", to_toml(&cfg)?);
        return Ok(());
    }
    let dir = out_dir(dir, &cfg);
    let sim = Simulation::run(&cfg)?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let log_path = dir.join(format!("{}.gtgl", cfg.scenario_id()));
    save_log(&sim.log, &log_path)?;
    let side = sidecar_path(&log_path);
    let mut json = serde_json::to_string_pretty(&sim.sidecar()?).map_err(|e| Failure::Runtime(e.to_string()))?;
    json.push('\n');
    fs::write(&side, json).map_err(|e| io_err(&side, e))?;
    out.say(format!("{}\tfinal accuracy {:.4}", log_path.display(), sim.final_accuracy));
    Ok(())
}

/// Estimator spec from a name plus an optional TOML parameter table.
pub fn estimator_spec(name: &str, params: Option<&Path>) -> Outcome<EstimatorSpec> {
    let default = EstimatorSpec::by_name(name)?;
    let Some(path) = params else {
        return Ok(default);
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if matches!(default, EstimatorSpec::Mr | EstimatorSpec::Original) && !table.is_empty() {
        return Err(Failure::Usage(format!("estimator `{name}` takes no parameters")));
    }
    table.insert("name".into(), toml::Value::String(name.into()));
    table
        .try_into()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_sidecar(log_path: &Path) -> Outcome<LogSidecar> {
    let path = sidecar_path(log_path);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&path, e))
}

fn evaluate(
    cli: &Cli,
    out: &Printer,
    log_path: &Path,
    name: &str,
    params: Option<&Path>,
    dir: Option<&Path>,
) -> Outcome {
    let mut spec = estimator_spec(name, params)?;
    if cli.print_config {
        print!("{}", to_toml(&spec)?);
        return Ok(());
    }
    let log = load_log(log_path)?;
    log.validate()?;
    let sidecar = read_sidecar(log_path)?;
    let cfg: ExperimentConfig = serde_json::from_value(sidecar.config)
        .map_err(|e| Failure::Runtime(format!("sidecar config: {e}")))?;
    if cfg.scenario.n != log.participants() || cfg.rounds != log.total_rounds() {
        return Err(Failure::Runtime("sidecar config does not describe this log".into()));
    }
    spec.validate(log.participants())?;
    let master = cli.seed.unwrap_or(cfg.seed);
    spec.seed_with(seed::derive(master, &format!("estimator/{}", spec.name())));

    let (participants, test) = cfg.materialize()?;
    let report = spec.run(&log, &test, Some(cfg.retraining(&participants, &test)))?;

    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| log_path.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let stem = log_path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
    let path = dir.join(format!("{stem}.{}.json", spec.name()));
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;

    out.say(format!("{}\t{}", report.estimator, path.display()));
    out.say(format!("total\t{}", fmt_values(&report.total.values)));
    out.say(format!("eval_count\t{}", report.eval_count));
    let converged = report.converged_rounds.iter().filter(|&&c| c).count();
    out.say(format!("converged_rounds\t{converged}/{}", report.converged_rounds.len()));
    Ok(())
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

fn compare(cli: &Cli, out: &Printer, config: &Path, dir: Option<&Path>) -> Outcome {
    let cfg = load_config(config, cli.seed)?;
    cfg.validate_for_compare()?;
    if cli.print_config {
        print!("{}", to_toml(&cfg)?);
        return Ok(());
    }
    let dir = out_dir(dir, &cfg);
    let sim = Simulation::run(&cfg)?;

    let mut reference = cfg.reference.estimator();
    reference.seed_with(seed::derive(cfg.seed, "reference"));
    let truth = reference.run(&sim.log, &sim.test, Some(sim.retraining()))?;

    let mut rows = Vec::new();
    let mut estimates: Vec<EstimatorReport> = Vec::new();
    for spec in cfg.seeded_estimators() {
        let report = spec.run(&sim.log, &sim.test, Some(sim.retraining()))?;
        rows.push(ComparisonRow::compare(&truth.total.values, &report)?);
        estimates.push(report);
    }
    estimates.insert(0, truth);

    let seeds = BTreeMap::from([
        ("master".to_string(), cfg.seed),
        ("init".to_string(), cfg.init_seed()),
        ("partition".to_string(), cfg.scenario_spec().seed),
        ("train".to_string(), cfg.train_config().seed),
    ]);
    let metadata = ReportMetadata {
        scenario_id: cfg.scenario_id(),
        reference: estimates[0].estimator.clone(),
        seeds,
        scenario: serde_json::to_value(cfg.scenario_spec()).map_err(|e| Failure::Runtime(e.to_string()))?,
        config: serde_json::to_value(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?,
    };
    let doc = build_report(rows, metadata, estimates)?;
    let (csv, json) = doc.write(&dir, &cfg.scenario_id())?;

    let merged = merge_reports(std::slice::from_ref(&doc))?;
    out.say(format_table(&merged).trim_end());
    out.say(format!("{}\n{}", csv.display(), json.display()));
    Ok(())
}

fn report(cli: &Cli, paths: &[PathBuf]) -> Outcome {
    if cli.print_config {
        return Err(Failure::Usage("report has no configuration to print".into()));
    }
    let docs = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            ReportDocument::from_json(&text).map_err(|e| io_err(p, e))
        })
        .collect::<Outcome<Vec<_>>>()?;
    print!("{}", format_table(&merge_reports(&docs)?));
    Ok(())
}
