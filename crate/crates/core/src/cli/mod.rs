//! Batch front end: `synth`, `preprocess`, `fit`, `validate` and `map`.
//!
//! Exit codes: 0 on success, 1 on infrastructure failure (I/O, malformed
//! data), 2 on usage errors (bad flags, invalid configuration, unknown
//! model names).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeZone};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mapgen::{render_map, GridSpec, DEFAULT_CELL_M};
use crate::models::{registered_names, ModelFile, ModelSpec, TrainedModel, MODEL_NAMES};
use crate::preprocess::{
    load_sources, parse_time, read_dataset_csv, read_raw_csv, run_pipeline, schema_of, write_dataset_csv,
    PreprocessConfig, Sidecar,
};
use crate::synth::{generate_scene, SceneConfig};
use crate::types::{Dataset, StationClass};
use crate::validation::{run_benchmark, BenchmarkConfig, PlanKind, ScenarioKind};

#[derive(Debug, Parser)]
#[command(name = "aeromap", version, about = "Spatio-temporal air-quality modeling")]
pub struct Cli {
    /// Global random seed; falls back to AEROMAP_SEED, then the config file.
    #[arg(long, global = true, env = "AEROMAP_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: raw feeds, covariate inputs and a manifest.
    Synth(SynthArgs),
    /// Clean raw feeds and attach covariates.
    Preprocess(PreprocessArgs),
    /// Fit one model and save it as a model file.
    Fit(FitArgs),
    /// Run the benchmark grid and write CSV, Markdown and JSON reports.
    Validate(ValidateArgs),
    /// Render raster maps at one instant.
    Map(MapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Projection, pipeline parameters and covariate sources (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Raw low-cost feed.
    #[arg(long)]
    pub lowcost: PathBuf,
    /// Raw reference-station feed.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Dataset CSV to write; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration (TOML) holding model settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: String,
    /// Train on this local day's low-cost data only.
    #[arg(long)]
    pub day: Option<NaiveDate>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the training curve (iterative models) as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated model names; all ten by default.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// interpolation, forecast
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    /// loso, fixed_station
    #[arg(long, value_delimiter = ',')]
    pub validations: Option<Vec<String>>,
    #[arg(long)]
    pub day: Option<NaiveDate>,
    #[arg(long)]
    pub tuning_day: Option<NaiveDate>,
    /// Add metrics on back-transformed concentrations.
    #[arg(long)]
    pub back_transform: bool,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Preprocess configuration naming the covariate sources.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Model to map; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub model: Option<Vec<String>>,
    /// Map all ten registered models.
    #[arg(long)]
    pub all_models: bool,
    /// Map instant, RFC 3339 or local `YYYY-MM-DDTHH:MM:SS`.
    #[arg(long)]
    pub time: Option<String>,
    /// Training day; defaults to the day of `--time`.
    #[arg(long)]
    pub day: Option<NaiveDate>,
    #[arg(long)]
    pub cellsize: Option<f64>,
    /// Write log-space values instead of µg/m³.
    #[arg(long)]
    pub log_space: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `[validate]` table of the run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub dataset: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub scenarios: Option<Vec<ScenarioKind>>,
    pub validations: Option<Vec<PlanKind>>,
    pub day: Option<NaiveDate>,
    pub tuning_day: Option<NaiveDate>,
    pub back_transform: bool,
    pub out: Option<PathBuf>,
}

/// `[map]` table of the run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub dataset: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub time: Option<String>,
    pub day: Option<NaiveDate>,
    pub cellsize: Option<f64>,
    /// Explicit grid; otherwise the dataset's bounding box.
    pub grid: Option<GridSpec>,
    pub log_space: bool,
    pub out: Option<PathBuf>,
}

/// Run configuration shared by `fit`, `validate` and `map`. Command-line
/// flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Model settings keyed by registered name.
    pub models: BTreeMap<String, ModelSpec>,
    pub validate: ValidateSection,
    pub map: MapSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("run config: {e}")))
    }

    /// Reads a config and resolves its relative paths against its folder.
    pub fn read(path: &Path) -> crate::Result<Self> {
        let mut c = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut c.validate.dataset);
        fix(&mut c.validate.out);
        fix(&mut c.map.dataset);
        fix(&mut c.map.sources);
        fix(&mut c.map.out);
        Ok(c)
    }

    /// Settings of a registered model, seeded.
    pub fn spec(&self, name: &str, seed: u64) -> crate::Result<ModelSpec> {
        let spec = match self.models.get(name) {
            Some(s) if s.name() != name => {
                return Err(Error::Parse(format!("[models.{name}] configures `{}`", s.name())))
            }
            Some(s) => s.clone(),
            None => ModelSpec::default_for(name)?,
        };
        Ok(spec.with_seed(seed))
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownModel { .. } | Error::Parse(_) | Error::SceneTooLarge { .. } => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments and runs one subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_run_config(path: &Option<PathBuf>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p).map_err(|e| match e {
            Error::Io(io) => CliError::usage(format!("cannot read {}: {io}", p.display())),
            other => CliError::usage(other.to_string()),
        }),
        None => Ok(RunConfig::default()),
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let config = match &cli.command {
        Command::Fit(a) => load_run_config(&a.config)?,
        Command::Validate(a) => load_run_config(&a.config)?,
        Command::Map(a) => load_run_config(&a.config)?,
        _ => RunConfig::default(),
    };
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError { code: 1, message: e.to_string() })?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Fit(a) => cmd_fit(a, &config, seed),
        Command::Validate(a) => cmd_validate(a, &config, seed),
        Command::Map(a) => cmd_map(a, &config, seed),
    })
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
            SceneConfig::from_toml(&text)?
        }
        None => SceneConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::usage(format!("invalid scene config: {e}")))?;
    let scene = generate_scene(&cfg)?;
    scene.write(&a.out)?;
    println!(
        "scene seed {} written to {}: {} low-cost and {} reference records",
        cfg.seed,
        a.out.display(),
        scene.manifest.n_lowcost_records,
        scene.manifest.n_reference_records
    );
    Ok(())
}

fn cmd_preprocess(a: &PreprocessArgs) -> CliResult<()> {
    let cfg = PreprocessConfig::read(&a.config).map_err(|e| CliError::usage(e.to_string()))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let sources = load_sources(&cfg.sources, base, &cfg.projection)?;
    let schema = schema_of(&cfg.sources)?;
    let lc = read_raw_csv(std::fs::File::open(&a.lowcost)?, &cfg.projection, StationClass::LowCost)?;
    let (mut ds, counts_lowcost) = run_pipeline(&lc, &cfg.params, &sources, &schema)?;
    let mut counts_reference = None;
    if let Some(r) = &a.reference {
        let raw = read_raw_csv(std::fs::File::open(r)?, &cfg.projection, StationClass::Reference)?;
        let (rd, c) = run_pipeline(&raw, &cfg.params, &sources, &schema)?;
        ds = ds.concat(&rd)?;
        counts_reference = Some(c);
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_dataset_csv(&a.out, &ds)?;
    let sidecar = Sidecar {
        schema,
        projection: cfg.projection,
        utc_offset_s: ds.utc_offset_s,
        params: cfg.params.clone(),
        counts_lowcost,
        counts_reference,
        n_observations: ds.len(),
    };
    std::fs::write(a.out.with_extension("json"), serde_json::to_string_pretty(&sidecar).map_err(Error::from)?)?;
    println!("{} observations written to {}", ds.len(), a.out.display());
    Ok(())
}

fn check_names(names: &[String]) -> CliResult<()> {
    for n in names {
        if !MODEL_NAMES.contains(&n.as_str()) {
            return Err(Error::UnknownModel {
                name: n.clone(),
                registered: registered_names(),
            }
            .into());
        }
    }
    Ok(())
}

fn lowcost_of_day(ds: &Dataset, day: Option<NaiveDate>) -> Dataset {
    ds.filter(|o| o.station_class == StationClass::LowCost && day.is_none_or(|d| ds.local_date(o.point.t) == d))
}

fn cmd_fit(a: &FitArgs, config: &RunConfig, seed: u64) -> CliResult<()> {
    check_names(std::slice::from_ref(&a.model))?;
    let spec = config.spec(&a.model, seed)?;
    let ds = read_dataset_csv(&a.dataset)?;
    let train = lowcost_of_day(&ds, a.day);
    let model = spec.fit(&train)?;
    ModelFile::new(ds.schema.clone(), model.clone()).save(&a.out)?;
    if let Some(c) = &a.curve {
        model.write_training_curve(c)?;
    }
    for n in model.notes() {
        println!("note: {n}");
    }
    println!("{} fitted on {} observations, saved to {}", a.model, train.len(), a.out.display());
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(v: &[String]) -> CliResult<Vec<T>> {
    v.iter().map(|s| s.parse::<T>().map_err(CliError::from)).collect()
}

fn cmd_validate(a: &ValidateArgs, config: &RunConfig, seed: u64) -> CliResult<()> {
    let sec = &config.validate;
    let dataset = a
        .dataset
        .clone()
        .or_else(|| sec.dataset.clone())
        .ok_or_else(|| CliError::usage("validate needs --dataset"))?;
    let out = a.out.clone().or_else(|| sec.out.clone()).unwrap_or_else(|| PathBuf::from("report"));
    let names = a
        .models
        .clone()
        .or_else(|| sec.models.clone())
        .unwrap_or_else(registered_names);
    check_names(&names)?;
    let scenarios = match &a.scenarios {
        Some(s) => parse_list(s)?,
        None => sec.scenarios.clone().unwrap_or_else(|| ScenarioKind::ALL.to_vec()),
    };
    let validations = match &a.validations {
        Some(s) => parse_list(s)?,
        None => sec.validations.clone().unwrap_or_else(|| PlanKind::ALL.to_vec()),
    };
    let specs = names.iter().map(|n| config.spec(n, seed)).collect::<crate::Result<Vec<_>>>()?;
    let ds = read_dataset_csv(&dataset)?;
    let cfg = BenchmarkConfig {
        scenarios,
        validations,
        day: a.day.or(sec.day),
        tuning_day: a.tuning_day.or(sec.tuning_day),
        back_transform: a.back_transform || sec.back_transform,
    };
    let report = run_benchmark(&ds, &specs, &cfg)?;
    report.write(&out)?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "{} cells ({} failed) for day {}; report written to {}",
        report.cells.len(),
        failed,
        report.days.day,
        out.display()
    );
    Ok(())
}

/// RFC 3339, or a naive local time in the dataset's UTC offset.
pub fn parse_instant(s: &str, utc_offset_s: i32) -> crate::Result<f64> {
    if let Ok(t) = parse_time(s) {
        return Ok(t.timestamp() as f64);
    }
    let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|_| Error::Parse(format!("bad time `{s}`")))?;
    let off = chrono::FixedOffset::east_opt(utc_offset_s).ok_or_else(|| Error::Parse("bad UTC offset".into()))?;
    off.from_local_datetime(&naive)
        .single()
        .map(|t| t.timestamp() as f64)
        .ok_or_else(|| Error::Parse(format!("bad time `{s}`")))
}

fn cmd_map(a: &MapArgs, config: &RunConfig, seed: u64) -> CliResult<()> {
    let sec = &config.map;
    let names = if a.all_models {
        registered_names()
    } else {
        a.model
            .clone()
            .or_else(|| sec.models.clone())
            .ok_or_else(|| CliError::usage("map needs --model or --all-models"))?
    };
    check_names(&names)?;
    let dataset = a
        .dataset
        .clone()
        .or_else(|| sec.dataset.clone())
        .ok_or_else(|| CliError::usage("map needs --dataset"))?;
    let sources_path = a
        .sources
        .clone()
        .or_else(|| sec.sources.clone())
        .ok_or_else(|| CliError::usage("map needs --sources (a preprocess config)"))?;
    let out = a.out.clone().or_else(|| sec.out.clone()).unwrap_or_else(|| PathBuf::from("maps"));
    let cellsize = a.cellsize.or(sec.cellsize).unwrap_or(DEFAULT_CELL_M);
    let log_space = a.log_space || sec.log_space;

    let ds = read_dataset_csv(&dataset)?;
    let day = a.day.or(sec.day);
    let t = match (a.time.as_ref().or(sec.time.as_ref()), day) {
        (Some(s), _) => parse_instant(s, ds.utc_offset_s)?,
        (None, Some(d)) => parse_instant(&format!("{d}T12:00:00"), ds.utc_offset_s)?,
        (None, None) => return Err(CliError::usage("map needs --time or --day")),
    };
    let day = day.unwrap_or_else(|| ds.local_date(t));
    let pcfg = PreprocessConfig::read(&sources_path).map_err(|e| CliError::usage(e.to_string()))?;
    let sources = load_sources(&pcfg.sources, sources_path.parent().unwrap_or(Path::new(".")), &pcfg.projection)?;
    let schema = schema_of(&pcfg.sources)?;
    if schema != ds.schema {
        return Err(CliError::usage("covariate sources do not match the dataset schema"));
    }
    let train = lowcost_of_day(&ds, Some(day));
    if train.is_empty() {
        return Err(Error::EmptyTraining.into());
    }
    let grid = match sec.grid {
        Some(g) => GridSpec::new(g.xll, g.yll, g.cellsize, g.ncols, g.nrows)?,
        None => GridSpec::covering(&ds.points(), cellsize)?,
    };
    let specs = names.iter().map(|n| config.spec(n, seed)).collect::<crate::Result<Vec<_>>>()?;
    let models: Vec<TrainedModel> = specs.iter().map(|s| s.fit(&train)).collect::<crate::Result<_>>()?;
    let rasters = models
        .iter()
        .map(|m| render_map(m, &grid, t, &sources, &schema))
        .collect::<crate::Result<Vec<_>>>()?;
    // a batch shares one color scale
    let range = rasters
        .iter()
        .map(|r| r.summary(log_space))
        .filter_map(|s| s.min.zip(s.max))
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    for r in &rasters {
        r.write(&out, &format!("map_{}", r.model), log_space, range)?;
        println!("{}: {} cells, {} no-data", r.model, r.grid.len(), r.n_nodata());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_parses_model_overrides() {
        let c = RunConfig::from_toml(
            r#"
seed = 5
[models.rf]
model = "rf"
params = { n_trees = 7 }
[validate]
models = ["rf", "lr"]
scenarios = ["forecast"]
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(5));
        assert!(matches!(c.spec("rf", 1).unwrap(), ModelSpec::Rf { params } if params.n_trees == 7 && params.seed == 1));
        assert_eq!(c.validate.scenarios, Some(vec![ScenarioKind::Forecast]));
        assert!(RunConfig::from_toml("[models.rf]\nmodel = \"svr\"\n").unwrap().spec("rf", 0).is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn naive_times_use_the_dataset_offset() {
        assert_eq!(parse_instant("2024-03-04T12:00:00", 3600).unwrap(), 1_709_550_000.0);
        assert_eq!(parse_instant("2024-03-04T12:00:00+01:00", 0).unwrap(), 1_709_550_000.0);
        assert!(parse_instant("noon", 0).is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["aeromap", "frobnicate"]), 2);
        assert_eq!(run(["aeromap", "validate", "--dataset", "x.csv", "--models", "kriging"]), 2);
    }
}
