use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use xflex_core::banding::BandSpec;
use xflex_core::pipeline::cv::{cross_validate, CvOutcome};
use xflex_core::pipeline::data::{districts, load_faults, load_weather, training_data, ObservationRow, WeatherRow};
use xflex_core::pipeline::synth::{synth_data, write_faults, write_weather, SynthConfig};
use xflex_core::pipeline::{
    evaluate, fit_bundle, forecast_all, make_folds, select_model, ForecastRecord, Mode, ModelBundle, PipelineConfig,
};
use xflex_core::simlab::{run_scenario, threshold_scan, ScanConfig, ScenarioConfig};
use xflex_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "xflex",
    version,
    about = "Count forecasts with a quantile-regression bulk and a discrete Pareto tail"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation scenario and write RMSE tables.
    Simulate(SimArgs),
    /// Refit the tail over a grid of transition levels.
    ThresholdScan(SimArgs),
    /// Fit one bundle per district on all training data.
    Fit(DataArgs),
    /// Forecast NWP rows with fitted bundles.
    Forecast(ForecastArgs),
    /// Score stored forecasts against observed counts.
    Evaluate(EvaluateArgs),
    /// Leave-one-regulatory-year-out hindcasts and scores.
    Cv(CvArgs),
    /// Choose the transition level and tail covariates by cross-validation and fit the winner.
    Select(DataArgs),
    /// Write a self-consistent synthetic data set.
    SynthData(SynthArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    #[arg(long, value_parser = ["0", "0.3"])]
    xi: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario configuration (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    faults: PathBuf,
    #[arg(long)]
    weather: PathBuf,
    #[arg(long)]
    bands: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    weather: PathBuf,
    /// Directory of bundles; defaults to `<out>/bundles`.
    #[arg(long)]
    bundles: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "eps+hres")]
    mode: Mode,
    #[arg(long, value_delimiter = ',')]
    lead_hours: Vec<i64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    faults: PathBuf,
    #[arg(long)]
    bands: PathBuf,
    /// Forecast file; defaults to `<out>/forecasts.json`.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Source whose lead-0 pinball losses scale the others.
    #[arg(long, default_value = "eps+hres")]
    baseline: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "eps+hres")]
    mode: Mode,
    #[arg(long, value_delimiter = ',')]
    lead_hours: Vec<i64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic data configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_bands(path: &Path) -> Result<BTreeMap<String, BandSpec>> {
    let specs: Vec<BandSpec> = read_json(path)?;
    let mut out = BTreeMap::new();
    for s in specs {
        s.validate()?;
        if out.insert(s.district.clone(), s.clone()).is_some() {
            return Err(Error::Validation(format!("duplicate band thresholds for district {}", s.district)));
        }
    }
    Ok(out)
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

struct Inputs {
    faults: Vec<ObservationRow>,
    weather: Vec<WeatherRow>,
    bands: BTreeMap<String, BandSpec>,
    cfg: PipelineConfig,
}

impl Inputs {
    fn load(a: &DataArgs) -> Result<Self> {
        let inputs = Self {
            faults: load_faults(&a.faults)?,
            weather: load_weather(&a.weather)?,
            bands: load_bands(&a.bands)?,
            cfg: load_config(a.config.as_deref())?,
        };
        fs::create_dir_all(&a.out)?;
        Ok(inputs)
    }

    fn districts(&self) -> Result<Vec<(String, BandSpec)>> {
        districts(&self.faults)
            .into_iter()
            .map(|d| {
                let spec = self.bands.get(&d).cloned();
                spec.map(|s| (d.clone(), s))
                    .ok_or_else(|| Error::Validation(format!("no band thresholds for district {d}")))
            })
            .collect()
    }

    fn covariates(&self) -> Result<Vec<String>> {
        self.cfg.covariates()
    }
}

fn scenario_config(a: &SimArgs, base: ScenarioConfig) -> Result<ScenarioConfig> {
    let mut cfg = base;
    if let Some(s) = a.scenario {
        cfg.scenario = s;
    }
    if let Some(x) = &a.xi {
        cfg.xi = x.parse().expect("restricted by clap");
    }
    if let Some(r) = a.reps {
        cfg.n_reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: &SimArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => read_json(p)?,
        None => ScenarioConfig::default(),
    };
    let cfg = scenario_config(a, base)?;
    fs::create_dir_all(&a.out)?;
    let report = run_scenario(&cfg)?;
    let stem = format!("simulate_s{}_xi{}", cfg.scenario, cfg.xi);
    fs::write(a.out.join(format!("{stem}.csv")), report.to_csv())?;
    write_json(&a.out.join(format!("{stem}.json")), &report)?;
    for level in cfg.levels.iter().filter(|&&l| l >= 0.99) {
        println!(
            "level {level}: flex {:.3}, bulk-only {:.3}, flex better in {}/{} replications",
            report.mean_rmse(*level, true),
            report.mean_rmse(*level, false),
            report.flex_wins(*level),
            report.outcomes.len()
        );
    }
    for (rep, e) in &report.failures {
        log::warn!("replication {rep} failed: {e}");
    }
    Ok(())
}

fn scan(a: &SimArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => {
            let mut c: ScanConfig = read_json(p)?;
            c.base = scenario_config(a, c.base)?;
            c
        }
        None => ScanConfig::around(scenario_config(a, ScanConfig::default().base)?),
    };
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    let report = threshold_scan(&cfg)?;
    let stem = format!("threshold_scan_s{}_xi{}", cfg.base.scenario, cfg.base.xi);
    fs::write(a.out.join(format!("{stem}.csv")), report.to_csv())?;
    write_json(&a.out.join(format!("{stem}.json")), &report)?;
    let (rho, p) = report.xi_spread_trend();
    println!("xi spread trend over the upper grid: spearman {rho:.3}, p = {p:.4}");
    Ok(())
}

fn fit(a: &DataArgs) -> Result<()> {
    let inp = Inputs::load(a)?;
    let covs = inp.covariates()?;
    let covs: Vec<&str> = covs.iter().map(String::as_str).collect();
    let tail = inp.cfg.tail_formula()?;
    let dir = a.out.join("bundles");
    fs::create_dir_all(&dir)?;
    let bundles = inp
        .districts()?
        .par_iter()
        .map(|(d, spec)| {
            let train = training_data(&inp.faults, &inp.weather, d, &covs)?;
            fit_bundle(&train, spec, &inp.cfg, inp.cfg.alpha_t, &tail)
        })
        .collect::<Result<Vec<_>>>()?;
    for b in &bundles {
        b.save(&dir.join(format!("{}.json", b.district)))?;
        println!(
            "{}: {} rows, {} exceedances above alpha_t = {}, xi = {:.3}",
            b.district,
            b.metadata.n_train,
            b.metadata.n_exceedances,
            b.metadata.alpha_t,
            b.model.tail.as_ref().map_or(f64::NAN, |t| t.xi)
        );
    }
    Ok(())
}

fn load_bundles(dir: &Path) -> Result<Vec<ModelBundle>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Validation(format!("cannot read bundle directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no bundles in {}", dir.display())));
    }
    paths.iter().map(|p| ModelBundle::load(p)).collect()
}

fn run_forecast(a: &ForecastArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let bundles = load_bundles(&a.bundles.clone().unwrap_or_else(|| a.out.join("bundles")))?;
    let weather = load_weather(&a.weather)?;
    fs::create_dir_all(&a.out)?;
    let records = forecast_all(&bundles, &weather, a.mode, &a.lead_hours, cfg.strict_members)?;
    write_json(&a.out.join("forecasts.json"), &records)?;
    println!("{} forecasts written", records.len());
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let path = a.forecasts.clone().unwrap_or_else(|| a.out.join("forecasts.json"));
    let records: Vec<ForecastRecord> = read_json(&path)?;
    let faults = load_faults(&a.faults)?;
    let bands: Vec<BandSpec> = load_bands(&a.bands)?.into_values().collect();
    fs::create_dir_all(&a.out)?;
    let report = evaluate(&records, &faults, &bands, &a.baseline)?;
    report.save(&a.out)?;
    println!("{} forecasts scored, {} degenerate twCRPS cases", report.n_forecasts, report.twcrps_degenerate);
    Ok(())
}

fn run_cv(a: &CvArgs) -> Result<()> {
    let inp = Inputs::load(&a.data)?;
    let covs = inp.covariates()?;
    let covs: Vec<&str> = covs.iter().map(String::as_str).collect();
    let outcomes = inp
        .districts()?
        .par_iter()
        .map(|(d, spec)| {
            let train = training_data(&inp.faults, &inp.weather, d, &covs)?;
            let plan = make_folds(&train.dates)?;
            cross_validate(&train, &plan, &inp.weather, spec, &inp.cfg, a.mode, &a.lead_hours)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all = CvOutcome::default();
    for o in outcomes {
        all.extend(o);
    }
    write_json(&a.data.out.join("cv_forecasts.json"), &all.records)?;
    write_json(&a.data.out.join("cv_audit.json"), &all.audits)?;
    if !all.leak_free() {
        return Err(Error::Validation("leakage audit failed; see cv_audit.json".into()));
    }
    let bands: Vec<BandSpec> = inp.bands.values().cloned().collect();
    let report = evaluate(&all.records, &inp.faults, &bands, "eps+hres")?;
    report.save(&a.data.out)?;
    println!("{} hindcasts over {} folds, leakage audit passed", all.records.len(), all.audits.len());
    Ok(())
}

fn run_select(a: &DataArgs) -> Result<()> {
    let inp = Inputs::load(a)?;
    let covs = inp.covariates()?;
    let covs: Vec<&str> = covs.iter().map(String::as_str).collect();
    let dir = a.out.join("bundles");
    fs::create_dir_all(&dir)?;
    for (d, spec) in inp.districts()? {
        let train = training_data(&inp.faults, &inp.weather, &d, &covs)?;
        let plan = make_folds(&train.dates)?;
        let ledger = select_model(&train, &plan, &spec, &inp.cfg)?;
        let w = ledger.winner();
        println!(
            "{d}: alpha_t = {}, tail covariates {:?} (BS pick {}, AUC pick {})",
            w.alpha_t, w.tail_terms, ledger.bs_pick, ledger.auc_pick
        );
        let chosen = PipelineConfig { alpha_t: w.alpha_t, tail_terms: w.tail_terms.clone(), ..inp.cfg.clone() };
        let mut bundle = fit_bundle(&train, &spec, &chosen, chosen.alpha_t, &chosen.tail_formula()?)?;
        write_json(&a.out.join(format!("selection_{d}.json")), &ledger)?;
        write_json(&a.out.join(format!("config_{d}.json")), &chosen)?;
        bundle.metadata.selection = Some(ledger);
        bundle.save(&dir.join(format!("{d}.json")))?;
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&a.out)?;
    let data = synth_data(&cfg)?;
    write_faults(&data.faults, &a.out.join("faults.csv"))?;
    write_weather(&data.weather, &a.out.join("weather.csv"))?;
    write_json(&a.out.join("bands.json"), &data.bands)?;
    write_json(&a.out.join("config.json"), &PipelineConfig::default())?;
    println!("{} fault rows and {} weather rows written", data.faults.len(), data.weather.len());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("XFLEX_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Validation(format!("XFLEX_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Validation(format!("cannot configure thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::ThresholdScan(a) => scan(a),
        Command::Fit(a) => fit(a),
        Command::Forecast(a) => run_forecast(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Cv(a) => run_cv(a),
        Command::Select(a) => run_select(a),
        Command::SynthData(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
