//! Argument parsing and command execution for the `nilm` binary.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 training error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use thiserror::Error;

use nilm_core::config::{parse_config, Config};
use nilm_core::dataset::{load_houses, segments, split_segments, HouseData, Segment};
use nilm_core::eval::{metrics_csv, MetricRow};
use nilm_core::ingest::{good_sections, PowerSeries};
use nilm_core::models::ModelBundle;
use nilm_core::pipeline::{disaggregate_all, export_csv, load_bundle, save_bundle};
use nilm_core::signature::extract_activations;
use nilm_core::synthgen::{simulate_house, write_house, SimHouse};
use nilm_core::train::{evaluate_appliance, make_split, train_appliance, SplitMode, SplitPlan};

/// Environment variable consulted for the dataset root when neither
/// `--data` nor the config file names one.
pub const DATA_DIR_ENV: &str = "NILM_DATA_DIR";

pub const KNOWN_APPLIANCES: [&str; 3] = ["refrigerator", "microwave", "dishwasher"];

const ALL_HOUSES: [u32; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Appliance-level disaggregation of low-rate smart-meter data")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Summarise coverage and appliance activity per house.
    Stats(StatsArgs),
    /// Write synthetic houses in the on-disk dataset layout.
    Simulate(SimulateArgs),
    /// Train classifier and regressor bundles.
    Train(TrainArgs),
    /// Score trained bundles on the held-out split.
    Eval(EvalArgs),
    /// Disaggregate one house's mains into per-appliance traces.
    Disaggregate(DisaggregateArgs),
    /// Dump a bundle as JSON.
    ExportBundle(ExportArgs),
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct DataArgs {
    /// Dataset root holding `house_<n>/` directories.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, alias = "house", value_delimiter = ',', default_values_t = ALL_HOUSES)]
    pub houses: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32])]
    pub houses: Vec<u32>,
    #[arg(long, default_value_t = 16)]
    pub days: usize,
    /// House `h` is simulated with seed `seed + h`.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args)]
#[command(group(ArgGroup::new("which").required(true).args(["appliance", "all_appliances"])))]
pub struct ApplianceArgs {
    #[arg(long)]
    pub appliance: Vec<String>,
    #[arg(long)]
    pub all_appliances: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::SameHouse)]
    pub mode: ModeArg,
    /// Houses for the same-house protocol (default: every house with the
    /// appliance). Not accepted with the cross-house protocol.
    #[arg(long, value_delimiter = ',')]
    pub houses: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    SameHouse,
    CrossHouse,
}

impl From<ModeArg> for SplitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SameHouse => SplitMode::SameHouse,
            ModeArg::CrossHouse => SplitMode::CrossHouse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub which: ApplianceArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory for `<appliance>.nilm` and training logs.
    #[arg(long, default_value = "models")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub which: ApplianceArgs,
    /// Directory holding `<appliance>.nilm`.
    #[arg(long)]
    pub models: PathBuf,
    /// Metrics CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct DisaggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub house: u32,
    /// Bundle files, one per appliance.
    #[arg(long, required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Add `<appliance>_true` columns from the submeters.
    #[arg(long)]
    pub truth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ExportArgs {
    pub bundle: PathBuf,
    /// Include every weight value.
    #[arg(long)]
    pub weights: bool,
    /// JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse a full argument vector, program name included.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args).map(|c| c.command)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats(a) => stats(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Disaggregate(a) => disaggregate(&a),
        Command::ExportBundle(a) => export_bundle(&a),
    }
}

fn load_config(args: &DataArgs) -> Result<Config> {
    match &args.config {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

/// `--data`, then the config file, then the environment.
pub fn resolve_data_root(args: &DataArgs, config: &Config) -> Result<PathBuf> {
    args.data
        .clone()
        .or_else(|| config.data.root.clone())
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("no dataset root: pass --data, set data.root, or set {DATA_DIR_ENV}")))
}

pub fn selected_appliances(args: &ApplianceArgs) -> Vec<String> {
    if args.all_appliances {
        KNOWN_APPLIANCES.iter().map(|s| s.to_string()).collect()
    } else {
        args.appliance.clone()
    }
}

/// The split for one appliance, with `--houses` applied.
pub fn resolve_plan(appliance: &str, args: &ApplianceArgs) -> Result<SplitPlan> {
    let mode = SplitMode::from(args.mode);
    if mode == SplitMode::CrossHouse && !args.houses.is_empty() {
        return Err(CliError::Usage("--houses is fixed by the cross-house protocol".into()));
    }
    let mut plan = make_split(appliance, mode).map_err(|e| CliError::Usage(e.to_string()))?;
    if !args.houses.is_empty() {
        plan.train_houses = args.houses.clone();
        plan.test_houses = args.houses.clone();
    }
    Ok(plan)
}

fn mode_name(mode: ModeArg) -> &'static str {
    match mode {
        ModeArg::SameHouse => "same-house",
        ModeArg::CrossHouse => "cross-house",
    }
}

fn load_split(
    root: &Path,
    config: &Config,
    appliance: &str,
    plan: &SplitPlan,
) -> Result<(Vec<Segment>, Vec<Segment>)> {
    let mut ids: Vec<u32> = plan.train_houses.iter().chain(&plan.test_houses).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let houses = load_houses(root, &ids, &[appliance], config.data.period, false).map_err(data_err)?;
    if houses.is_empty() {
        return Err(CliError::Data(format!("none of houses {ids:?} found under {}", root.display())));
    }
    Ok(split_segments(&houses, appliance, plan, config.data.max_gap))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn stats(args: &StatsArgs) -> Result<()> {
    let config = load_config(&args.data)?;
    let root = resolve_data_root(&args.data, &config)?;
    let houses = load_houses(&root, &args.houses, &KNOWN_APPLIANCES, config.data.period, false).map_err(data_err)?;
    if houses.is_empty() {
        return Err(CliError::Data(format!("no houses found under {}", root.display())));
    }
    println!("house,series,samples,missing,sections,activations,mean_on_w");
    for h in &houses {
        let missing = h.mains.values.iter().filter(|v| v.is_nan()).count();
        let sections = good_sections(&h.mains, config.data.max_gap).len();
        println!("{},mains,{},{missing},{sections},,", h.house_id, h.mains.len());
        for name in h.appliances.keys() {
            let params = config.appliance_params(name).map_err(|e| CliError::Usage(e.to_string()))?;
            let segs = segments(h, name, config.data.max_gap);
            let acts: Vec<_> = segs
                .iter()
                .flat_map(|s| extract_activations(&s.power, s.period, &params))
                .collect();
            let on: Vec<f64> = acts.iter().flat_map(|a| a.powers.iter().map(|&p| p as f64)).collect();
            let mean = if on.is_empty() { 0.0 } else { on.iter().sum::<f64>() / on.len() as f64 };
            let series = &h.appliances[name];
            let missing = series.values.iter().filter(|v| v.is_nan()).count();
            println!(
                "{},{name},{},{missing},{},{},{mean:.1}",
                h.house_id,
                series.len(),
                segs.len(),
                acts.len()
            );
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    if args.days == 0 {
        return Err(CliError::Usage("--days must be positive".into()));
    }
    for &id in &args.houses {
        let sim = simulate_house(&SimHouse::standard(args.days, args.seed.wrapping_add(id as u64)));
        write_house(&args.out, id, &sim).map_err(|e| data_err(format!("{}: {e}", args.out.display())))?;
        log::info!("wrote house {id} ({} samples)", sim.mains.len());
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(&args.data)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.train.max_epochs = epochs;
    }
    config.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let root = resolve_data_root(&args.data, &config)?;
    for appliance in selected_appliances(&args.which) {
        let params = config.appliance_params(&appliance).map_err(|e| CliError::Usage(e.to_string()))?;
        let plan = resolve_plan(&appliance, &args.which)?;
        let (train_segs, _) = load_split(&root, &config, &appliance, &plan)?;
        if train_segs.iter().all(Segment::is_empty) {
            return Err(CliError::Data(format!("no training data for {appliance} in houses {:?}", plan.train_houses)));
        }
        let trained = train_appliance(&train_segs, &params, &config.train)
            .map_err(|e| CliError::Training(format!("{appliance}: {e}")))?;
        std::fs::create_dir_all(&args.out).map_err(|e| data_err(format!("{}: {e}", args.out.display())))?;
        let path = args.out.join(format!("{appliance}.nilm"));
        let bytes = save_bundle(&trained.bundle, &path).map_err(|e| CliError::Training(e.to_string()))?;
        write_file(&args.out.join(format!("{appliance}_classifier_log.csv")), trained.classifier_report.to_csv())?;
        write_file(&args.out.join(format!("{appliance}_regressor_log.csv")), trained.regressor_report.to_csv())?;
        println!(
            "{appliance}: {} parameters, {bytes} bytes -> {}",
            trained.bundle.param_count(),
            path.display()
        );
    }
    Ok(())
}

fn read_bundle(path: &Path) -> Result<ModelBundle> {
    load_bundle(path).map_err(data_err)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let config = load_config(&args.data)?;
    let root = resolve_data_root(&args.data, &config)?;
    let mut rows = Vec::new();
    for appliance in selected_appliances(&args.which) {
        let bundle = read_bundle(&args.models.join(format!("{appliance}.nilm")))?;
        let plan = resolve_plan(&appliance, &args.which)?;
        let (_, test) = load_split(&root, &config, &appliance, &plan)?;
        if test.iter().all(Segment::is_empty) {
            return Err(CliError::Data(format!("no test data for {appliance} in houses {:?}", plan.test_houses)));
        }
        let e = evaluate_appliance(&bundle, &test).map_err(data_err)?;
        rows.push(MetricRow {
            appliance,
            split: mode_name(args.which.mode).to_string(),
            classification: e.classification,
            regression: e.regression,
        });
    }
    let csv = metrics_csv(&rows);
    match &args.out {
        Some(p) => write_file(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn disaggregate(args: &DisaggregateArgs) -> Result<()> {
    let config = load_config(&args.data)?;
    let root = resolve_data_root(&args.data, &config)?;
    let bundles = args.models.iter().map(|p| read_bundle(p)).collect::<Result<Vec<_>>>()?;
    let period = bundles[0].period;
    if let Some(b) = bundles.iter().find(|b| b.period != period) {
        return Err(CliError::Usage(format!("bundle {} has period {} s, expected {period} s", b.appliance, b.period)));
    }
    let names: Vec<&str> = bundles.iter().map(|b| b.appliance.as_str()).collect();
    let house: HouseData = load_houses(&root, &[args.house], &names, period, true)
        .map_err(data_err)?
        .pop()
        .ok_or_else(|| CliError::Data(format!("house {} not found", args.house)))?;

    // gaps longer than max_gap are left out of the trace
    let mut out = String::new();
    for section in good_sections(&house.mains, config.data.max_gap) {
        let mains = PowerSeries::new(
            house.mains.timestamp(section.start_index),
            period,
            house.mains.fill_section(section),
        );
        let result = disaggregate_all(&mains, &bundles).map_err(data_err)?;
        let truth: BTreeMap<String, PowerSeries> = if args.truth {
            house
                .appliances
                .iter()
                .filter(|(name, _)| names.contains(&name.as_str()))
                .map(|(name, s)| (name.clone(), s.slice(section.range())))
                .collect()
        } else {
            BTreeMap::new()
        };
        let csv = export_csv(&result, &truth).map_err(data_err)?;
        let body = if out.is_empty() { csv.as_str() } else { csv.split_once('\n').map_or("", |(_, b)| b) };
        out.push_str(body);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("house {} has no usable mains data", args.house)));
    }
    write_file(&args.out, out)
}

fn network_json(net: &nilm_core::nn::Network<f32>, weights: bool) -> serde_json::Value {
    let layers: Vec<_> = net
        .layers
        .iter()
        .map(|l| {
            let params: Vec<_> = l
                .spec
                .param_names()
                .iter()
                .zip(&l.params)
                .map(|(name, t)| {
                    let mut v = serde_json::json!({ "name": name, "shape": t.shape() });
                    if weights {
                        v["values"] = serde_json::json!(t.data());
                    }
                    v
                })
                .collect();
            serde_json::json!({
                "kind": l.spec.kind_name(),
                "spec": l.spec,
                "input_shape": l.input_shape,
                "output_shape": l.output_shape,
                "params": params,
            })
        })
        .collect();
    serde_json::json!({
        "input_shape": net.input_shape,
        "param_count": net.param_count(),
        "layers": layers,
    })
}

pub fn bundle_json(bundle: &ModelBundle, weights: bool) -> serde_json::Value {
    serde_json::json!({
        "appliance": bundle.appliance,
        "period": bundle.period,
        "params": bundle.params,
        "mains_scaler": bundle.mains_scaler,
        "power_scaler": bundle.power_scaler,
        "index_scale": bundle.index_scale,
        "off_mean": bundle.off.off_mean,
        "param_count": bundle.param_count(),
        "classifier": network_json(&bundle.classifier, weights),
        "regressor": network_json(&bundle.regressor, weights),
    })
}

fn export_bundle(args: &ExportArgs) -> Result<()> {
    let bundle = read_bundle(&args.bundle)?;
    let mut text = serde_json::to_string_pretty(&bundle_json(&bundle, args.weights)).map_err(data_err)?;
    text.push('\n');
    match &args.out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
