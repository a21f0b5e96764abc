//! The `mealcast` command-line interface.
//!
//! Five subcommands cover the whole workflow: `synth` writes a plausible
//! service-history CSV, `train` fits one network, `search` sweeps a
//! candidate grid, `evaluate` scores a saved model, and `predict` maps menu
//! plans to expected demand. Training options resolve in three layers:
//! built-in defaults, then a `key = value` config file, then command-line
//! flags.
//!
//! Exit codes: 0 on success, 1 for input or validation problems, 2 when a
//! computation fails (diverging loss, no usable grid candidate).

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataio::{
    clean, read_csv, split, synthesize, write_csv, RawRow, SynthProfile, FEATURE_NAMES,
};
use crate::encoding::{
    build_codebooks, encode_dataset, encode_row, Codebook, FeatureMatrix, NormBounds,
    FEATURE_COUNT,
};
use crate::error::{Error, Result};
use crate::metrics::{build_report, pearson, MapeMode};
use crate::network::{load_model, parse_activations, save_model, ModelBundle, Topology};
use crate::search::{default_grid, run_grid, Candidate, SearchConfig};
use crate::training::{dataset_mse, train, TrainConfig, Trainer, TrainRecord};

#[derive(Parser)]
#[command(
    name = "mealcast",
    version,
    about = "Forecast refectory meal demand with small neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic service-history CSV
    Synth(SynthArgs),
    /// Train a single network and save the model
    Train(TrainArgs),
    /// Try a grid of architectures and keep the best one
    Search(SearchArgs),
    /// Score a saved model against a dataset and write a per-row report
    Evaluate(EvaluateArgs),
    /// Predict demand for one day or a batch of days
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 550)]
    rows: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Largest number of meals served on one day
    #[arg(long, default_value_t = 110)]
    capacity: u32,
    /// Fraction of days that are holidays
    #[arg(long, default_value_t = 0.08)]
    holiday_rate: f64,
    /// Noise level on the latent demand score
    #[arg(long, default_value_t = 0.03)]
    noise_std: f64,
}

/// Options shared by `train` and `search`. Every field is optional so the
/// config file and the defaults can fill the gaps.
#[derive(Args)]
struct FitArgs {
    /// key = value config file; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// gdm or lm
    #[arg(long)]
    trainer: Option<String>,
    /// Learning rate (gdm)
    #[arg(long)]
    eta: Option<f64>,
    /// Momentum (gdm)
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    goal_mse: Option<f64>,
    /// Initial damping (lm)
    #[arg(long)]
    lm_mu0: Option<f64>,
    /// Damping growth on rejection (lm)
    #[arg(long)]
    lm_mu_inc: Option<f64>,
    /// Damping decay on acceptance (lm)
    #[arg(long)]
    lm_mu_dec: Option<f64>,
    /// Damping cap (lm)
    #[arg(long)]
    lm_mu_max: Option<f64>,
    /// Drives the train/test split, weight init, and pattern shuffles
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of rows used for training
    #[arg(long)]
    split: Option<f64>,
    /// Outlier threshold in group standard deviations
    #[arg(long)]
    clean_k: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data CSV
    #[arg(long)]
    data: PathBuf,
    /// Where to write the trained model
    #[arg(long)]
    model: PathBuf,
    /// Optional per-epoch loss history CSV
    #[arg(long)]
    history: Option<PathBuf>,
    /// Layer widths, e.g. 8-10-10-1
    #[arg(long)]
    topology: Option<String>,
    /// Activation chain, e.g. logsig-logsig-tansig
    #[arg(long)]
    activations: Option<String>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct SearchArgs {
    /// Training data CSV
    #[arg(long)]
    data: PathBuf,
    /// Where to write the result table CSV
    #[arg(long)]
    out: PathBuf,
    /// Optionally save the winning model here
    #[arg(long)]
    model: Option<PathBuf>,
    /// Semicolon-separated candidates, e.g. "8-5-1:logsig-tansig; 8-10-10-1:logsig-logsig-tansig"
    #[arg(long)]
    grid: Option<String>,
    /// Restarts per candidate
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Evaluation data CSV
    #[arg(long)]
    data: PathBuf,
    /// Saved model to score
    #[arg(long)]
    model: PathBuf,
    /// Where to write the per-row report CSV
    #[arg(long)]
    report: PathBuf,
    /// plain or shifted
    #[arg(long, default_value = "shifted")]
    mape_mode: String,
    /// Denominator shift for the shifted mode
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model
    #[arg(long)]
    model: PathBuf,
    /// Batch input CSV (the eight feature columns; a demand column is ignored)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write batch predictions (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    soup: Option<String>,
    #[arg(long)]
    main_dish: Option<String>,
    #[arg(long)]
    side_dish: Option<String>,
    #[arg(long)]
    side_helper: Option<String>,
    #[arg(long)]
    beverage: Option<String>,
    #[arg(long)]
    weekday: Option<String>,
    #[arg(long)]
    holiday: Option<String>,
    #[arg(long)]
    season: Option<String>,
}

/// Entry point used by `main` and by the integration tests. Returns the
/// process exit code instead of exiting, so tests can call it in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; clap picks the right code.
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Search(a) => cmd_search(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// [`run`] on the real process arguments.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

const CONFIG_KEYS: [&str; 16] = [
    "trainer",
    "eta",
    "alpha",
    "max_epochs",
    "goal_mse",
    "lm_mu0",
    "lm_mu_inc",
    "lm_mu_dec",
    "lm_mu_max",
    "seed",
    "split",
    "clean_k",
    "topology",
    "activations",
    "grid",
    "repeats",
];

/// Parses a `key = value` file: one pair per line, `#` starts a comment,
/// blank lines are ignored. Unknown and repeated keys are errors.
fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        if value.is_empty() {
            return Err(Error::Config(format!("line {}: key `{key}` has no value", lineno + 1)));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("line {}: key `{key}` repeated", lineno + 1)));
        }
    }
    Ok(map)
}

fn config_value<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{raw}`"))),
    }
}

#[derive(Debug)]
struct FitSettings {
    cfg: TrainConfig,
    split: f64,
    clean_k: f64,
}

/// Defaults, overridden by the config file, overridden by flags.
fn resolve_fit(fit: &FitArgs) -> Result<(FitSettings, HashMap<String, String>)> {
    let map = match &fit.config {
        Some(path) => load_config(path)?,
        None => HashMap::new(),
    };

    let mut cfg = TrainConfig::default();
    if let Some(t) = map.get("trainer") {
        cfg.trainer = Trainer::parse(t)?;
    }
    if let Some(v) = config_value(&map, "eta")? {
        cfg.eta = v;
    }
    if let Some(v) = config_value(&map, "alpha")? {
        cfg.alpha = v;
    }
    if let Some(v) = config_value(&map, "max_epochs")? {
        cfg.max_epochs = v;
    }
    if let Some(v) = config_value(&map, "goal_mse")? {
        cfg.goal_mse = v;
    }
    if let Some(v) = config_value(&map, "lm_mu0")? {
        cfg.lm_mu0 = v;
    }
    if let Some(v) = config_value(&map, "lm_mu_inc")? {
        cfg.lm_mu_inc = v;
    }
    if let Some(v) = config_value(&map, "lm_mu_dec")? {
        cfg.lm_mu_dec = v;
    }
    if let Some(v) = config_value(&map, "lm_mu_max")? {
        cfg.lm_mu_max = v;
    }
    if let Some(v) = config_value(&map, "seed")? {
        cfg.seed = v;
    }
    let mut split_fraction: f64 = config_value(&map, "split")?.unwrap_or(0.7);
    let mut clean_k: f64 = config_value(&map, "clean_k")?.unwrap_or(3.0);

    if let Some(t) = &fit.trainer {
        cfg.trainer = Trainer::parse(t)?;
    }
    if let Some(v) = fit.eta {
        cfg.eta = v;
    }
    if let Some(v) = fit.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = fit.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = fit.goal_mse {
        cfg.goal_mse = v;
    }
    if let Some(v) = fit.lm_mu0 {
        cfg.lm_mu0 = v;
    }
    if let Some(v) = fit.lm_mu_inc {
        cfg.lm_mu_inc = v;
    }
    if let Some(v) = fit.lm_mu_dec {
        cfg.lm_mu_dec = v;
    }
    if let Some(v) = fit.lm_mu_max {
        cfg.lm_mu_max = v;
    }
    if let Some(v) = fit.seed {
        cfg.seed = v;
    }
    if let Some(v) = fit.split {
        split_fraction = v;
    }
    if let Some(v) = fit.clean_k {
        clean_k = v;
    }
    cfg.validate()?;

    Ok((
        FitSettings {
            cfg,
            split: split_fraction,
            clean_k,
        },
        map,
    ))
}

/// Shared front half of `train` and `search`: read, clean, split, derive
/// target bounds from the training rows, and encode both partitions.
struct Prepared {
    train: FeatureMatrix,
    test: FeatureMatrix,
    codebooks: Vec<Codebook>,
    bounds: NormBounds,
}

fn prepare(data: &Path, settings: &FitSettings) -> Result<Prepared> {
    let ds = read_csv(data)?;
    let codebooks = build_codebooks();
    let (cleaned, report) = clean(&ds, &codebooks, settings.clean_k)?;
    println!("clean: {}", report.summary());
    let (train_raw, test_raw) = split(&cleaned, settings.split, settings.cfg.seed)?;
    println!("split: {} train rows, {} test rows", train_raw.len(), test_raw.len());
    // Bounds come from the training rows only; the test partition plays no
    // part in fitting, normalization included.
    let bounds = NormBounds::from_values(train_raw.rows().iter().map(|r| f64::from(r.demand)))?;
    let train = encode_dataset(&train_raw, &codebooks, bounds)?;
    let test = encode_dataset(&test_raw, &codebooks, bounds)?;
    Ok(Prepared {
        train,
        test,
        codebooks,
        bounds,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn history_csv(record: &TrainRecord) -> String {
    let mut out = String::from("epoch,mse,mu,accepted\n");
    for r in &record.history {
        let mu = r.mu.map(|m| format!("{m:.6e}")).unwrap_or_default();
        let accepted = match r.accepted {
            Some(true) => "yes",
            Some(false) => "no",
            None => "",
        };
        out.push_str(&format!("{},{:.6},{},{}\n", r.epoch, r.mse, mu, accepted));
    }
    out
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let profile = SynthProfile {
        capacity: args.capacity,
        holiday_rate: args.holiday_rate,
        noise_std: args.noise_std,
    };
    let ds = synthesize(&profile, args.rows, args.seed)?;
    write_csv(&ds, &args.out)?;
    println!("wrote {} rows to {}", ds.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (settings, map) = resolve_fit(&args.fit)?;
    let topology: Topology = args
        .topology
        .clone()
        .or_else(|| map.get("topology").cloned())
        .unwrap_or_else(|| "8-10-10-1".into())
        .parse()?;
    let activations = parse_activations(
        &args
            .activations
            .clone()
            .or_else(|| map.get("activations").cloned())
            .unwrap_or_else(|| "logsig-logsig-tansig".into()),
    )?;

    let prepared = prepare(&args.data, &settings)?;
    let mut mlp = crate::network::Mlp::new(&topology, &activations, settings.cfg.seed)?;
    let record = train(&mut mlp, &prepared.train, &settings.cfg)?;

    let test_pred = mlp.predict_matrix(&prepared.test)?;
    let test_r = pearson(prepared.test.targets(), &test_pred)?;
    let test_mse = dataset_mse(&mlp, &prepared.test)?;
    println!(
        "trained {}:{} with {} for {} epochs ({})",
        topology,
        activations.iter().map(|a| a.name()).collect::<Vec<_>>().join("-"),
        settings.cfg.trainer,
        record.epochs_run(),
        record.stop
    );
    println!(
        "train mse: {:.6}  test mse: {:.6}  test r: {:.6}",
        record.final_mse(),
        test_mse,
        test_r
    );

    save_model(
        &ModelBundle {
            mlp,
            codebooks: prepared.codebooks,
            target_bounds: prepared.bounds,
        },
        &args.model,
    )?;
    println!("model written to {}", args.model.display());

    if let Some(history) = &args.history {
        write_text(history, &history_csv(&record))?;
        println!("history written to {}", history.display());
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<Candidate>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

fn cmd_search(args: &SearchArgs) -> Result<()> {
    let (settings, map) = resolve_fit(&args.fit)?;
    let grid = match args.grid.clone().or_else(|| map.get("grid").cloned()) {
        Some(s) => parse_grid(&s)?,
        None => default_grid(),
    };
    let repeats = match args.repeats {
        Some(r) => r,
        None => config_value(&map, "repeats")?.unwrap_or(3),
    };

    let prepared = prepare(&args.data, &settings)?;
    let cfg = SearchConfig {
        repeats,
        seed_base: settings.cfg.seed,
        train: settings.cfg,
    };
    let result = run_grid(&prepared.train, &prepared.test, &grid, &cfg)?;
    print!("{result}");
    let best = result.best_row();
    let outcome = best.outcome.as_ref().expect("selected row has an outcome");
    println!(
        "selected {} (seed {}): test r {:.6}, test mse {:.6}",
        best.candidate, outcome.seed, outcome.test_r, outcome.test_mse
    );

    write_text(&args.out, &result.to_csv())?;
    println!("results written to {}", args.out.display());

    if let Some(model_path) = &args.model {
        save_model(
            &ModelBundle {
                mlp: outcome.model.clone(),
                codebooks: prepared.codebooks,
                target_bounds: prepared.bounds,
            },
            model_path,
        )?;
        println!("model written to {}", model_path.display());
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;
    let ds = read_csv(&args.data)?;
    // No cleaning here: rows that do not match the model's codebooks are an
    // error, not something to discard silently.
    let matrix = encode_dataset(&ds, &bundle.codebooks, bundle.target_bounds)?;
    let predictions = bundle.mlp.predict_matrix(&matrix)?;

    let mode = match args.mape_mode.to_ascii_lowercase().as_str() {
        "plain" => MapeMode::Plain,
        "shifted" => MapeMode::Shifted { shift: args.shift },
        other => {
            return Err(Error::InvalidParam(format!(
                "unknown mape mode `{other}` (expected plain or shifted)"
            )))
        }
    };
    let report = build_report(matrix.targets(), &predictions, mode)?;
    println!("{report}");
    write_text(&args.report, &report.to_csv())?;
    println!("report written to {}", args.report.display());
    Ok(())
}

/// Reads a batch-prediction CSV: the eight feature columns in order, with
/// an optional trailing demand column that is ignored.
fn read_feature_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let features: Vec<&str> = FEATURE_NAMES.to_vec();
    let with_demand: Vec<&str> = features.iter().copied().chain(["demand"]).collect();
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != features && found != with_demand {
        return Err(Error::HeaderMismatch {
            expected: features.join(","),
            found: found.join(","),
        });
    }

    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        match record {
            Ok(rec) if rec.len() >= FEATURE_COUNT => rows.push(RawRow {
                soup: rec[0].to_string(),
                main_dish: rec[1].to_string(),
                side_dish: rec[2].to_string(),
                side_helper: rec[3].to_string(),
                beverage: rec[4].to_string(),
                weekday: rec[5].to_string(),
                holiday: rec[6].to_string(),
                season: rec[7].to_string(),
                demand: 0,
            }),
            Ok(rec) => bad.push((i + 1, format!("expected at least 8 fields, got {}", rec.len()))),
            Err(e) => bad.push((i + 1, e.to_string())),
        }
    }
    if !bad.is_empty() {
        return Err(Error::RowParse(bad));
    }
    if rows.is_empty() {
        return Err(Error::InvalidParam("prediction input has no rows".into()));
    }
    Ok(rows)
}

fn predict_row(bundle: &ModelBundle, row: &RawRow) -> Result<f64> {
    let (inputs, _) = encode_row(row, &bundle.codebooks, bundle.target_bounds)?;
    let out = bundle.mlp.predict_scalar(&inputs)?;
    Ok(bundle.target_bounds.denormalize(out))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;

    if let Some(data) = &args.data {
        let rows = read_feature_csv(data)?;
        let mut out = String::new();
        out.push_str(&FEATURE_NAMES.join(","));
        out.push_str(",predicted_demand\n");
        for row in &rows {
            let demand = predict_row(&bundle, row)?;
            let fields: Vec<&str> = (0..FEATURE_COUNT).map(|i| row.feature(i)).collect();
            out.push_str(&format!("{},{:.3}\n", fields.join(","), demand));
        }
        match &args.out {
            Some(path) => {
                write_text(path, &out)?;
                println!("predictions written to {}", path.display());
            }
            None => print!("{out}"),
        }
        return Ok(());
    }

    let fields = [
        ("soup", &args.soup),
        ("main_dish", &args.main_dish),
        ("side_dish", &args.side_dish),
        ("side_helper", &args.side_helper),
        ("beverage", &args.beverage),
        ("weekday", &args.weekday),
        ("holiday", &args.holiday),
        ("season", &args.season),
    ];
    let missing: Vec<&str> = fields
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidParam(format!(
            "predict needs --data or all eight feature flags; missing: {}",
            missing.join(", ")
        )));
    }
    let row = RawRow {
        soup: args.soup.clone().unwrap(),
        main_dish: args.main_dish.clone().unwrap(),
        side_dish: args.side_dish.clone().unwrap(),
        side_helper: args.side_helper.clone().unwrap(),
        beverage: args.beverage.clone().unwrap(),
        weekday: args.weekday.clone().unwrap(),
        holiday: args.holiday.clone().unwrap(),
        season: args.season.clone().unwrap(),
        demand: 0,
    };
    let demand = predict_row(&bundle, &row)?;
    println!(
        "predicted demand: {:.3} (rounded: {})",
        demand,
        demand.round().max(0.0) as u64
    );
    Ok(())
}
