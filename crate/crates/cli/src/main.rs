use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collision_core::collision::{estimate_gramian, precision_recall_from_s, recover_collision_matrix};
use collision_core::contrastive::{train_contrastive, Architecture, ContrastiveConfig, ContrastiveModel, PriorCorrected};
use collision_core::harness::{
    divergence_curve, run_scenario, write_divergence_csv, write_summary_csv, write_timings_csv, DataSource, Preset,
    RecoverySettings, ScenarioConfig,
};
use collision_core::matrix::Matrix;
use collision_core::mixture::{pber_from_s, Dataset, GaussianMixture, MixtureSpec};
use collision_core::nn::{write_loss_trace, TrainConfig};
use collision_core::posterior::{estimate_posterior, ComparisonSets, DEFAULT_COMPARISONS};
use collision_core::Error;
use serde::Serialize;

const CONFIG_ERROR: u8 = 2;
const NUMERICAL_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "collision", version, about = "Collision-matrix estimation and posterior recovery")]
struct Cli {
    /// Random seed; for run-scenario it replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled dataset from a Gaussian mixture.
    GenData(GenData),
    /// Monte Carlo estimate of the true collision matrix, BER and PBER.
    TrueS(TrueS),
    /// Train the pairwise similarity model on a labeled CSV.
    TrainV(TrainV),
    /// Estimate the Gramian from a trained similarity model.
    EstimateG(EstimateG),
    /// Recover the collision matrix from a Gramian.
    RecoverS(RecoverS),
    /// Estimate per-input posteriors.
    Posterior(PosteriorArgs),
    /// Run a full scenario and write a report.
    RunScenario(RunScenario),
    /// Tabulate the collision divergence against classical divergences.
    DivergenceCurve(DivergenceCurve),
}

#[derive(Args)]
struct MixtureSource {
    /// Named preset: a3, a4, a5, b<beta> (e.g. b0.25) or c. Ignored when --config is given.
    #[arg(long, default_value = "a3")]
    preset: String,
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    source: MixtureSource,
    /// Points per class; defaults to the preset's count.
    #[arg(long)]
    per_class: Option<usize>,
}

#[derive(Args)]
struct TrueS {
    #[command(flatten)]
    source: MixtureSource,
    /// Monte Carlo draws per row.
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
}

#[derive(Args)]
struct TrainV {
    /// Labeled CSV with columns f_1..f_d,label.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Train on a single input order per pair.
    #[arg(long)]
    no_swap: bool,
}

#[derive(Args)]
struct EstimateG {
    /// Similarity model JSON from train-v.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    m_per_cell: usize,
}

#[derive(Args)]
struct RecoverS {
    /// Gramian CSV.
    #[arg(long)]
    gramian: PathBuf,
    /// Penalty weight λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Step size η.
    #[arg(long)]
    eta: Option<f64>,
    /// Residual target γ.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Skip re-symmetrization (for non-uniform priors).
    #[arg(long)]
    no_symmetry: bool,
    /// Comma-separated class priors for precision/recall; uniform by default.
    #[arg(long, value_delimiter = ',')]
    priors: Option<Vec<f64>>,
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    model: PathBuf,
    /// Collision matrix CSV.
    #[arg(long)]
    s_hat: PathBuf,
    /// Labeled CSV the comparison points are drawn from (a validation split).
    #[arg(long)]
    comparison: PathBuf,
    /// Comparison points per class.
    #[arg(long, default_value_t = DEFAULT_COMPARISONS)]
    m: usize,
    /// CSV of query feature vectors with a header row.
    #[arg(long, conflicts_with = "x")]
    queries: Option<PathBuf>,
    /// A single comma-separated query; the estimate is printed as JSON.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunScenario {
    /// Preset used when no --config is given.
    #[arg(long, default_value = "a3")]
    preset: String,
}

#[derive(Args)]
struct DivergenceCurve {
    /// Largest μ on the grid.
    #[arg(long, default_value_t = 3.0)]
    mu_max: f64,
    #[arg(long, default_value_t = 0.25)]
    step: f64,
}

/// Failure with its exit code.
enum Failure {
    Config(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn parse_preset(name: &str) -> Outcome<Preset> {
    let lower = name.to_ascii_lowercase();
    let preset = match lower.as_str() {
        "c" => Preset::C,
        s if s.starts_with('a') => Preset::A { k: s[1..].parse().map_err(|_| config_error(format!("bad preset {name:?}")))? },
        s if s.starts_with('b') => Preset::B { beta: s[1..].parse().map_err(|_| config_error(format!("bad preset {name:?}")))? },
        _ => return Err(config_error(format!("unknown preset {name:?}; use a3, a4, a5, b<beta> or c"))),
    };
    preset.mixture()?;
    Ok(preset)
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| config_error(format!("cannot open {}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_matrix(dir: &Path, name: &str, m: &Matrix<f64>) -> Outcome {
    let mut w = create(dir, name)?;
    m.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Outcome {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn read_dataset(path: &Path) -> Outcome<Dataset> {
    Ok(Dataset::read_csv(open(path)?, None)?)
}

fn mixture(cli: &Cli, source: &MixtureSource) -> Outcome<(GaussianMixture, Option<Preset>)> {
    match &cli.config {
        Some(path) => {
            let spec: MixtureSpec = serde_json::from_reader(open(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            Ok((GaussianMixture::try_from(spec)?, None))
        }
        None => {
            let preset = parse_preset(&source.preset)?;
            Ok((preset.mixture()?, Some(preset)))
        }
    }
}

fn no_config(cli: &Cli, command: &str) -> Outcome {
    match cli.config {
        Some(_) => Err(config_error(format!("{command} takes no --config"))),
        None => Ok(()),
    }
}

fn gen_data(cli: &Cli, args: &GenData) -> Outcome {
    let (gm, preset) = mixture(cli, &args.source)?;
    let n = args.per_class.or(preset.map(Preset::points_per_class)).unwrap_or(250);
    let data = gm.sample(n, cli.seed.unwrap_or(0))?;
    let mut w = create(&cli.out, "data.csv")?;
    data.write_csv(&mut w)?;
    w.flush()?;
    write_json(&cli.out, "mixture.json", &MixtureSpec::from(gm))?;
    eprintln!("wrote {} points to {}", data.len(), cli.out.join("data.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct TrueSReport {
    s: Matrix<f64>,
    s_std_err: Matrix<f64>,
    mc_samples_per_row: usize,
    ber: f64,
    ber_std_err: f64,
    pber: f64,
}

fn true_s(cli: &Cli, args: &TrueS) -> Outcome {
    let (gm, _) = mixture(cli, &args.source)?;
    let seed = cli.seed.unwrap_or(0);
    let truth = gm.true_collision_matrix(args.mc_samples, seed)?;
    let ber = gm.bayes_error_rate(args.mc_samples, seed.wrapping_add(1))?;
    let pber = pber_from_s(&truth.mean, gm.priors())?;
    write_matrix(&cli.out, "true_s.csv", &truth.mean)?;
    let report = TrueSReport {
        s: truth.mean,
        s_std_err: truth.std_err,
        mc_samples_per_row: truth.samples_per_row,
        ber: ber.value,
        ber_std_err: ber.std_err,
        pber,
    };
    write_json(&cli.out, "true_s.json", &report)?;
    emit(&format!("BER {:.4} ± {:.4}, PBER {:.4}", report.ber, report.ber_std_err, report.pber))
}

fn train_v(cli: &Cli, args: &TrainV) -> Outcome {
    let mut cfg: ContrastiveConfig = match &cli.config {
        Some(path) => serde_json::from_reader(open(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
        None => ContrastiveConfig::default(),
    };
    let Architecture { hidden, depth, .. } = &mut cfg.architecture;
    *hidden = args.hidden.unwrap_or(*hidden);
    *depth = args.depth.unwrap_or(*depth);
    let TrainConfig { epochs, learning_rate, batch_size, seed, .. } = &mut cfg.train;
    *epochs = args.epochs.unwrap_or(*epochs);
    *learning_rate = args.learning_rate.unwrap_or(*learning_rate);
    *batch_size = args.batch_size.unwrap_or(*batch_size);
    *seed = cli.seed.unwrap_or(*seed);
    cfg.swap_order &= !args.no_swap;
    cfg.train.validate().map_err(|e| config_error(e.to_string()))?;
    let data = read_dataset(&args.data)?;
    let model = train_contrastive(&data, &cfg)?;
    let mut w = create(&cli.out, "model.json")?;
    model.to_json(&mut w)?;
    w.flush()?;
    let mut w = create(&cli.out, "loss_trace.csv")?;
    write_loss_trace(&model.metadata.loss_trace, &mut w)?;
    w.flush()?;
    if let Some(last) = model.metadata.loss_trace.last() {
        eprintln!("final training loss {last:.4}");
    }
    Ok(())
}

fn load_model(path: &Path) -> Outcome<ContrastiveModel> {
    Ok(ContrastiveModel::from_json(open(path)?)?)
}

fn estimate_g(cli: &Cli, args: &EstimateG) -> Outcome {
    no_config(cli, "estimate-g")?;
    let model = load_model(&args.model)?;
    let data = read_dataset(&args.data)?;
    let v = PriorCorrected { inner: &model, k: data.k() };
    let est = estimate_gramian(&v, &data, args.m_per_cell, cli.seed.unwrap_or(0))?;
    write_matrix(&cli.out, "gramian.csv", &est.g)?;
    write_json(&cli.out, "gramian.json", &est)?;
    Ok(())
}

#[derive(Serialize)]
struct ClassRow {
    class: usize,
    precision: Option<f64>,
    recall: f64,
}

#[derive(Serialize)]
struct RecoveryReport<'a> {
    converged: bool,
    residual: f64,
    iterations: usize,
    diag_dominant: bool,
    pber: f64,
    warnings: &'a [String],
}

fn recover_s(cli: &Cli, args: &RecoverS) -> Outcome {
    let settings: RecoverySettings = match &cli.config {
        Some(path) => serde_json::from_reader(open(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
        None => RecoverySettings::default(),
    };
    let g = Matrix::read_csv(open(&args.gramian)?)?;
    let k = g.rows();
    let priors = args.priors.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
    if priors.len() != k {
        return Err(config_error(format!("{} priors for a {k}-class Gramian", priors.len())));
    }
    let settings = RecoverySettings {
        penalty: args.lambda.or(settings.penalty),
        learning_rate: args.eta.or(settings.learning_rate),
        tolerance: args.gamma.or(settings.tolerance),
        max_iterations: args.max_iterations.or(settings.max_iterations),
        enforce_symmetry: if args.no_symmetry { Some(false) } else { settings.enforce_symmetry },
    };
    let uniform = priors.iter().all(|p| (p - 1.0 / k as f64).abs() < 1e-9);
    let cfg = settings.build(k, uniform);
    let (s, converged, residual, iterations, warnings, failure) = match recover_collision_matrix(&g, &cfg) {
        Ok(rec) => (rec.s, true, rec.residual, rec.iterations, rec.warnings, None),
        Err(Error::NonConvergence { residual, iterations, best, target, stalled }) => {
            let failure = Error::NonConvergence { residual, iterations, best: best.clone(), target, stalled };
            (*best, false, residual, iterations, Vec::new(), Some(failure))
        }
        Err(e) => return Err(e.into()),
    };
    write_matrix(&cli.out, "s_hat.csv", &s)?;
    let rows: Vec<ClassRow> = precision_recall_from_s(&s, &priors)?
        .into_iter()
        .enumerate()
        .map(|(class, m)| ClassRow { class: class + 1, precision: m.precision, recall: m.recall })
        .collect();
    let mut w = csv::Writer::from_writer(create(&cli.out, "precision_recall.csv")?);
    for row in &rows {
        w.serialize(row).map_err(Error::from)?;
    }
    w.flush()?;
    let report = RecoveryReport {
        converged,
        residual,
        iterations,
        diag_dominant: s.is_strictly_diag_dominant()?,
        pber: pber_from_s(&s, &priors)?,
        warnings: &warnings,
    };
    write_json(&cli.out, "recovery.json", &report)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    match failure {
        Some(e) => {
            eprintln!("best iterate written to {}", cli.out.join("s_hat.csv").display());
            Err(e.into())
        }
        None => Ok(()),
    }
}

fn posterior(cli: &Cli, args: &PosteriorArgs) -> Outcome {
    no_config(cli, "posterior")?;
    let model = load_model(&args.model)?;
    let s_hat = Matrix::read_csv(open(&args.s_hat)?)?;
    let reference = read_dataset(&args.comparison)?;
    let sets = ComparisonSets::from_dataset(&reference, args.m, cli.seed.unwrap_or(0))?;
    let v = PriorCorrected { inner: &model, k: reference.k() };
    if let Some(x) = &args.x {
        let est = estimate_posterior(&v, &s_hat, x, &sets)?;
        return emit(&serde_json::to_string_pretty(&est)?);
    }
    let Some(path) = &args.queries else {
        return Err(config_error("posterior needs --queries <csv> or --x <values>"));
    };
    let mut rd = csv::Reader::from_reader(open(path)?);
    let mut w = csv::Writer::from_writer(create(&cli.out, "posteriors.csv")?);
    let k = s_hat.rows();
    let mut header: Vec<String> = (1..=k).map(|j| format!("y_{j}")).collect();
    header.extend(["projection_distance", "condition", "warnings"].map(String::from));
    w.write_record(&header).map_err(Error::from)?;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let x: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 2, message: e.to_string() })?;
        let est = estimate_posterior(&v, &s_hat, &x, &sets)?;
        let mut row: Vec<String> = est.y_hat.iter().map(f64::to_string).collect();
        row.push(est.projection_distance.to_string());
        row.push(est.condition.to_string());
        row.push(est.warnings.join("; "));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn scenario_config(cli: &Cli, args: &RunScenario) -> Outcome<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::from_json(open(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
        None => ScenarioConfig::preset(parse_preset(&args.preset)?),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let DataSource::Csv { path, .. } = &cfg.data {
        if !path.exists() {
            return Err(config_error(format!("data file {} does not exist", path.display())));
        }
    }
    cfg.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: &Cli, args: &RunScenario) -> Outcome {
    let cfg = scenario_config(cli, args)?;
    let report = run_scenario(&cfg)?;
    write_json(&cli.out, "report.json", &report.deterministic())?;
    let mut w = create(&cli.out, "summary.csv")?;
    write_summary_csv(&report, &mut w)?;
    w.flush()?;
    let mut w = create(&cli.out, "timings.csv")?;
    write_timings_csv(&report.timings, &mut w)?;
    w.flush()?;
    for seed in &report.seeds {
        for e in &seed.errors {
            eprintln!("seed {}: {} failed: {}", seed.seed, e.stage, e.message);
        }
        for m in &seed.methods {
            if let Some(e) = &m.error {
                eprintln!("seed {} {}: {} failed: {}", seed.seed, m.method.name(), e.stage, e.message);
            }
        }
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let lines: Vec<String> = report
        .summary
        .iter()
        .map(|s| {
            format!(
                "{:<11} runs {}  median max row TVD {}  median mean row TVD {}",
                s.method.name(),
                s.runs,
                fmt(s.median_max_row_tvd),
                fmt(s.median_mean_row_tvd)
            )
        })
        .collect();
    emit(&lines.join("\n"))
}

fn curve(cli: &Cli, args: &DivergenceCurve) -> Outcome {
    no_config(cli, "divergence-curve")?;
    if !(args.step > 0.0 && args.mu_max >= 0.0 && args.mu_max.is_finite()) {
        return Err(config_error("need step > 0 and a finite mu-max >= 0"));
    }
    let n = (args.mu_max / args.step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * args.step).collect();
    let rows = divergence_curve(&grid)?;
    let mut w = create(&cli.out, "divergence_curve.csv")?;
    write_divergence_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::TrueS(a) => true_s(cli, a),
        Command::TrainV(a) => train_v(cli, a),
        Command::EstimateG(a) => estimate_g(cli, a),
        Command::RecoverS(a) => recover_s(cli, a),
        Command::Posterior(a) => posterior(cli, a),
        Command::RunScenario(a) => run(cli, a),
        Command::DivergenceCurve(a) => curve(cli, a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { NUMERICAL_FAILURE } else { CONFIG_ERROR })
        }
    }
}
