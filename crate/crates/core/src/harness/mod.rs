//! Scenario runner: presets, end-to-end pipelines for the Gramian method and
//! the baselines, and JSON reports.

mod curve;
mod tabular;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    default_temperature_grid, fit_temperature, mc_dropout_posterior, plug_in_collision_matrix, train_classifier_traced,
    ClassifierConfig, DEFAULT_ECE_BINS, DEFAULT_MC_PASSES,
};
use crate::collision::{
    estimate_gramian, precision_recall_from_s, recover_collision_matrix, ClassMetrics, Init, RecoveryConfig,
};
use crate::contrastive::{train_contrastive, ContrastiveConfig, PriorCorrected};
use crate::error::{Error, Result};
use crate::matrix::{row_tvd, tvd, Matrix};
use crate::mixture::{pber_from_s, presets, Dataset, GaussianMixture, McEstimate};
use crate::nn::FeedForwardNet;
use crate::posterior::{estimate_posteriors, ComparisonSets, DEFAULT_COMPARISONS};
use crate::rng::derive_seed;

pub use curve::{default_mu_grid, divergence_curve, write_divergence_csv, DivergenceRow};
pub use tabular::{load_csv_dataset, read_csv_dataset, CategoricalEncoding, LoadedCsv, Scaler};

pub const SCHEMA_VERSION: u32 = 1;

/// Above this ∞-norm condition number a non-dominant root is not reported.
/// Separable classes give Gramians well under 1e2; indistinguishable ones
/// push the smallest eigenvalue to the noise floor and the condition past 1e3.
/// The noise floor depends on sample size: with only tens of points per class
/// an indistinguishable pair can stay under the limit and is only warned about.
pub const GRAMIAN_CONDITION_LIMIT: f64 = 1e3;

// Stream ids for seeds derived from a run seed.
const DATA: u64 = 1;
const SPLIT: u64 = 2;
const SIMILARITY: u64 = 3;
const GRAMIAN: u64 = 4;
const COMPARISON: u64 = 5;
const CLASSIFIER: u64 = 6;
const DROPOUT_NET: u64 = 7;
const DROPOUT_PASSES: u64 = 8;
const TRUTH_S: u64 = 9;
const TRUTH_BER: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gramian,
    Naive,
    Calibrated,
    McDropout,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gramian => "gramian",
            Method::Naive => "naive",
            Method::Calibrated => "calibrated",
            Method::McDropout => "mc_dropout",
        }
    }
}

/// Named synthetic mixtures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Preset {
    /// d = 4, K ∈ {3, 4, 5}.
    A { k: usize },
    /// d = 20, K = 5, separation β.
    B { beta: f64 },
    /// Scenario B at β = 0.15.
    C,
}

impl Preset {
    pub fn mixture(self) -> Result<GaussianMixture> {
        match self {
            Preset::A { k } => presets::scenario_a(k).ok_or_else(|| Error::arg(format!("scenario A has K ∈ {{3, 4, 5}}, got {k}"))),
            Preset::B { beta } if beta > 0.0 && beta.is_finite() => Ok(presets::scenario_b(beta)),
            Preset::B { beta } => Err(Error::arg(format!("scenario B needs β > 0, got {beta}"))),
            Preset::C => Ok(presets::scenario_c()),
        }
    }

    pub fn points_per_class(self) -> usize {
        match self {
            Preset::A { .. } => presets::SCENARIO_A_POINTS_PER_CLASS,
            Preset::B { .. } | Preset::C => presets::SCENARIO_B_POINTS_PER_CLASS,
        }
    }

    pub fn name(self) -> String {
        match self {
            Preset::A { k } => format!("scenario_a_k{k}"),
            Preset::B { beta } => format!("scenario_b_beta{beta}"),
            Preset::C => "scenario_c".into(),
        }
    }

    /// Every preset the experiments use.
    pub fn all() -> Vec<Preset> {
        let mut v: Vec<Preset> = (3..=5).map(|k| Preset::A { k }).collect();
        v.extend(presets::SCENARIO_B_BETAS.iter().map(|&beta| Preset::B { beta }));
        v.push(Preset::C);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Preset { preset: Preset },
    Mixture { mixture: GaussianMixture },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

fn yes() -> bool {
    true
}

/// Recovery settings; unset fields take the per-K defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoverySettings {
    pub penalty: Option<f64>,
    pub learning_rate: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Defaults to on for uniform priors and off otherwise.
    pub enforce_symmetry: Option<bool>,
}

impl RecoverySettings {
    pub fn build(&self, k: usize, uniform_priors: bool) -> RecoveryConfig<f64> {
        let d = RecoveryConfig::for_classes(k);
        RecoveryConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            penalty: self.penalty.unwrap_or(d.penalty),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            init: Init::Identity,
            enforce_symmetry: self.enforce_symmetry.unwrap_or(uniform_priors),
        }
    }
}

/// Which split the Gramian cells average over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianSplit {
    #[default]
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub data: DataSource,
    /// Points sampled per class; defaults to the preset's count (synthetic only).
    pub samples_per_class: Option<usize>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub recovery: RecoverySettings,
    pub contrastive: ContrastiveConfig,
    pub classifier: ClassifierConfig,
    pub m_per_cell: usize,
    pub gramian_split: GramianSplit,
    /// Comparison points per class for posterior estimates.
    pub comparison_points: usize,
    /// Test points whose posteriors are estimated; 0 skips the stage.
    pub posterior_queries: usize,
    /// Monte Carlo draws per row for the true `S`.
    pub truth_mc_samples: usize,
    pub train_fraction: f64,
    pub validate_fraction: f64,
    pub ece_bins: usize,
    pub temperature_grid: Option<Vec<f64>>,
    pub mc_dropout_passes: usize,
    pub mc_dropout_rate: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(Preset::A { k: 3 })
    }
}

impl ScenarioConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: preset.name(),
            data: DataSource::Preset { preset },
            samples_per_class: None,
            methods: vec![Method::Gramian, Method::Naive, Method::Calibrated, Method::McDropout],
            seeds: vec![0],
            recovery: RecoverySettings::default(),
            contrastive: ContrastiveConfig::default(),
            classifier: ClassifierConfig::default(),
            m_per_cell: 10_000,
            gramian_split: GramianSplit::Train,
            comparison_points: DEFAULT_COMPARISONS,
            posterior_queries: 200,
            truth_mc_samples: 200_000,
            train_fraction: 0.8,
            validate_fraction: 0.1,
            ece_bins: DEFAULT_ECE_BINS,
            temperature_grid: None,
            mc_dropout_passes: DEFAULT_MC_PASSES,
            mc_dropout_rate: 0.1,
        }
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let config: Self = serde_json::from_reader(r)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::arg(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.methods.is_empty() {
            return Err(Error::arg("at least one method is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::arg("at least one seed is required"));
        }
        if self.m_per_cell == 0 || self.comparison_points == 0 {
            return Err(Error::arg("m_per_cell and comparison_points must be at least 1"));
        }
        if self.ece_bins == 0 || self.mc_dropout_passes == 0 {
            return Err(Error::arg("ece_bins and mc_dropout_passes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.mc_dropout_rate) {
            return Err(Error::arg("mc_dropout_rate must lie in [0, 1)"));
        }
        if !(self.train_fraction > 0.0 && self.validate_fraction > 0.0 && self.train_fraction + self.validate_fraction < 1.0) {
            return Err(Error::arg("train and validation fractions must be positive and leave a test split"));
        }
        if self.samples_per_class == Some(0) {
            return Err(Error::arg("samples_per_class must be at least 1"));
        }
        if let DataSource::Preset { preset } = self.data {
            preset.mixture()?;
        }
        self.contrastive.train.validate()?;
        self.classifier.train.validate()?;
        Ok(())
    }
}

/// A failed pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    pub numerical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seed: u64,
    pub method: Option<Method>,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub diag_dominant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub queries: usize,
    pub failures: usize,
    /// Mean TVD to the true posteriors (synthetic data only).
    pub mean_tvd: Option<f64>,
    pub mean_projection_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub s_hat: Option<Matrix<f64>>,
    pub gramian: Option<Matrix<f64>>,
    pub max_row_tvd: Option<f64>,
    pub mean_row_tvd: Option<f64>,
    pub pber: Option<f64>,
    pub class_metrics: Option<Vec<ClassMetrics<f64>>>,
    pub recovery: Option<RecoverySummary>,
    pub posterior: Option<PosteriorSummary>,
    pub temperature: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub error: Option<StageError>,
}

impl MethodReport {
    fn new(method: Method) -> Self {
        Self {
            method,
            s_hat: None,
            gramian: None,
            max_row_tvd: None,
            mean_row_tvd: None,
            pber: None,
            class_metrics: None,
            recovery: None,
            posterior: None,
            temperature: None,
            loss_trace: Vec::new(),
            warnings: Vec::new(),
            error: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub class_counts: Vec<usize>,
    pub methods: Vec<MethodReport>,
    pub errors: Vec<StageError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub s: Matrix<f64>,
    pub s_std_err: Matrix<f64>,
    pub mc_samples_per_row: usize,
    pub ber: McEstimate,
    pub pber: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub k: usize,
    pub d: usize,
    pub priors: Vec<f64>,
    pub class_names: Option<Vec<String>>,
    pub scaler: Option<Scaler>,
    pub categorical: Vec<CategoricalEncoding>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub median_max_row_tvd: Option<f64>,
    pub median_mean_row_tvd: Option<f64>,
    pub median_posterior_tvd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub dataset: DatasetInfo,
    pub truth: Option<TruthReport>,
    pub seeds: Vec<SeedReport>,
    pub summary: Vec<MethodSummary>,
    /// Wall-clock seconds per stage. Not part of the deterministic output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn method_summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// The report without timings: a pure function of the config.
    pub fn deterministic(&self) -> RunReport {
        RunReport { timings: Vec::new(), ..self.clone() }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

enum Source {
    Synthetic(GaussianMixture),
    Fixed(Box<LoadedCsv>),
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

struct Clock<'a> {
    seed: u64,
    method: Option<Method>,
    timings: &'a mut Vec<StageTiming>,
}

impl Clock<'_> {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            seed: self.seed,
            method: self.method,
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn stage_error(stage: &str, e: &Error) -> StageError {
    StageError { stage: stage.to_string(), message: e.to_string(), numerical: e.is_numerical() }
}

struct Splits {
    train: Dataset,
    validation: Dataset,
    test: Dataset,
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    mixture: Option<&'a GaussianMixture>,
    truth: Option<&'a TruthReport>,
    priors: &'a [f64],
    seed: u64,
}

/// Runs every configured method for every seed.
///
/// Configuration and data-loading problems fail the whole run. Failures
/// inside a method's pipeline are recorded on that method's report with
/// the stage name, and the remaining methods still run.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    let source = match &config.data {
        DataSource::Preset { preset } => Source::Synthetic(preset.mixture()?),
        DataSource::Mixture { mixture } => Source::Synthetic(mixture.clone()),
        DataSource::Csv { path, label_column, standardize } => {
            let file = BufReader::new(File::open(path)?);
            Source::Fixed(Box::new(read_csv_dataset(file, label_column, *standardize)?))
        }
    };

    let base_seed = config.seeds[0];
    let (dataset, truth) = match &source {
        Source::Synthetic(gm) => {
            let truth_s = gm.true_collision_matrix(config.truth_mc_samples, derive_seed(base_seed, TRUTH_S))?;
            let ber = gm.bayes_error_rate(config.truth_mc_samples, derive_seed(base_seed, TRUTH_BER))?;
            let pber = pber_from_s(&truth_s.mean, gm.priors())?;
            let info = DatasetInfo {
                k: gm.k(),
                d: gm.dim(),
                priors: gm.priors().to_vec(),
                class_names: None,
                scaler: None,
                categorical: Vec::new(),
                warnings: Vec::new(),
            };
            let truth = TruthReport {
                s: truth_s.mean,
                s_std_err: truth_s.std_err,
                mc_samples_per_row: truth_s.samples_per_row,
                ber,
                pber,
            };
            (info, Some(truth))
        }
        Source::Fixed(loaded) => {
            let counts = loaded.dataset.class_counts();
            let n = loaded.dataset.len() as f64;
            let info = DatasetInfo {
                k: loaded.dataset.k(),
                d: loaded.dataset.dim(),
                priors: counts.iter().map(|&c| c as f64 / n).collect(),
                class_names: Some(loaded.class_names.clone()),
                scaler: loaded.scaler.clone(),
                categorical: loaded.categorical.clone(),
                warnings: loaded.warnings.clone(),
            };
            (info, None)
        }
    };

    let mixture = match &source {
        Source::Synthetic(gm) => Some(gm),
        Source::Fixed(_) => None,
    };
    let outcomes: Vec<(SeedReport, Vec<StageTiming>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let ctx = Context { config, mixture, truth: truth.as_ref(), priors: &dataset.priors, seed };
            let data = match &source {
                Source::Synthetic(gm) => {
                    let n = config.samples_per_class.unwrap_or(match config.data {
                        DataSource::Preset { preset } => preset.points_per_class(),
                        _ => presets::SCENARIO_A_POINTS_PER_CLASS,
                    });
                    gm.sample(n, derive_seed(seed, DATA))
                }
                Source::Fixed(loaded) => Ok(loaded.dataset.clone()),
            };
            run_seed(&ctx, data)
        })
        .collect();

    let mut seeds = Vec::with_capacity(outcomes.len());
    let mut timings = Vec::new();
    for (report, t) in outcomes {
        seeds.push(report);
        timings.extend(t);
    }
    let summary = config
        .methods
        .iter()
        .map(|&method| {
            let runs: Vec<&MethodReport> =
                seeds.iter().flat_map(|s| s.methods.iter()).filter(|m| m.method == method && m.s_hat.is_some()).collect();
            MethodSummary {
                method,
                runs: runs.len(),
                median_max_row_tvd: median(runs.iter().filter_map(|m| m.max_row_tvd).collect()),
                median_mean_row_tvd: median(runs.iter().filter_map(|m| m.mean_row_tvd).collect()),
                median_posterior_tvd: median(runs.iter().filter_map(|m| m.posterior.as_ref()?.mean_tvd).collect()),
            }
        })
        .collect();

    Ok(RunReport { schema_version: SCHEMA_VERSION, config: config.clone(), dataset, truth, seeds, summary, timings })
}

fn run_seed(ctx: &Context, data: Result<Dataset>) -> (SeedReport, Vec<StageTiming>) {
    let mut timings = Vec::new();
    let mut report = SeedReport { seed: ctx.seed, class_counts: Vec::new(), methods: Vec::new(), errors: Vec::new() };
    let cfg = ctx.config;
    let splits = data.and_then(|d| {
        report.class_counts = d.class_counts();
        let (train, validation, test) = d.split(cfg.train_fraction, cfg.validate_fraction, derive_seed(ctx.seed, SPLIT))?;
        Ok(Splits { train, validation, test })
    });
    let splits = match splits {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(stage_error("data", &e));
            return (report, timings);
        }
    };

    // Shared by the naive and calibrated methods; built on first use.
    let mut classifier: Option<std::result::Result<(FeedForwardNet, Vec<f64>), StageError>> = None;
    for &method in &cfg.methods {
        let mut clock = Clock { seed: ctx.seed, method: Some(method), timings: &mut timings };
        let mut out = MethodReport::new(method);
        let result = match method {
            Method::Gramian => gramian_method(ctx, &splits, &mut clock, &mut out),
            Method::Naive | Method::Calibrated => {
                let trained = classifier.get_or_insert_with(|| {
                    let mut c = cfg.classifier.clone();
                    c.train.seed = derive_seed(ctx.seed, CLASSIFIER);
                    clock
                        .time("train_classifier", || train_classifier_traced(&splits.train, &c))
                        .map(|(net, r)| (net, r.loss_trace))
                        .map_err(|e| stage_error("train_classifier", &e))
                });
                match trained {
                    Ok((net, trace)) => {
                        out.loss_trace = trace.clone();
                        classifier_method(ctx, &splits, net, method, &mut clock, &mut out)
                    }
                    Err(e) => Err(e.clone()),
                }
            }
            Method::McDropout => dropout_method(ctx, &splits, &mut clock, &mut out),
        };
        if let Err(e) = result {
            out.error = Some(e);
        }
        report.methods.push(out);
    }
    (report, timings)
}

fn attach<T>(stage: &str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|e| stage_error(stage, &e))
}

/// Fills the truth-dependent and derived metrics for an estimated `Ŝ`.
fn score_s(ctx: &Context, s_hat: Matrix<f64>, out: &mut MethodReport) -> std::result::Result<(), StageError> {
    if let Some(truth) = ctx.truth {
        let (max, mean) = attach("metrics", row_tvd(&s_hat, &truth.s))?;
        out.max_row_tvd = Some(max);
        out.mean_row_tvd = Some(mean);
    }
    out.pber = Some(attach("metrics", pber_from_s(&s_hat, ctx.priors))?);
    out.class_metrics = Some(attach("metrics", precision_recall_from_s(&s_hat, ctx.priors))?);
    out.s_hat = Some(s_hat);
    Ok(())
}

fn gramian_method(ctx: &Context, splits: &Splits, clock: &mut Clock, out: &mut MethodReport) -> std::result::Result<(), StageError> {
    let cfg = ctx.config;
    let k = splits.train.k();
    let mut vcfg: ContrastiveConfig = cfg.contrastive.clone();
    vcfg.train.seed = derive_seed(ctx.seed, SIMILARITY);
    let model = attach("train_v", clock.time("train_v", || train_contrastive(&splits.train, &vcfg)))?;
    out.loss_trace = model.metadata.loss_trace.clone();
    let uniform = ctx.priors.iter().all(|p| (p - 1.0 / k as f64).abs() < 1e-9);
    if !uniform {
        out.warnings.push("class priors are not uniform; similarity correction and symmetric recovery assume they are".into());
    }
    let v = PriorCorrected { inner: &model, k };
    let cells = match cfg.gramian_split {
        GramianSplit::Train => &splits.train,
        GramianSplit::Validation => &splits.validation,
    };
    let g = attach(
        "estimate_g",
        clock.time("estimate_g", || estimate_gramian(&v, cells, cfg.m_per_cell, derive_seed(ctx.seed, GRAMIAN))),
    )?;
    out.gramian = Some(g.g.clone());

    let rcfg = cfg.recovery.build(k, uniform);
    let (s_hat, summary) = match clock.time("recover_s", || recover_collision_matrix(&g.g, &rcfg)) {
        Ok(rec) => {
            out.warnings.extend(rec.warnings.iter().cloned());
            let summary = RecoverySummary {
                converged: true,
                residual: rec.residual,
                iterations: rec.iterations,
                diag_dominant: rec.diag_dominant,
            };
            (rec.s, summary)
        }
        Err(Error::NonConvergence { residual, iterations, best, target, .. }) => {
            out.warnings.push(format!(
                "recovery stopped at residual {residual:.3e} above target {target:.3e}; using the last iterate"
            ));
            let dominant = best.is_strictly_diag_dominant().unwrap_or(false);
            (*best, RecoverySummary { converged: false, residual, iterations, diag_dominant: dominant })
        }
        Err(e) => return Err(stage_error("recover_s", &e)),
    };
    let dominant = summary.diag_dominant;
    out.recovery = Some(summary);
    if !dominant {
        let condition = g.g.condition_inf().unwrap_or(f64::INFINITY);
        if !(condition <= GRAMIAN_CONDITION_LIMIT) {
            out.warnings.push(format!(
                "recovered matrix is not strictly diagonally dominant and the Gramian is nearly singular \
                 (condition {condition:.3e}): classes are not separable, so no metrics are reported"
            ));
            out.s_hat = Some(s_hat);
            return Ok(());
        }
        out.warnings.push("recovered matrix is not strictly diagonally dominant: the root may not be unique".into());
    }
    score_s(ctx, s_hat.clone(), out)?;

    if cfg.posterior_queries > 0 {
        let sets = attach(
            "posterior",
            ComparisonSets::from_dataset(&splits.validation, cfg.comparison_points, derive_seed(ctx.seed, COMPARISON)),
        )?;
        let n = cfg.posterior_queries.min(splits.test.len());
        let queries: Vec<Vec<f64>> = (0..n).map(|i| splits.test.x(i).to_vec()).collect();
        let estimates = attach("posterior", clock.time("posterior", || estimate_posteriors(&v, &s_hat, &queries, &sets)))?;
        let mut tvds = Vec::new();
        if let Some(gm) = ctx.mixture {
            for (q, est) in queries.iter().zip(&estimates) {
                let truth = attach("posterior", gm.true_posterior(q))?;
                tvds.push(tvd(est.y_hat.as_slice(), truth.as_slice()));
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let dist: Vec<f64> = estimates.iter().map(|e| e.projection_distance).collect();
        out.posterior = Some(PosteriorSummary {
            queries: n,
            failures: 0,
            mean_tvd: mean(&tvds),
            mean_projection_distance: mean(&dist),
        });
    }
    Ok(())
}

fn classifier_method(
    ctx: &Context,
    splits: &Splits,
    net: &FeedForwardNet,
    method: Method,
    clock: &mut Clock,
    out: &mut MethodReport,
) -> std::result::Result<(), StageError> {
    let s_hat = if method == Method::Calibrated {
        let grid = ctx.config.temperature_grid.clone().unwrap_or_else(default_temperature_grid);
        let cal = attach(
            "fit_temperature",
            clock.time("fit_temperature", || fit_temperature(net, &splits.validation, &grid, ctx.config.ece_bins)),
        )?;
        out.temperature = Some(cal.temperature);
        attach("plug_in", clock.time("plug_in", || plug_in_collision_matrix(|x| cal.predict_proba(x), &splits.train)))?
    } else {
        attach("plug_in", clock.time("plug_in", || plug_in_collision_matrix(|x| net.predict_proba(x), &splits.train)))?
    };
    score_s(ctx, s_hat, out)
}

/// Stable per-point seed so dropout masks differ between inputs.
fn point_seed(seed: u64, x: &[f64]) -> u64 {
    x.iter().fold(seed, |acc, v| derive_seed(acc, v.to_bits()))
}

fn dropout_method(ctx: &Context, splits: &Splits, clock: &mut Clock, out: &mut MethodReport) -> std::result::Result<(), StageError> {
    let cfg = ctx.config;
    let mut c = cfg.classifier.clone();
    c.architecture.dropout = cfg.mc_dropout_rate;
    c.train.seed = derive_seed(ctx.seed, DROPOUT_NET);
    let (net, report) = attach("train_classifier", clock.time("train_classifier", || train_classifier_traced(&splits.train, &c)))?;
    out.loss_trace = report.loss_trace;
    if !net.has_dropout() {
        out.warnings.push("mc_dropout_rate is 0; MC dropout reduces to the plain classifier".into());
    }
    let passes = cfg.mc_dropout_passes;
    let base = derive_seed(ctx.seed, DROPOUT_PASSES);
    let s_hat = attach(
        "plug_in",
        clock.time("plug_in", || {
            plug_in_collision_matrix(|x| Ok(mc_dropout_posterior(&net, x, passes, point_seed(base, x))?.posterior), &splits.train)
        }),
    )?;
    score_s(ctx, s_hat, out)
}

/// Flat CSV extract of a report: one row per (seed, method).
pub fn write_summary_csv<W: std::io::Write>(report: &RunReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["seed", "method", "max_row_tvd", "mean_row_tvd", "pber", "posterior_tvd", "error"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for s in &report.seeds {
        for m in &s.methods {
            wr.write_record([
                s.seed.to_string(),
                m.method.name().to_string(),
                opt(m.max_row_tvd),
                opt(m.mean_row_tvd),
                opt(m.pber),
                opt(m.posterior.as_ref().and_then(|p| p.mean_tvd)),
                m.error.as_ref().map(|e| format!("{}: {}", e.stage, e.message)).unwrap_or_default(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Timings as CSV: seed, method, stage, seconds.
pub fn write_timings_csv<W: std::io::Write>(timings: &[StageTiming], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["seed", "method", "stage", "seconds"])?;
    for t in timings {
        wr.write_record([t.seed.to_string(), t.method.map_or("", Method::name).to_string(), t.stage.clone(), t.seconds.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Count of methods per kind across seeds, for quick inspection.
pub fn method_counts(report: &RunReport) -> BTreeMap<Method, usize> {
    let mut m = BTreeMap::new();
    for s in &report.seeds {
        for r in &s.methods {
            *m.entry(r.method).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::Architecture;
    use crate::nn::TrainConfig;

    fn small(methods: Vec<Method>) -> ScenarioConfig {
        let train = TrainConfig { epochs: 5, batch_size: 32, learning_rate: 0.01, momentum: 0.9, seed: 0 };
        let arch = Architecture { hidden: 16, depth: 2, dropout: 0.0 };
        ScenarioConfig {
            samples_per_class: Some(60),
            methods,
            contrastive: ContrastiveConfig { architecture: arch.clone(), train: train.clone(), swap_order: true },
            classifier: ClassifierConfig { architecture: arch, train },
            m_per_cell: 500,
            truth_mc_samples: 20_000,
            posterior_queries: 10,
            comparison_points: 5,
            mc_dropout_passes: 3,
            ..ScenarioConfig::preset(Preset::A { k: 3 })
        }
    }

    #[test]
    fn presets_roundtrip_through_json() {
        for p in Preset::all() {
            let cfg = ScenarioConfig::preset(p);
            let text = serde_json::to_string(&cfg).unwrap();
            let back = ScenarioConfig::from_json(text.as_bytes()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.data, DataSource::Preset { preset: p });
        }
        let a5 = Preset::A { k: 5 }.mixture().unwrap();
        let firsts: Vec<f64> = a5.means().iter().map(|m| m[0]).collect();
        assert_eq!(firsts, vec![-0.25, 0.25, 0.75, 2.5, -1.0]);
        assert!(a5.means().iter().all(|m| m.len() == 4 && m.iter().all(|&v| v == m[0])));
        let b = Preset::B { beta: 0.35 }.mixture().unwrap();
        let firsts: Vec<f64> = b.means().iter().map(|m| m[0]).collect();
        let want: Vec<f64> = [-3.0, -1.0, 1.0, 5.0, 10.0].iter().map(|v| v * 0.35).collect();
        assert_eq!(firsts, want);
        assert_eq!(Preset::C.mixture().unwrap(), Preset::B { beta: 0.15 }.mixture().unwrap());
        assert!(Preset::A { k: 6 }.mixture().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"methods": ["gramian"], "seeds": [4, 5]}"#.as_bytes()).unwrap();
        assert_eq!(cfg.methods, vec![Method::Gramian]);
        assert_eq!(cfg.m_per_cell, 10_000);
        assert!(ScenarioConfig::from_json(r#"{"methods": []}"#.as_bytes()).is_err());
        assert!(ScenarioConfig::from_json(r#"{"seeds": []}"#.as_bytes()).is_err());
        assert!(ScenarioConfig::from_json(r#"{"schema_version": 9}"#.as_bytes()).is_err());
    }

    #[test]
    fn runs_both_methods_and_is_deterministic() {
        let cfg = small(vec![Method::Gramian, Method::Naive]);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.deterministic().to_json_pretty().unwrap(), b.deterministic().to_json_pretty().unwrap());
        assert!(a.truth.as_ref().unwrap().ber.value > 0.0);
        let methods = &a.seeds[0].methods;
        assert_eq!(methods.len(), 2);
        for m in methods {
            assert!(m.error.is_none(), "{:?}", m.error);
        }
        assert!(methods[1].max_row_tvd.is_some());
        assert!(!a.timings.is_empty());
    }

    #[test]
    fn gramian_only_runs_build_no_classifier() {
        let a = run_scenario(&small(vec![Method::Gramian])).unwrap();
        assert!(a.timings.iter().all(|t| t.stage != "train_classifier"));
        assert_eq!(method_counts(&a).get(&Method::Gramian), Some(&1));
    }

    #[test]
    fn identical_means_warn_instead_of_reporting_numbers() {
        let mixture = GaussianMixture::uniform(vec![vec![0.0, 0.0]; 3]).unwrap();
        let cfg = ScenarioConfig {
            data: DataSource::Mixture { mixture },
            samples_per_class: Some(250),
            m_per_cell: 10_000,
            ..small(vec![Method::Gramian])
        };
        let report = run_scenario(&cfg).unwrap();
        let m = &report.seeds[0].methods[0];
        assert!(m.error.is_none(), "{:?}", m.error);
        assert!(m.max_row_tvd.is_none(), "{:?}", m.warnings);
        assert!(m.warnings.iter().any(|w| w.contains("not separable")), "{:?}", m.warnings);
    }

    #[test]
    fn csv_runs_skip_truth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let gm = Preset::A { k: 3 }.mixture().unwrap();
        gm.sample(60, 1).unwrap().write_csv(File::create(&path).unwrap()).unwrap();
        let cfg = ScenarioConfig {
            data: DataSource::Csv { path, label_column: "label".into(), standardize: true },
            ..small(vec![Method::Naive])
        };
        let report = run_scenario(&cfg).unwrap();
        assert!(report.truth.is_none());
        let m = &report.seeds[0].methods[0];
        assert!(m.max_row_tvd.is_none() && m.pber.is_some() && m.class_metrics.is_some());
        assert_eq!(report.dataset.class_names.as_ref().unwrap(), &vec!["1", "2", "3"]);
    }

    #[test]
    fn stage_errors_are_attached() {
        // One training point per class leaves no same-class pairs.
        let cfg = ScenarioConfig {
            samples_per_class: Some(4),
            train_fraction: 0.3,
            validate_fraction: 0.3,
            ..small(vec![Method::Gramian, Method::Naive])
        };
        let report = run_scenario(&cfg).unwrap();
        let g = &report.seeds[0].methods[0];
        assert_eq!(g.error.as_ref().map(|e| e.stage.as_str()), Some("train_v"));
        assert!(report.seeds[0].methods[1].error.is_none());

        let cfg = ScenarioConfig { samples_per_class: Some(3), ..small(vec![Method::Naive]) };
        let report = run_scenario(&cfg).unwrap();
        assert!(report.seeds[0].methods.is_empty());
        assert_eq!(report.seeds[0].errors[0].stage, "data");
    }
}
