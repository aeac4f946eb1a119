//! End-to-end runs driven by a TOML config.
//!
//! ```toml
//! corpus = "data/synthetic_corpus.jsonl"
//! lexicon = "data/lexicon.json"
//! output_dir = "out"
//! seed = 7
//!
//! [[backends]]
//! name = "sim"
//! kind = "simulator"
//! [backends.simulator]
//! leakage_rate = 0.5
//! entity_bias = { thaksin = { label = "against", rate = 0.6 } }
//! ```
//!
//! Relative paths resolve against the config file's directory. Stages run in
//! order (validate, generate-cf, predict, calibrate, evaluate, report) and
//! each writes its artifacts before the next starts, so a failed run leaves
//! everything up to the failing stage on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    check_tau, fit_calibrator, CalibrationContext, FoldFitter, Method, PolarityLexicon, TrainConfig, DEFAULT_TAU,
};
use crate::corpus::{balance_report, fleiss_kappa, load_annotations, load_corpus, BalanceReport, Corpus, CorpusError};
use crate::counterfactual::{augment_corpus, Augmented};
use crate::labels::StanceLabel;
use crate::metrics::{evaluate, ood_evaluate, FoldCalibrator, MetricOptions, MetricReport, OodReport};
use crate::predictor::{
    predict_batch, read_predictions, predictions_to_jsonl, ChatBackend, CompletionBackend, PredictionRecord,
    PredictorConfig, PromptTemplate, ReplayPredictor, ResponseCache, TemplateName,
};
use crate::report::{render_leaderboard, Format, LeaderboardRow};
use crate::simulator::{simulate_batch, CascadeOrder, EntityBias, SimulatorConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
}

impl PipelineError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Runtime { .. } => 2,
            PipelineError::Config(_) => 3,
        }
    }

    pub fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Runtime {
            stage,
            message: e.to_string(),
        }
    }
}

/// Corpus load failures: unreadable files are config problems, bad records
/// are validation problems.
impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => PipelineError::Config(e.to_string()),
            other => PipelineError::Validation(other.to_string()),
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSpec {
    #[serde(default = "default_leakage")]
    pub leakage_rate: f64,
    #[serde(default = "default_accuracy")]
    pub base_accuracy: f64,
    #[serde(default)]
    pub entity_bias: BTreeMap<String, EntityBias>,
    #[serde(default)]
    pub order: CascadeOrder,
}

fn default_leakage() -> f64 {
    SimulatorConfig::default().leakage_rate
}

fn default_accuracy() -> f64 {
    SimulatorConfig::default().base_accuracy
}

impl Default for SimulatorSpec {
    fn default() -> Self {
        Self {
            leakage_rate: default_leakage(),
            base_accuracy: default_accuracy(),
            entity_bias: BTreeMap::new(),
            order: CascadeOrder::default(),
        }
    }
}

impl SimulatorSpec {
    pub fn with_seed(&self, seed: u64) -> SimulatorConfig {
        SimulatorConfig {
            leakage_rate: self.leakage_rate,
            entity_bias: self.entity_bias.clone(),
            base_accuracy: self.base_accuracy,
            seed,
            order: self.order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendType {
    Simulator,
    Replay,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    /// Used for the output sub-directory and leaderboard rows.
    pub name: String,
    pub kind: BackendType,
    #[serde(default)]
    pub simulator: Option<SimulatorSpec>,
    /// Replay file covering originals and variants.
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    #[serde(default)]
    pub chat: Option<PredictorConfig>,
    #[serde(default)]
    pub template: Option<TemplateName>,
    /// Overrides the built-in text of `template`.
    #[serde(default)]
    pub template_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMethod {
    #[default]
    Trained,
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSpec {
    pub method: CalibrationMethod,
    pub tau: f64,
    /// Seed is taken from the top-level `seed`.
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub tolerance: f64,
    pub balance_recall: bool,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            method: CalibrationMethod::Trained,
            tau: DEFAULT_TAU,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2: t.l2,
            tolerance: t.tolerance,
            balance_recall: t.balance_recall,
        }
    }
}

impl CalibrationSpec {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            seed,
            tolerance: self.tolerance,
            balance_recall: self.balance_recall,
        }
    }

    pub fn method(&self, seed: u64) -> Method {
        match self.method {
            CalibrationMethod::Trained => Method::Trained(self.train_config(seed)),
            CalibrationMethod::Consensus => Method::Consensus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub polarity_lexicon: Option<PathBuf>,
    /// Optional multi-annotator labels for an agreement check.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub balance_tolerance: usize,
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub metrics: MetricOptions,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses `text`; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        resolve(base_dir, &mut cfg.corpus);
        resolve(base_dir, &mut cfg.lexicon);
        resolve(base_dir, &mut cfg.output_dir);
        for p in [&mut cfg.polarity_lexicon, &mut cfg.annotations].into_iter().flatten() {
            resolve(base_dir, p);
        }
        for b in &mut cfg.backends {
            for p in [&mut b.predictions, &mut b.template_file].into_iter().flatten() {
                resolve(base_dir, p);
            }
            if let Some(cache) = b.chat.as_mut().and_then(|c| c.cache_path.as_mut()) {
                resolve(base_dir, cache);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Static checks that need no stage to have run.
    pub fn check(&self) -> Result<()> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        for (what, p) in [("corpus", &self.corpus), ("lexicon", &self.lexicon)] {
            if !p.is_file() {
                return cfg_err(format!("{what} file {} does not exist", p.display()));
            }
        }
        if self.backends.is_empty() {
            return cfg_err("at least one [[backends]] entry is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.backends {
            let valid_name = !b.name.is_empty()
                && b.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && !b.name.starts_with('.');
            if !valid_name {
                return cfg_err(format!(
                    "backend name `{}` must be non-empty ASCII letters, digits, `-`, `_` or `.`",
                    b.name
                ));
            }
            if !seen.insert(&b.name) {
                return cfg_err(format!("duplicate backend name `{}`", b.name));
            }
            match b.kind {
                BackendType::Simulator => {
                    let spec = b.simulator.clone().unwrap_or_default();
                    spec.with_seed(self.seed)
                        .validate()
                        .map_err(|e| PipelineError::Config(format!("backend `{}`: {e}", b.name)))?;
                }
                BackendType::Replay => match &b.predictions {
                    Some(p) if p.is_file() => {}
                    Some(p) => return cfg_err(format!("backend `{}`: {} does not exist", b.name, p.display())),
                    None => return cfg_err(format!("replay backend `{}` needs `predictions`", b.name)),
                },
                BackendType::Chat => {
                    let chat = b
                        .chat
                        .as_ref()
                        .ok_or_else(|| PipelineError::Config(format!("chat backend `{}` needs a [backends.chat] table", b.name)))?;
                    chat.validate()
                        .map_err(|e| PipelineError::Config(format!("backend `{}`: {e}", b.name)))?;
                    if chat.endpoint.is_none() {
                        return cfg_err(format!("chat backend `{}` needs an endpoint", b.name));
                    }
                    self.template(b)?;
                }
            }
        }
        check_tau(self.calibration.tau).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.calibration
            .train_config(self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.polarity()?;
        Ok(())
    }

    pub fn template(&self, backend: &BackendSpec) -> Result<PromptTemplate> {
        let name = backend.template.unwrap_or(TemplateName::Raw);
        match &backend.template_file {
            Some(p) => PromptTemplate::from_file(name, p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(PromptTemplate::builtin(name)),
        }
    }

    pub fn polarity(&self) -> Result<Option<PolarityLexicon>> {
        self.polarity_lexicon
            .as_ref()
            .map(|p| PolarityLexicon::load(p).map_err(|e| PipelineError::Config(e.to_string())))
            .transpose()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub n_examples: usize,
    pub entities: Vec<String>,
    pub balance: BalanceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleiss_kappa: Option<f64>,
}

pub fn validate_stage(config: &PipelineConfig) -> Result<(Corpus, ValidationSummary)> {
    let corpus = load_corpus(&config.corpus, &config.lexicon)?;
    let balance = balance_report(&corpus, config.balance_tolerance);
    let fleiss_kappa = match &config.annotations {
        Some(p) => Some(
            load_annotations(p)
                .and_then(|a| fleiss_kappa(&a))
                .map_err(|e| PipelineError::Validation(e.to_string()))?,
        ),
        None => None,
    };
    if !balance.balanced {
        log::warn!("corpus is imbalanced: {} flag(s)", balance.flags.len());
    }
    let summary = ValidationSummary {
        n_examples: corpus.len(),
        entities: corpus.lexicon().ids().map(str::to_string).collect(),
        balance,
        fleiss_kappa,
    };
    Ok((corpus, summary))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub n_originals: usize,
    pub n_variants: usize,
    pub skipped: Vec<String>,
}

pub fn generate_stage(corpus: &Corpus) -> Result<(Augmented, AugmentSummary)> {
    let aug = augment_corpus(corpus).map_err(|e| PipelineError::runtime("generate-cf", e))?;
    let summary = AugmentSummary {
        n_originals: aug.sets.len(),
        n_variants: aug.sets.iter().map(|s| s.variants.len()).sum(),
        skipped: aug.skipped.clone(),
    };
    Ok((aug, summary))
}

/// Per-backend results.
#[derive(Debug, Clone)]
pub struct BackendResult {
    pub name: String,
    pub raw: MetricReport,
    pub raw_ood: OodReport,
    pub calibrated: MetricReport,
    pub calibrated_ood: OodReport,
    pub calibrated_predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub backends: Vec<BackendResult>,
    pub leaderboard: Vec<LeaderboardRow>,
    pub output_dir: PathBuf,
}

/// Calibrated metrics with OOD attached: headline numbers from the pooled
/// out-of-fold predictions, `ood_macro_f1` from the per-fold mean.
pub fn calibrated_evaluation(
    corpus: &Corpus,
    ctx: &CalibrationContext,
    method: Method,
    tau: f64,
    options: MetricOptions,
) -> Result<(MetricReport, OodReport, Vec<PredictionRecord>)> {
    let fitter = FoldFitter { ctx, method, tau };
    let raw_preds: Vec<PredictionRecord> = Vec::new();
    let ood = ood_evaluate(corpus, &raw_preds, Some(&fitter as &dyn FoldCalibrator), options)
        .map_err(|e| PipelineError::runtime("calibrate", e))?;
    let pooled = ood.pooled_predictions();
    let originals = corpus.originals();
    let mut report = evaluate(originals.examples(), &pooled, options).map_err(|e| PipelineError::runtime("evaluate", e))?;
    report.ood_macro_f1 = Some(ood.mean_macro_f1);
    report
        .notes
        .push("out-of-fold: each entity scored by a calibrator fitted without it".into());
    Ok((report, ood, pooled))
}

pub fn raw_evaluation(corpus: &Corpus, preds: &[PredictionRecord], options: MetricOptions) -> Result<(MetricReport, OodReport)> {
    let originals = corpus.originals();
    let mut report = evaluate(originals.examples(), preds, options).map_err(|e| PipelineError::runtime("evaluate", e))?;
    let ood = ood_evaluate(corpus, preds, None, options).map_err(|e| PipelineError::runtime("evaluate", e))?;
    report.ood_macro_f1 = Some(ood.mean_macro_f1);
    Ok((report, ood))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::runtime("write", e))?;
    s.push('\n');
    write_text(path, &s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::runtime("write", format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::runtime("write", format!("{}: {e}", path.display())))
}

/// One line per (system, entity), for plotting.
pub fn per_entity_csv(rows: &[(String, &MetricReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| PipelineError::runtime("report", e);
    w.write_record(["system", "entity", "bias_ssc", "rstd", "macro_f1", "recall_support", "recall_against", "recall_neutral", "n_scored", "n_failed"])
        .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for (system, report) in rows {
        for (entity, m) in &report.per_entity_breakdown {
            let r = |i: usize| opt(m.recalls.map(|r| r[i]));
            w.write_record([
                system.clone(),
                entity.clone(),
                opt(m.bias_ssc),
                opt(m.rstd),
                opt(m.macro_f1),
                r(0),
                r(1),
                r(2),
                m.n_scored.to_string(),
                m.n_failed.to_string(),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::runtime("report", e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct FoldSummary<'a> {
    raw: &'a OodReport,
    calibrated: &'a OodReport,
}

/// Runs every stage of `config`. Chat backends listed in `overrides` (by
/// backend name) use the given completion backend instead of HTTP.
pub struct Pipeline {
    config: PipelineConfig,
    overrides: BTreeMap<String, Arc<dyn CompletionBackend>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_completion_backend(mut self, name: impl Into<String>, backend: Arc<dyn CompletionBackend>) -> Self {
        self.overrides.insert(name.into(), backend);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn predict(&self, spec: &BackendSpec, aug: &Augmented) -> Result<Vec<PredictionRecord>> {
        let cfg = &self.config;
        let examples = aug.corpus.examples();
        let stage = "predict";
        match spec.kind {
            BackendType::Simulator => {
                let sim = spec.simulator.clone().unwrap_or_default().with_seed(cfg.seed);
                simulate_batch(examples, &sim).map_err(|e| PipelineError::runtime(stage, e))
            }
            BackendType::Replay => {
                let path = spec.predictions.as_ref().expect("checked");
                let records = read_predictions(path, &spec.name).map_err(|e| PipelineError::runtime(stage, e))?;
                Ok(ReplayPredictor::new(records).predict(examples))
            }
            BackendType::Chat => {
                let chat = spec.chat.as_ref().expect("checked");
                let backend: Arc<dyn CompletionBackend> = match self.overrides.get(&spec.name) {
                    Some(b) => b.clone(),
                    None => Arc::new(ChatBackend::from_config(chat).map_err(|e| PipelineError::runtime(stage, e))?),
                };
                let cache = match &chat.cache_path {
                    Some(p) => ResponseCache::open(p).map_err(|e| PipelineError::runtime(stage, e))?,
                    None => ResponseCache::in_memory(),
                };
                let template = cfg.template(spec)?;
                predict_batch(backend.as_ref(), examples, aug.corpus.lexicon(), &template, chat, &cache)
                    .map_err(|e| PipelineError::runtime(stage, e))
            }
        }
    }

    pub fn run(&self) -> Result<RunSummary> {
        let cfg = &self.config;
        cfg.check()?;
        let out = cfg.output_dir.clone();
        let polarity = cfg.polarity()?;

        log::info!("validate: {}", cfg.corpus.display());
        let (corpus, validation) = validate_stage(cfg)?;
        write_json(&out.join("validation.json"), &validation)?;

        log::info!("generate-cf: {} originals", corpus.originals().len());
        let (aug, aug_summary) = generate_stage(&corpus)?;
        write_text(&out.join("augmented.jsonl"), &aug.corpus.to_jsonl())?;
        write_json(&out.join("counterfactuals.json"), &aug_summary)?;

        let tau = cfg.calibration.tau;
        let method = cfg.calibration.method(cfg.seed);
        let mut results = Vec::new();
        for spec in &cfg.backends {
            let dir = out.join("backends").join(&spec.name);
            log::info!("predict: backend `{}` on {} examples", spec.name, aug.corpus.len());
            let preds = self.predict(spec, &aug)?;
            write_text(&dir.join("predictions.jsonl"), &predictions_to_jsonl(&preds))?;
            let failed = preds.iter().filter(|p| p.is_failed()).count();
            if failed > 0 {
                log::warn!("backend `{}`: {failed} failed prediction(s)", spec.name);
            }

            log::info!("calibrate: backend `{}`", spec.name);
            let ctx = CalibrationContext::new(aug.sets.clone(), preds.clone(), corpus.lexicon().clone(), polarity.clone());
            if let Method::Trained(tc) = method {
                let model = fit_calibrator(&ctx, corpus.originals().examples(), &tc, tau)
                    .map_err(|e| PipelineError::runtime("calibrate", e))?;
                write_text(&dir.join("calibrator.json"), &model.to_json())?;
            }
            let (calibrated, calibrated_ood, pooled) =
                calibrated_evaluation(&corpus, &ctx, method, tau, cfg.metrics)?;
            write_text(&dir.join("calibrated.jsonl"), &predictions_to_jsonl(&pooled))?;

            log::info!("evaluate: backend `{}`", spec.name);
            let (raw, raw_ood) = raw_evaluation(&corpus, &preds, cfg.metrics)?;
            write_json(&dir.join("metrics_raw.json"), &raw)?;
            write_json(&dir.join("metrics_calibrated.json"), &calibrated)?;
            write_json(
                &dir.join("ood.json"),
                &FoldSummary {
                    raw: &raw_ood,
                    calibrated: &calibrated_ood,
                },
            )?;
            results.push(BackendResult {
                name: spec.name.clone(),
                raw,
                raw_ood,
                calibrated,
                calibrated_ood,
                calibrated_predictions: pooled,
            });
        }

        log::info!("report: {} backend(s)", results.len());
        let method_note = match cfg.calibration.method {
            CalibrationMethod::Trained => "counterfactual re-scorer, out-of-fold",
            CalibrationMethod::Consensus => "counterfactual consensus rule",
        };
        let mut leaderboard = Vec::new();
        let mut named: Vec<(String, &MetricReport)> = Vec::new();
        for r in &results {
            let raw_name = format!("{} (raw)", r.name);
            let cal_name = format!("{} (calibrated)", r.name);
            leaderboard.push(LeaderboardRow::from_report(&raw_name, &r.raw, "uncalibrated predictions"));
            leaderboard.push(LeaderboardRow::from_report(&cal_name, &r.calibrated, method_note));
            named.push((raw_name, &r.raw));
            named.push((cal_name, &r.calibrated));
        }
        let render = |f| render_leaderboard(&leaderboard, f).map_err(|e| PipelineError::runtime("report", e));
        write_text(&out.join("leaderboard.md"), &render(Format::Markdown)?)?;
        write_text(&out.join("leaderboard.csv"), &render(Format::Csv)?)?;
        write_text(&out.join("per_entity.csv"), &per_entity_csv(&named)?)?;
        let results_json: BTreeMap<&str, &MetricReport> = named.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        write_json(&out.join("results.json"), &results_json)?;

        Ok(RunSummary {
            backends: results,
            leaderboard,
            output_dir: out,
        })
    }
}

/// Gold labels as predictions, for protocol checks.
pub fn gold_predictions(corpus: &Corpus, backend: &str) -> Vec<PredictionRecord> {
    corpus
        .examples()
        .iter()
        .map(|e| PredictionRecord::hard(&e.id, e.stance, backend, ""))
        .collect()
}

/// Parses `entity=label:rate`, e.g. `thaksin=against:0.6`.
pub fn parse_entity_bias(s: &str) -> std::result::Result<(String, EntityBias), String> {
    let (entity, rest) = s.split_once('=').ok_or_else(|| format!("expected ENTITY=LABEL:RATE, got `{s}`"))?;
    let (label, rate) = rest.split_once(':').ok_or_else(|| format!("expected ENTITY=LABEL:RATE, got `{s}`"))?;
    let label: StanceLabel = label.parse().map_err(|e| format!("{e}"))?;
    let rate: f64 = rate.parse().map_err(|e| format!("bad rate `{rate}`: {e}"))?;
    Ok((entity.to_string(), EntityBias { label, rate }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
corpus = "c.jsonl"
lexicon = "l.json"
output_dir = "out"

[[backends]]
name = "sim"
kind = "simulator"
"#;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/etc/x")).unwrap();
        assert_eq!(cfg.corpus, Path::new("/etc/x/c.jsonl"));
        assert_eq!(cfg.output_dir, Path::new("/etc/x/out"));
        assert_eq!(cfg.calibration.tau, DEFAULT_TAU);
        assert_eq!(cfg.backends[0].kind, BackendType::Simulator);
    }

    #[test]
    fn missing_corpus_is_config_error() {
        let text = MINIMAL.replace("corpus = \"c.jsonl\"\n", "");
        let err = PipelineConfig::from_toml(&text, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("corpus"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(PipelineConfig::from_toml(&text, Path::new(".")), Err(PipelineError::Config(_))));
    }

    #[test]
    fn check_catches_bad_backend_settings() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.jsonl"), "").unwrap();
        fs::write(dir.path().join("l.json"), "[]").unwrap();
        let ok = PipelineConfig::from_toml(MINIMAL, dir.path()).unwrap();
        assert!(ok.check().is_ok());

        let mut dup = ok.clone();
        dup.backends.push(dup.backends[0].clone());
        assert!(dup.check().unwrap_err().to_string().contains("duplicate"));

        let mut bad_rate = ok.clone();
        bad_rate.backends[0].simulator = Some(SimulatorSpec {
            leakage_rate: 1.5,
            ..Default::default()
        });
        assert_eq!(bad_rate.check().unwrap_err().exit_code(), 3);

        let mut replay = ok.clone();
        replay.backends[0].kind = BackendType::Replay;
        assert!(replay.check().unwrap_err().to_string().contains("predictions"));

        let mut tau = ok.clone();
        tau.calibration.tau = 0.4;
        assert!(tau.check().is_err());

        let mut name = ok;
        name.backends[0].name = "../x".into();
        assert!(name.check().is_err());
    }

    #[test]
    fn entity_bias_flag() {
        let (e, b) = parse_entity_bias("thaksin=against:0.6").unwrap();
        assert_eq!(e, "thaksin");
        assert_eq!(b.label, StanceLabel::Against);
        assert_eq!(b.rate, 0.6);
        assert!(parse_entity_bias("thaksin").is_err());
        assert!(parse_entity_bias("x=maybe:0.1").is_err());
    }
}
