use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stance_audit::calibration::{
    check_tau, fit_calibrator, CalibrationContext, CalibratorModel, PolarityLexicon, TrainConfig, DEFAULT_TAU,
};
use stance_audit::corpus::{load_corpus, Corpus};
use stance_audit::counterfactual::augment_corpus;
use stance_audit::metrics::{evaluate, ood_evaluate, MetricOptions, MetricReport};
use stance_audit::pipeline::{
    generate_stage, parse_entity_bias, validate_stage, write_json, write_text, Pipeline, PipelineConfig, PipelineError,
    SimulatorSpec,
};
use stance_audit::predictor::{
    predict_batch, predictions_to_jsonl, read_predictions, BackendKind, ChatBackend, PredictionRecord, PredictorConfig,
    PromptTemplate, ReplayPredictor, ResponseCache, TemplateName,
};
use stance_audit::report::{render_leaderboard, Format, LeaderboardRow};
use stance_audit::simulator::{simulate_batch, CascadeOrder, EntityBias};

type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Writes to stdout, ignoring a closed pipe.
fn emit(s: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(s.as_bytes());
}

macro_rules! emitln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format!($($arg)*)))
    };
}

/// Bias auditing and counterfactual calibration for stance predictors.
#[derive(Parser)]
#[command(name = "stance-audit", version)]
struct Cli {
    /// Pipeline config (TOML); also supplies defaults for the other commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Verbose logging (request/response bodies included).
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus against its lexicon and report label balance.
    Validate {
        #[command(flatten)]
        input: CorpusArgs,
        /// Annotator labels (JSON lines) for an agreement check.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        tolerance: usize,
    },
    /// Write the corpus with counterfactual variants after each original.
    GenerateCf {
        #[command(flatten)]
        input: CorpusArgs,
    },
    /// Predict stances with a replay file or a chat endpoint.
    Predict {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, value_parser = ["replay", "chat"], default_value = "chat")]
        backend: String,
        /// Replay file.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "")]
        model: String,
        #[arg(long, default_value = "raw")]
        template: TemplateName,
        #[arg(long)]
        template_file: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        #[arg(long, default_value_t = 2)]
        retries: u32,
        #[arg(long, default_value = "OPENAI_API_KEY")]
        api_key_env: String,
        /// Generate counterfactual variants first and predict those too.
        #[arg(long)]
        with_variants: bool,
    },
    /// Predict stances with the seeded bias simulator.
    Simulate {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value_t = 0.5)]
        leakage_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        base_accuracy: f64,
        /// ENTITY=LABEL:RATE, repeatable.
        #[arg(long = "entity-bias", value_parser = parse_entity_bias)]
        entity_bias: Vec<(String, EntityBias)>,
        #[arg(long, value_parser = parse_order, default_value = "leakage_first")]
        order: CascadeOrder,
        #[arg(long)]
        with_variants: bool,
    },
    /// Re-score originals from their counterfactual predictions.
    Calibrate {
        #[command(flatten)]
        input: CorpusArgs,
        /// Prediction files for originals and variants, merged by id.
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Fitted calibrator; without one (and without --train) the consensus rule is used.
        #[arg(long, conflicts_with = "train")]
        model: Option<PathBuf>,
        /// Fit a calibrator on the corpus originals and save it as calibrator.json.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        polarity_lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
    },
    /// Compute metrics for predictions on the corpus originals.
    Evaluate {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Re-score with this calibrator before evaluating.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        polarity_lexicon: Option<PathBuf>,
        /// Also report leave-one-entity-out macro-F1.
        #[arg(long)]
        ood: bool,
        #[arg(long)]
        skip_empty_classes: bool,
        #[arg(long)]
        ssc_exclude_neutral: bool,
    },
    /// Render a leaderboard from metric reports.
    Report {
        /// NAME=PATH to a metrics JSON file, repeatable, in row order.
        #[arg(long = "row", required = true, value_parser = parse_row)]
        rows: Vec<(String, PathBuf)>,
    },
    /// Run every stage from the config file.
    Run,
}

fn parse_order(s: &str) -> std::result::Result<CascadeOrder, String> {
    match s {
        "leakage_first" => Ok(CascadeOrder::LeakageFirst),
        "entity_first" => Ok(CascadeOrder::EntityFirst),
        other => Err(format!("unknown order `{other}` (leakage_first or entity_first)")),
    }
}

fn parse_row(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

struct Globals {
    config: Option<PipelineConfig>,
    seed: u64,
    out: PathBuf,
}

impl Globals {
    fn corpus(&self, args: &CorpusArgs) -> Result<Corpus> {
        let pick = |flag: &Option<PathBuf>, from_cfg: Option<&PathBuf>, what: &str| {
            flag.clone()
                .or_else(|| from_cfg.cloned())
                .ok_or_else(|| PipelineError::Config(format!("--{what} is required (or pass --config)")))
        };
        let corpus = pick(&args.corpus, self.config.as_ref().map(|c| &c.corpus), "corpus")?;
        let lexicon = pick(&args.lexicon, self.config.as_ref().map(|c| &c.lexicon), "lexicon")?;
        Ok(load_corpus(corpus, lexicon)?)
    }
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn load_predictions(paths: &[PathBuf]) -> Result<Vec<PredictionRecord>> {
    let mut merged = Vec::new();
    for p in paths {
        merged.extend(read_predictions(p, "replay").map_err(config_err)?);
    }
    Ok(merged)
}

fn load_polarity(path: &Option<PathBuf>) -> Result<Option<PolarityLexicon>> {
    path.as_ref().map(|p| PolarityLexicon::load(p).map_err(config_err)).transpose()
}

fn maybe_augment(corpus: Corpus, with_variants: bool) -> Result<Corpus> {
    if !with_variants {
        return Ok(corpus);
    }
    augment_corpus(&corpus)
        .map(|a| a.corpus)
        .map_err(|e| PipelineError::runtime("generate-cf", e))
}

fn print_report(name: &str, report: &MetricReport) -> Result<()> {
    let row = LeaderboardRow::from_report(name, report, report.notes.join("; "));
    let md = render_leaderboard(&[row], Format::Markdown).map_err(|e| PipelineError::runtime("report", e))?;
    emit(&md);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = cli.config.as_ref().map(PipelineConfig::load).transpose()?;
    let globals = Globals {
        seed: cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0),
        out: cli
            .out
            .clone()
            .or(config.as_ref().map(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out")),
        config,
    };
    let out = globals.out.as_path();

    match cli.command {
        Command::Validate {
            input,
            annotations,
            tolerance,
        } => {
            let mut cfg = match &globals.config {
                Some(c) => c.clone(),
                None => PipelineConfig {
                    corpus: input.corpus.clone().ok_or_else(|| config_err("--corpus is required"))?,
                    lexicon: input.lexicon.clone().ok_or_else(|| config_err("--lexicon is required"))?,
                    output_dir: out.to_path_buf(),
                    seed: globals.seed,
                    polarity_lexicon: None,
                    annotations: None,
                    balance_tolerance: tolerance,
                    backends: Vec::new(),
                    calibration: Default::default(),
                    metrics: Default::default(),
                },
            };
            if let Some(c) = input.corpus {
                cfg.corpus = c;
            }
            if let Some(l) = input.lexicon {
                cfg.lexicon = l;
            }
            if annotations.is_some() {
                cfg.annotations = annotations;
            }
            cfg.balance_tolerance = tolerance;
            let (_, summary) = validate_stage(&cfg)?;
            write_json(&out.join("validation.json"), &summary)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")));
            Ok(())
        }
        Command::GenerateCf { input } => {
            let corpus = globals.corpus(&input)?;
            let (aug, summary) = generate_stage(&corpus)?;
            write_text(&out.join("augmented.jsonl"), &aug.corpus.to_jsonl())?;
            write_json(&out.join("counterfactuals.json"), &summary)?;
            emitln!(
                "{} originals, {} variants, {} skipped -> {}",
                summary.n_originals,
                summary.n_variants,
                summary.skipped.len(),
                out.join("augmented.jsonl").display()
            );
            Ok(())
        }
        Command::Predict {
            input,
            backend,
            predictions,
            endpoint,
            model,
            template,
            template_file,
            cache,
            max_in_flight,
            retries,
            api_key_env,
            with_variants,
        } => {
            let corpus = maybe_augment(globals.corpus(&input)?, with_variants)?;
            let records = if backend == "replay" {
                let path = predictions.ok_or_else(|| config_err("--predictions is required for the replay backend"))?;
                ReplayPredictor::from_file(&path).map_err(config_err)?.predict(corpus.examples())
            } else {
                let config = PredictorConfig {
                    backend: BackendKind::Chat,
                    endpoint,
                    model,
                    max_in_flight,
                    retries,
                    cache_path: cache.clone(),
                    api_key_env,
                    ..Default::default()
                };
                config.validate().map_err(config_err)?;
                let chat = ChatBackend::from_config(&config).map_err(config_err)?;
                let template = match template_file {
                    Some(p) => PromptTemplate::from_file(template, p).map_err(config_err)?,
                    None => PromptTemplate::builtin(template),
                };
                let cache = match &cache {
                    Some(p) => ResponseCache::open(p).map_err(config_err)?,
                    None => ResponseCache::in_memory(),
                };
                predict_batch(&chat, corpus.examples(), corpus.lexicon(), &template, &config, &cache)
                    .map_err(|e| PipelineError::runtime("predict", e))?
            };
            write_predictions_out(out, &records)
        }
        Command::Simulate {
            input,
            leakage_rate,
            base_accuracy,
            entity_bias,
            order,
            with_variants,
        } => {
            let corpus = maybe_augment(globals.corpus(&input)?, with_variants)?;
            let spec = SimulatorSpec {
                leakage_rate,
                base_accuracy,
                entity_bias: entity_bias.into_iter().collect(),
                order,
            };
            let sim = spec.with_seed(globals.seed);
            sim.validate().map_err(config_err)?;
            let records = simulate_batch(corpus.examples(), &sim).map_err(config_err)?;
            write_predictions_out(out, &records)
        }
        Command::Calibrate {
            input,
            predictions,
            model,
            train,
            polarity_lexicon,
            tau,
        } => {
            check_tau(tau).map_err(config_err)?;
            let corpus = globals.corpus(&input)?;
            let preds = load_predictions(&predictions)?;
            let polarity = load_polarity(&polarity_lexicon)?;
            let model = match model {
                Some(p) => Some(CalibratorModel::load(p).map_err(config_err)?),
                None => None,
            };
            let ctx = CalibrationContext::from_augmented(&corpus, preds, polarity);
            let originals = corpus.originals();
            let model = if train {
                let tc = TrainConfig {
                    seed: globals.seed,
                    ..Default::default()
                };
                let m = fit_calibrator(&ctx, originals.examples(), &tc, tau).map_err(|e| PipelineError::runtime("calibrate", e))?;
                write_text(&out.join("calibrator.json"), &m.to_json())?;
                Some(m)
            } else {
                model
            };
            let calibrated = ctx
                .calibrate_examples(originals.examples(), model.as_ref(), tau)
                .map_err(|e| PipelineError::runtime("calibrate", e))?;
            let path = out.join("calibrated.jsonl");
            write_text(&path, &predictions_to_jsonl(&calibrated))?;
            emitln!("{} calibrated predictions -> {}", calibrated.len(), path.display());
            Ok(())
        }
        Command::Evaluate {
            input,
            predictions,
            model,
            polarity_lexicon,
            ood,
            skip_empty_classes,
            ssc_exclude_neutral,
        } => {
            let options = MetricOptions {
                skip_empty_classes,
                ssc_exclude_neutral,
            };
            let corpus = globals.corpus(&input)?;
            let mut preds = load_predictions(&predictions)?;
            let mut note = None;
            if let Some(p) = model {
                let model = CalibratorModel::load(p).map_err(config_err)?;
                let polarity = load_polarity(&polarity_lexicon)?;
                let tau = model.tau;
                let ctx = CalibrationContext::from_augmented(&corpus, preds, polarity);
                preds = ctx
                    .calibrate_examples(corpus.originals().examples(), Some(&model), tau)
                    .map_err(|e| PipelineError::runtime("calibrate", e))?;
                note = Some("re-scored with a saved calibrator; OOD splits its predictions without refitting");
            }
            let originals = corpus.originals();
            let mut report = evaluate(originals.examples(), &preds, options).map_err(|e| PipelineError::runtime("evaluate", e))?;
            if ood {
                let o = ood_evaluate(&corpus, &preds, None, options).map_err(|e| PipelineError::runtime("evaluate", e))?;
                report.ood_macro_f1 = Some(o.mean_macro_f1);
                write_json(&out.join("ood.json"), &o)?;
            }
            report.notes.extend(note.map(str::to_string));
            write_json(&out.join("metrics.json"), &report)?;
            print_report("predictions", &report)
        }
        Command::Report { rows } => {
            let mut board = Vec::new();
            for (name, path) in rows {
                let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let report: MetricReport =
                    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                board.push(LeaderboardRow::from_report(name, &report, report.notes.join("; ")));
            }
            let render = |f| render_leaderboard(&board, f).map_err(|e| PipelineError::runtime("report", e));
            let md = render(Format::Markdown)?;
            write_text(&out.join("leaderboard.md"), &md)?;
            write_text(&out.join("leaderboard.csv"), &render(Format::Csv)?)?;
            emit(&md);
            Ok(())
        }
        Command::Run => {
            let mut cfg = globals
                .config
                .clone()
                .ok_or_else(|| config_err("`run` needs --config <path>"))?;
            cfg.seed = globals.seed;
            cfg.output_dir = globals.out.clone();
            let summary = Pipeline::new(cfg).run()?;
            let md = render_leaderboard(&summary.leaderboard, Format::Markdown)
                .map_err(|e| PipelineError::runtime("report", e))?;
            emit(&md);
            eprintln!("artifacts in {}", summary.output_dir.display());
            Ok(())
        }
    }
}

fn write_predictions_out(out: &Path, records: &[PredictionRecord]) -> Result<()> {
    let path = out.join("predictions.jsonl");
    write_text(&path, &predictions_to_jsonl(records))?;
    let failed = records.iter().filter(|r| r.is_failed()).count();
    emitln!("{} predictions ({failed} failed) -> {}", records.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.trace { "trace" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
