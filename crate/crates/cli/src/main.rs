//! `lotus` command-line entry point. Every subcommand parses arguments,
//! resolves the experiment config and hands off to the library.
//!
//! Exit codes: 0 on success, 1 for usage, validation and data errors,
//! 2 when an explanation backend fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lotus::classifier::{decide, train, ClassifierRegistry, PredictionRecord, TrainedModel};
use lotus::corpus::{label_distribution, parse_dataset, sample_seed_corpus, write_dataset_to, Dataset, Split};
use lotus::explainer::{
    export_finetune_job, generate_explanations, BackendDescriptor, Explainer, Explanation, ExplanationCache,
    FinetuneJobSpec,
};
use lotus::io::{read_json, read_jsonl, write_file, write_jsonl};
use lotus::metrics::evaluate;
use lotus::pipeline::{augment_example, run_comparison, write_report_from_dir, ExperimentConfig, Mode};
use lotus::report::Format;
use lotus::{Error, Result};

const CACHE_ENV: &str = "LOTUS_CACHE";

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON); missing keys take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-key override applied after the config file, e.g. `train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// text_only | text_plus_explanation
    #[arg(long, global = true)]
    mode: Option<String>,
    /// `stub`, the id of the configured backend, or a backend descriptor JSON file.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// md | csv
    #[arg(long, global = true, default_value = "md")]
    format: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label distribution of a dataset file, as JSON on stdout.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Draw the explanation seed corpus (CSV to `<out>/seed_corpus.csv` or stdout).
    SampleSeed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 150)]
        n: usize,
    },
    /// Generate explanations for a dataset (JSONL to `<out>/explanations.jsonl` or stdout).
    Explain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Write the explainer fine-tuning job descriptor to `<out>/finetune_job.json`.
    ExportFinetune {
        /// Seed corpus CSV.
        #[arg(long)]
        data: PathBuf,
        /// Explanations JSONL from `explain`; generated through the backend when absent.
        #[arg(long)]
        explanations: Option<PathBuf>,
        /// Job hyperparameters (JSON); defaults when absent.
        #[arg(long)]
        job: Option<PathBuf>,
    },
    /// Train the reference classifier and write `<out>/model.json`.
    Train {
        /// Training CSV; defaults to `train_path` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict a dataset with a saved model; writes `<out>/predictions.jsonl`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to `test_path` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score predictions against gold labels; metrics JSON on stdout.
    Evaluate {
        /// Gold CSV; defaults to `test_path` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Full comparison of both modes over every configured seed.
    Run,
    /// Rebuild the report from the artifacts of a previous `run` in `--out`.
    Report {
        /// Test CSV; defaults to `test_path` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Parser)]
#[command(name = "lotus", version, about = "Explain-then-classify emotion experiments")]
struct Invocation {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let invocation = match Invocation::try_parse() {
        Ok(inv) => inv,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(invocation) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_backend() { 2 } else { 1 })
        }
    }
}

fn dispatch(inv: Invocation) -> Result<()> {
    let common = &inv.common;
    let format: Format = common.format.parse()?;
    match inv.command {
        Command::Stats { data, split } => {
            let dataset = parse_dataset(&data, split.parse()?)?;
            let stats = label_distribution(&dataset);
            if let Some(out) = &common.out {
                lotus::io::write_json_pretty(&out.join("stats.json"), &stats)?;
            }
            print_json(serde_json::to_value(&stats).map_err(|e| Error::json("stats", e))?)
        }
        Command::SampleSeed { data, n } => {
            let dataset = parse_dataset(&data, Split::Train)?;
            let seed = common.seed.unwrap_or(0);
            let sample = Dataset::new(Split::Train, sample_seed_corpus(&dataset, n, seed)?)?;
            let mut buf = Vec::new();
            write_dataset_to(&sample, &mut buf).map_err(|e| Error::io("seed corpus", e))?;
            emit(common.out.as_deref(), "seed_corpus.csv", &buf)
        }
        Command::Explain { data, split } => {
            let config = resolve_config(common)?;
            let dataset = parse_dataset(&data, split.parse()?)?;
            let explanations = explain_dataset(&config, common, &dataset)?;
            match &common.out {
                Some(out) => {
                    persist_config(out, &config)?;
                    write_jsonl(&out.join("explanations.jsonl"), &explanations)
                }
                None => {
                    let mut buf = Vec::new();
                    for e in &explanations {
                        buf.extend(serde_json::to_vec(e).map_err(|e| Error::json("explanation", e))?);
                        buf.push(b'\n');
                    }
                    emit(None, "", &buf)
                }
            }
        }
        Command::ExportFinetune { data, explanations, job } => {
            let config = resolve_config(common)?;
            let out = out_dir(common);
            let seed_corpus = parse_dataset(&data, Split::Train)?;
            let mut spec: FinetuneJobSpec = match &job {
                Some(p) => read_json(p)?,
                None => FinetuneJobSpec::default(),
            };
            spec.seed_corpus_ref = data.clone();
            let explained = match &explanations {
                Some(p) => {
                    spec.explanation_corpus_ref = p.clone();
                    read_jsonl::<Explanation>(p)?
                }
                None => {
                    let generated = explain_dataset(&config, common, &seed_corpus)?;
                    let path = out.join("explanations.jsonl");
                    write_jsonl(&path, &generated)?;
                    spec.explanation_corpus_ref = path;
                    generated
                }
            };
            persist_config(&out, &config)?;
            let path = export_finetune_job(
                &spec,
                &config.template()?,
                &seed_corpus.examples,
                &explained,
                out.join("finetune_job.json"),
            )?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Train { data } => {
            let config = resolve_config(common)?;
            let out = out_dir(common);
            let dataset = parse_dataset(data.as_ref().unwrap_or(&config.train_path), Split::Train)?;
            let inputs = classifier_inputs(&config, common, &dataset)?;
            let train_config = lotus::classifier::TrainConfig {
                seed: common.seed.unwrap_or(config.train.seed),
                ..config.train.clone()
            };
            let params: lotus::Model = train(&inputs, &train_config, |s| Ok(s.to_string()))?;
            persist_config(&out, &config)?;
            TrainedModel { params, config: train_config }.save(out.join("model.json"))?;
            eprintln!("wrote {}", out.join("model.json").display());
            Ok(())
        }
        Command::Predict { model, data, split } => {
            let config = resolve_config(common)?;
            let out = out_dir(common);
            let model = TrainedModel::<f64>::load(&model)?;
            let dataset = parse_dataset(data.as_ref().unwrap_or(&config.test_path), split.parse()?)?;
            let inputs = classifier_inputs(&config, common, &dataset)?;
            let threshold = model.threshold();
            let records: Vec<PredictionRecord<f64>> = dataset
                .examples
                .iter()
                .zip(&inputs)
                .map(|(ex, (text, _))| {
                    let probabilities = model.predict_proba(text);
                    PredictionRecord {
                        example_id: ex.id.clone(),
                        probabilities,
                        decisions: decide(&probabilities, threshold),
                    }
                })
                .collect();
            persist_config(&out, &config)?;
            write_jsonl(&out.join("predictions.jsonl"), &records)
        }
        Command::Evaluate { data, predictions, split } => {
            let config = resolve_config(common)?;
            let dataset = parse_dataset(data.as_ref().unwrap_or(&config.test_path), split.parse()?)?;
            let records: Vec<PredictionRecord<f64>> = read_jsonl(&predictions)?;
            let by_id: std::collections::HashMap<_, _> =
                records.iter().map(|r| (r.example_id.as_str(), r.decisions)).collect();
            let mut gold = Vec::with_capacity(dataset.len());
            let mut pred = Vec::with_capacity(dataset.len());
            for ex in &dataset.examples {
                let decision = by_id.get(ex.id.as_str()).ok_or_else(|| Error::Data {
                    example_id: ex.id.clone(),
                    message: "no prediction for this example".into(),
                })?;
                gold.push(ex.labels);
                pred.push(*decision);
            }
            if records.len() != dataset.len() {
                return Err(Error::Consistency(format!(
                    "{} predictions for {} gold examples",
                    records.len(),
                    dataset.len()
                )));
            }
            let report = evaluate::<f64>(&gold, &pred)?;
            let json = report.to_json_pretty()? + "\n";
            if let Some(out) = &common.out {
                write_file(&out.join("metrics.json"), &json)?;
            }
            emit(None, "", json.as_bytes())
        }
        Command::Run => {
            let config = resolve_config(common)?;
            let out = out_dir(common);
            persist_config(&out, &config)?;
            let explainer = Explainer::from_descriptor(&config.backend)?;
            let cache = ExplanationCache::open(cache_path(&config, &out))?;
            let comparison =
                run_comparison(&config, &ClassifierRegistry::default(), &explainer, &cache, &out, format)?;
            eprintln!(
                "macro F1: text_only {:.4}, text_plus_explanation {:.4}; report in {}",
                comparison.text_only.aggregate.macro_avg.f1.mean,
                comparison.text_plus_explanation.aggregate.macro_avg.f1.mean,
                out.join(format!("report.{}", format.extension())).display()
            );
            Ok(())
        }
        Command::Report { data } => {
            let config = resolve_config(common)?;
            let out = out_dir(common);
            let test = parse_dataset(data.as_ref().unwrap_or(&config.test_path), Split::Test)?;
            write_report_from_dir(&out, &test, config.train.threshold, format)?;
            eprintln!("wrote {}", out.join(format!("report.{}", format.extension())).display());
            Ok(())
        }
    }
}

/// Built-in defaults, then the config file, then flags and `--set` overrides.
fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentConfig::from_json(&raw)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = &common.mode {
        config.mode = mode.parse()?;
    }
    if let Some(seed) = common.seed {
        config.run_seeds = vec![seed];
    }
    if let Some(name) = &common.backend {
        config.backend = select_backend(&config, name)?;
    }
    let config = config.with_overrides(&common.overrides)?;
    config.validate()?;
    Ok(config)
}

fn select_backend(config: &ExperimentConfig, name: &str) -> Result<BackendDescriptor> {
    if name == config.backend.backend_id {
        return Ok(config.backend.clone());
    }
    if name == "stub" {
        return Ok(BackendDescriptor::stub("stub", lotus::pipeline::default_stub_cues()));
    }
    let path = Path::new(name);
    if path.is_file() {
        return read_json(path);
    }
    Err(Error::Argument(format!(
        "--backend `{name}` is neither `stub`, the configured backend id, nor a descriptor file"
    )))
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// `LOTUS_CACHE`, then `cache_path` from the config, then a per-backend file under `out`.
fn cache_path(config: &ExperimentConfig, out: &Path) -> PathBuf {
    if let Some(p) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(p);
    }
    config
        .cache_path
        .clone()
        .unwrap_or_else(|| out.join("cache").join(format!("{}.jsonl", config.backend.backend_id)))
}

fn persist_config(out: &Path, config: &ExperimentConfig) -> Result<()> {
    write_file(&out.join("resolved_config.json"), config.to_json_pretty()? + "\n")
}

fn explain_dataset(config: &ExperimentConfig, common: &Common, dataset: &Dataset) -> Result<Vec<Explanation>> {
    let explainer = Explainer::from_descriptor(&config.backend)?;
    let cache = ExplanationCache::open(cache_path(config, &out_dir(common)))?;
    generate_explanations(&explainer, &config.template()?, &dataset.examples, &cache)
}

/// Classifier input strings under the configured mode.
fn classifier_inputs(
    config: &ExperimentConfig,
    common: &Common,
    dataset: &Dataset,
) -> Result<Vec<(String, lotus::corpus::EmotionLabelSet)>> {
    match config.mode {
        Mode::TextOnly => Ok(dataset.examples.iter().map(|e| (e.text.clone(), e.labels)).collect()),
        Mode::TextPlusExplanation => {
            let explanations = explain_dataset(config, common, dataset)?;
            Ok(dataset
                .examples
                .iter()
                .zip(&explanations)
                .map(|(ex, exp)| (augment_example(&ex.text, &exp.text), ex.labels))
                .collect())
        }
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    let json = serde_json::to_string_pretty(&value).map_err(|e| Error::json("output", e))? + "\n";
    emit(None, "", json.as_bytes())
}

/// Write `bytes` to `<out>/<name>` when an output directory is given, else stdout.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(dir) => write_file(&dir.join(name), bytes),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
