//! Experiments: augmentation, training, prediction and evaluation for one
//! seed or several, and the text-only vs. text+explanation comparison.

mod config;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{default_stub_cues, ClassifierConfig, ExperimentConfig, Mode};

use crate::classifier::{decide, ClassifierBackend, ClassifierRegistry, PredictionRecord};
use crate::corpus::{parse_dataset, Dataset, Emotion, EmotionLabelSet, Split};
use crate::error::{Error, Result};
use crate::explainer::{generate_explanations, Explainer, ExplanationCache};
use crate::io::{read_json, read_jsonl, write_file, write_json_pretty, write_jsonl};
use crate::metrics::{evaluate, MetricsReport, RunAggregate};
use crate::report::{self, ErrorBucket, Format};

/// Original text, one space, explanation. Nothing else is touched.
pub fn augment_example(text: &str, explanation: &str) -> String {
    let mut s = String::with_capacity(text.len() + 1 + explanation.len());
    s.push_str(text);
    s.push(' ');
    s.push_str(explanation);
    s
}

/// Explanation text per (split, example id).
pub type ExplanationTable = HashMap<(Split, String), String>;

/// Parsed datasets plus, in explanation mode, one explanation per example.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub dev: Option<Dataset>,
    pub test: Dataset,
    pub explanations: Option<ExplanationTable>,
}

impl Experiment {
    /// Parse the configured files and, in explanation mode, resolve every
    /// explanation through `explain` (cache first, then backend).
    pub fn load(config: &ExperimentConfig, explain: Option<(&Explainer, &ExplanationCache)>) -> Result<Self> {
        config.validate()?;
        let parse = |path: &Path, split| parse_dataset(path, split).map_err(|e| e.in_stage("parse"));
        let train = parse(&config.train_path, Split::Train)?;
        let dev = config
            .dev_path
            .as_deref()
            .map(|p| parse(p, Split::Dev))
            .transpose()?;
        let test = parse(&config.test_path, Split::Test)?;
        Self::from_datasets(config, train, dev, test, explain)
    }

    pub fn from_datasets(
        config: &ExperimentConfig,
        train: Dataset,
        dev: Option<Dataset>,
        test: Dataset,
        explain: Option<(&Explainer, &ExplanationCache)>,
    ) -> Result<Self> {
        config.validate()?;
        let explanations = match config.mode {
            Mode::TextOnly => None,
            Mode::TextPlusExplanation => {
                let (explainer, cache) = explain.ok_or_else(|| {
                    Error::Config("text_plus_explanation mode needs an explanation backend".into())
                })?;
                let template = config.template()?;
                let mut table = ExplanationTable::new();
                for ds in std::iter::once(&train).chain(dev.as_ref()).chain(std::iter::once(&test)) {
                    let generated = generate_explanations(explainer, &template, &ds.examples, cache)
                        .map_err(|e| e.in_stage("explain"))?;
                    for e in generated {
                        table.insert((ds.split, e.example_id), e.text);
                    }
                }
                Some(table)
            }
        };
        Ok(Experiment {
            config: config.clone(),
            train,
            dev,
            test,
            explanations,
        })
    }

    /// Same experiment, other mode. Switching to text-only drops explanations;
    /// switching to explanation mode needs them already present.
    pub fn with_mode(&self, mode: Mode) -> Result<Self> {
        let mut next = self.clone();
        next.config.mode = mode;
        match mode {
            Mode::TextOnly => next.explanations = None,
            Mode::TextPlusExplanation if next.explanations.is_none() => {
                return Err(Error::Config("no explanations loaded for text_plus_explanation".into()))
            }
            Mode::TextPlusExplanation => {}
        }
        Ok(next)
    }

    /// The strings the classifier sees, for training and prediction alike.
    pub fn classifier_inputs(&self, dataset: &Dataset) -> Result<Vec<(String, EmotionLabelSet)>> {
        dataset
            .examples
            .iter()
            .map(|ex| {
                let text = match (self.config.mode, &self.explanations) {
                    (Mode::TextOnly, _) => ex.text.clone(),
                    (Mode::TextPlusExplanation, Some(table)) => {
                        let explanation = table
                            .get(&(dataset.split, ex.id.clone()))
                            .filter(|e| !e.is_empty())
                            .ok_or_else(|| Error::Data {
                                example_id: ex.id.clone(),
                                message: format!("no explanation for this {} example", dataset.split),
                            })?;
                        augment_example(&ex.text, explanation)
                    }
                    (Mode::TextPlusExplanation, None) => {
                        return Err(Error::Config("explanations were not resolved".into()))
                    }
                };
                Ok((text, ex.labels))
            })
            .collect()
    }

    /// Explanations of one split keyed by example id (empty in text-only mode).
    pub fn explanations_for(&self, split: Split) -> HashMap<String, String> {
        self.explanations
            .iter()
            .flatten()
            .filter(|((s, _), _)| *s == split)
            .map(|((_, id), text)| (id.clone(), text.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub mode: Mode,
    pub metrics: MetricsReport<f64>,
    pub predictions: Vec<PredictionRecord<f64>>,
    pub dev_metrics: Option<MetricsReport<f64>>,
}

fn predict_split(
    model: &dyn crate::classifier::Predictor<f64>,
    inputs: &[(String, EmotionLabelSet)],
    dataset: &Dataset,
    threshold: f64,
) -> Result<Vec<PredictionRecord<f64>>> {
    dataset
        .examples
        .iter()
        .zip(inputs)
        .map(|(ex, (text, _))| {
            let probabilities = model.predict_proba(text)?;
            Ok(PredictionRecord {
                example_id: ex.id.clone(),
                probabilities,
                decisions: decide(&probabilities, threshold),
            })
        })
        .collect()
}

fn gold(dataset: &Dataset) -> Vec<EmotionLabelSet> {
    dataset.examples.iter().map(|e| e.labels).collect()
}

/// Train with `seed`, predict the test split (and dev, when present), evaluate.
pub fn run_experiment(
    experiment: &Experiment,
    seed: u64,
    registry: &ClassifierRegistry<f64>,
) -> Result<RunResult> {
    let backend: Arc<dyn ClassifierBackend<f64>> = registry
        .resolve(&experiment.config.classifier.backend)
        .map_err(|e| e.in_stage("train"))?;
    let train_config = crate::classifier::TrainConfig {
        seed,
        ..experiment.config.train.clone()
    };
    let threshold = train_config.threshold;

    let train_inputs = experiment
        .classifier_inputs(&experiment.train)
        .map_err(|e| e.in_stage("augment"))?;
    let model = backend
        .train(&train_inputs, &train_config)
        .map_err(|e| e.in_stage("train"))?;

    let test_inputs = experiment
        .classifier_inputs(&experiment.test)
        .map_err(|e| e.in_stage("augment"))?;
    let predictions = predict_split(model.as_ref(), &test_inputs, &experiment.test, threshold)
        .map_err(|e| e.in_stage("predict"))?;
    let decided: Vec<_> = predictions.iter().map(|p| p.decisions).collect();
    let metrics = evaluate(&gold(&experiment.test), &decided).map_err(|e| e.in_stage("evaluate"))?;

    let dev_metrics = match &experiment.dev {
        Some(dev) => {
            let inputs = experiment.classifier_inputs(dev).map_err(|e| e.in_stage("augment"))?;
            let preds = predict_split(model.as_ref(), &inputs, dev, threshold).map_err(|e| e.in_stage("predict"))?;
            let decided: Vec<_> = preds.iter().map(|p| p.decisions).collect();
            Some(evaluate(&gold(dev), &decided).map_err(|e| e.in_stage("evaluate"))?)
        }
        None => None,
    };

    Ok(RunResult {
        seed,
        mode: experiment.config.mode,
        metrics,
        predictions,
        dev_metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRun {
    pub aggregate: RunAggregate<f64>,
    pub runs: Vec<RunResult>,
}

/// One run per configured seed, in parallel; results stay in seed order.
pub fn run_multi(experiment: &Experiment, registry: &ClassifierRegistry<f64>) -> Result<MultiRun> {
    experiment.config.validate()?;
    let seeds = &experiment.config.run_seeds;
    let results: Vec<Result<RunResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_experiment(experiment, seed, registry)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let runs = results
        .into_iter()
        .zip(seeds)
        .map(|(r, &seed)| r.map_err(|e| Error::Run { seed, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<&MetricsReport<f64>> = runs.iter().map(|r| &r.metrics).collect();
    let aggregate = RunAggregate::from_reports(seeds, &reports)?;
    Ok(MultiRun { aggregate, runs })
}

/// `aggregate.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFile {
    pub method: String,
    pub mode: Mode,
    #[serde(flatten)]
    pub aggregate: RunAggregate<f64>,
}

pub fn method_name(mode: Mode, config: &ExperimentConfig) -> String {
    let classifier = config.classifier.backend.to_string();
    match mode {
        Mode::TextOnly => format!("Text Only ({classifier})"),
        Mode::TextPlusExplanation => {
            format!("Text + Exp ({}) + {classifier}", config.backend.backend_id)
        }
    }
}

/// Write `predictions_<seed>.jsonl`, `metrics_<seed>.json` (and
/// `metrics_dev_<seed>.json`) for every run, then `aggregate.json`.
pub fn write_multi_run(dir: &Path, method: &str, multi: &MultiRun) -> Result<()> {
    let mut mode = Mode::TextOnly;
    for run in &multi.runs {
        mode = run.mode;
        write_jsonl(&dir.join(format!("predictions_{}.jsonl", run.seed)), &run.predictions)?;
        write_file(
            &dir.join(format!("metrics_{}.json", run.seed)),
            run.metrics.to_json_pretty()? + "\n",
        )?;
        if let Some(dev) = &run.dev_metrics {
            write_file(
                &dir.join(format!("metrics_dev_{}.json", run.seed)),
                dev.to_json_pretty()? + "\n",
            )?;
        }
    }
    write_json_pretty(
        &dir.join("aggregate.json"),
        &AggregateFile {
            method: method.to_string(),
            mode,
            aggregate: multi.aggregate.clone(),
        },
    )
}

/// One line of `explanations_test.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub example_id: String,
    pub explanation: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub text_only: MultiRun,
    pub text_plus_explanation: MultiRun,
    pub buckets: Vec<ErrorBucket>,
}

/// Both modes over all seeds, written under `out_dir/<mode>/`, followed by
/// the report (`report.md` or `report.csv`) and `errors_<label>.md`.
pub fn run_comparison(
    config: &ExperimentConfig,
    registry: &ClassifierRegistry<f64>,
    explainer: &Explainer,
    cache: &ExplanationCache,
    out_dir: &Path,
    format: Format,
) -> Result<Comparison> {
    let base = ExperimentConfig {
        mode: Mode::TextPlusExplanation,
        ..config.clone()
    };
    let with_exp = Experiment::load(&base, Some((explainer, cache)))?;
    let text_only = with_exp.with_mode(Mode::TextOnly)?;

    let mut results = Vec::with_capacity(2);
    for experiment in [&text_only, &with_exp] {
        let mode = experiment.config.mode;
        let multi = run_multi(experiment, registry)?;
        write_multi_run(&out_dir.join(mode.name()), &method_name(mode, config), &multi)?;
        results.push(multi);
    }
    let mut rows: Vec<ExplanationRow> = with_exp
        .explanations_for(Split::Test)
        .into_iter()
        .map(|(example_id, explanation)| ExplanationRow { example_id, explanation })
        .collect();
    rows.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    write_jsonl(
        &out_dir.join(Mode::TextPlusExplanation.name()).join("explanations_test.jsonl"),
        &rows,
    )?;

    let buckets = write_report_from_dir(out_dir, &with_exp.test, config.train.threshold, format)?;
    let text_plus_explanation = results.pop().expect("two runs");
    let text_only = results.pop().expect("two runs");
    Ok(Comparison {
        text_only,
        text_plus_explanation,
        buckets,
    })
}

/// Rebuild the report from the files a comparison run left in `out_dir`.
/// Error analysis uses the first seed of the explanation run.
pub fn write_report_from_dir(
    out_dir: &Path,
    test: &Dataset,
    threshold: f64,
    format: Format,
) -> Result<Vec<ErrorBucket>> {
    let mut overall = Vec::new();
    let mut per_emotion = Vec::new();
    for mode in Mode::BOTH {
        let path = out_dir.join(mode.name()).join("aggregate.json");
        if !path.exists() {
            continue;
        }
        let file: AggregateFile = read_json(&path)?;
        per_emotion.push((file.method.clone(), report::per_emotion_scores(&file.aggregate.per_label_means())));
        overall.push((file.method, file.aggregate));
    }
    if overall.is_empty() {
        return Err(Error::Consistency(format!(
            "no aggregate.json under {}",
            out_dir.display()
        )));
    }
    let doc = report::render_report(&overall, &per_emotion, format)?;
    write_file(&out_dir.join(format!("report.{}", format.extension())), doc)?;

    // Error analysis prefers the explanation run, else whatever exists.
    let (mode, seeds) = Mode::BOTH
        .iter()
        .rev()
        .find_map(|&m| {
            let p = out_dir.join(m.name()).join("aggregate.json");
            read_json::<AggregateFile>(&p).ok().map(|f| (m, f.aggregate.seeds))
        })
        .expect("an aggregate was read above");
    let dir = out_dir.join(mode.name());
    let predictions: Vec<PredictionRecord<f64>> =
        read_jsonl(&dir.join(format!("predictions_{}.jsonl", seeds[0])))?;
    let explanations: Option<HashMap<String, String>> = {
        let p = dir.join("explanations_test.jsonl");
        if p.exists() {
            let rows: Vec<ExplanationRow> = read_jsonl(&p)?;
            Some(rows.into_iter().map(|r| (r.example_id, r.explanation)).collect())
        } else {
            None
        }
    };
    let buckets = report::error_analysis(test, &predictions, explanations.as_ref(), threshold)?;
    for label in Emotion::ALL {
        write_file(
            &out_dir.join(format!("errors_{}.md", label.name())),
            report::render_error_report(label, &buckets),
        )?;
    }
    Ok(buckets)
}

/// Files `run_comparison` produces, relative to its output directory.
pub fn comparison_artifacts(config: &ExperimentConfig, format: Format) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for mode in Mode::BOTH {
        let dir = PathBuf::from(mode.name());
        for seed in &config.run_seeds {
            files.push(dir.join(format!("predictions_{seed}.jsonl")));
            files.push(dir.join(format!("metrics_{seed}.json")));
            if config.dev_path.is_some() {
                files.push(dir.join(format!("metrics_dev_{seed}.json")));
            }
        }
        files.push(dir.join("aggregate.json"));
    }
    files.push(PathBuf::from(Mode::TextPlusExplanation.name()).join("explanations_test.jsonl"));
    files.push(PathBuf::from(format!("report.{}", format.extension())));
    for label in Emotion::ALL {
        files.push(PathBuf::from(format!("errors_{}.md", label.name())));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmentation_is_byte_faithful() {
        assert_eq!(
            augment_example(
                "But not very happy.",
                "The speaker conveys a sense of dissatisfaction or disappointment, but without strong emotion."
            ),
            "But not very happy. The speaker conveys a sense of dissatisfaction or disappointment, but without strong emotion."
        );
        assert_eq!(augment_example("a", "b"), "a b");
        assert_eq!(augment_example("a ", "b"), "a  b");
    }
}
