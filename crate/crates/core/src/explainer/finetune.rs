//! Job descriptor for fine-tuning the explanation generator on
//! (prompt, explanation) pairs. Training itself runs in external tooling.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, PromptTemplate};
use super::Explanation;
use crate::corpus::LabeledExample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneJobSpec {
    pub quantization: String,
    pub adapter: String,
    pub batch_size: u32,
    pub grad_accum_steps: u32,
    pub learning_rate: f64,
    pub train_steps: u32,
    pub seed_corpus_ref: PathBuf,
    pub explanation_corpus_ref: PathBuf,
}

impl Default for FinetuneJobSpec {
    fn default() -> Self {
        FinetuneJobSpec {
            quantization: "4bit".into(),
            adapter: "LoRA".into(),
            batch_size: 2,
            grad_accum_steps: 4,
            learning_rate: 1e-4,
            train_steps: 30,
            seed_corpus_ref: PathBuf::from("seed_corpus.csv"),
            explanation_corpus_ref: PathBuf::from("explanations.jsonl"),
        }
    }
}

impl FinetuneJobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.quantization.is_empty() || self.adapter.is_empty() {
            return Err(Error::Config("quantization and adapter must be set".into()));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.train_steps == 0 {
            return Err(Error::Config(
                "batch_size, grad_accum_steps and train_steps must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Hyperparameters {
    quantization: String,
    adapter: String,
    batch_size: u32,
    grad_accum_steps: u32,
    learning_rate: f64,
    train_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JobDescriptor {
    hyperparameters: Hyperparameters,
    seed_corpus_ref: PathBuf,
    explanation_corpus_ref: PathBuf,
    prompt_version: String,
    pairs: Vec<TrainingPair>,
}

/// Pair every seed example with its explanation, in seed-corpus order.
pub fn build_pairs(
    template: &PromptTemplate,
    seed_corpus: &[LabeledExample],
    explanations: &[Explanation],
) -> Result<Vec<TrainingPair>> {
    if seed_corpus.is_empty() {
        return Err(Error::Consistency("seed corpus is empty; fine-tuning needs pairs".into()));
    }
    let mut by_id: HashMap<&str, Vec<&Explanation>> = HashMap::new();
    for e in explanations {
        by_id.entry(e.example_id.as_str()).or_default().push(e);
    }
    let mut missing = Vec::new();
    let mut ambiguous = Vec::new();
    let mut pairs = Vec::with_capacity(seed_corpus.len());
    for ex in seed_corpus {
        match by_id.get(ex.id.as_str()).map(Vec::as_slice) {
            None | Some([]) => missing.push(ex.id.clone()),
            Some([one]) => {
                if one.prompt_version != template.version {
                    return Err(Error::Consistency(format!(
                        "explanation for `{}` was made with prompt `{}`, expected `{}`",
                        ex.id, one.prompt_version, template.version
                    )));
                }
                pairs.push(TrainingPair {
                    prompt: build_prompt(template, &ex.text)?,
                    completion: one.text.clone(),
                });
            }
            Some(_) => ambiguous.push(ex.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Consistency(format!(
            "missing explanations for ids: {}",
            missing.join(", ")
        )));
    }
    if !ambiguous.is_empty() {
        return Err(Error::Consistency(format!(
            "more than one explanation for ids: {}",
            ambiguous.join(", ")
        )));
    }
    Ok(pairs)
}

pub fn export_finetune_job(
    spec: &FinetuneJobSpec,
    template: &PromptTemplate,
    seed_corpus: &[LabeledExample],
    explanations: &[Explanation],
    out_path: impl AsRef<Path>,
) -> Result<PathBuf> {
    spec.validate()?;
    template.validate()?;
    let pairs = build_pairs(template, seed_corpus, explanations)?;
    let descriptor = JobDescriptor {
        hyperparameters: Hyperparameters {
            quantization: spec.quantization.clone(),
            adapter: spec.adapter.clone(),
            batch_size: spec.batch_size,
            grad_accum_steps: spec.grad_accum_steps,
            learning_rate: spec.learning_rate,
            train_steps: spec.train_steps,
        },
        seed_corpus_ref: spec.seed_corpus_ref.clone(),
        explanation_corpus_ref: spec.explanation_corpus_ref.clone(),
        prompt_version: template.version.clone(),
        pairs,
    };
    let out_path = out_path.as_ref();
    let json = serde_json::to_string_pretty(&descriptor).map_err(|e| Error::json("job descriptor", e))?;
    crate::io::write_file(out_path, json + "\n")?;
    Ok(out_path.to_path_buf())
}

/// Read a job descriptor back into its spec and pairs.
pub fn read_finetune_job(path: impl AsRef<Path>) -> Result<(FinetuneJobSpec, Vec<TrainingPair>)> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: JobDescriptor =
        serde_json::from_str(&raw).map_err(|e| Error::json(path.display().to_string(), e))?;
    let h = d.hyperparameters;
    Ok((
        FinetuneJobSpec {
            quantization: h.quantization,
            adapter: h.adapter,
            batch_size: h.batch_size,
            grad_accum_steps: h.grad_accum_steps,
            learning_rate: h.learning_rate,
            train_steps: h.train_steps,
            seed_corpus_ref: d.seed_corpus_ref,
            explanation_corpus_ref: d.explanation_corpus_ref,
        },
        d.pairs,
    ))
}
