//! Explanation generation: prompt rendering, pluggable backends, a persistent
//! cache, and export of the generator's fine-tune job.

mod backend;
mod cache;
mod finetune;
mod prompt;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use backend::{
    stub_explain, BackendDescriptor, BackendKind, CommandBackend, CueRule, ExplainRequest,
    ExplanationBackend, HttpBackend, StubBackend, STUB_DEFAULT_EXPLANATION,
};
pub use cache::{cache_key, CacheEntry, ExplanationCache};
pub use finetune::{build_pairs, export_finetune_job, read_finetune_job, FinetuneJobSpec, TrainingPair};
pub use prompt::{build_prompt, PromptLayout, PromptTemplate, CANONICAL_VERSION, EXPLAIN_INSTRUCTION};

use crate::corpus::LabeledExample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub example_id: String,
    pub text: String,
    pub backend_id: String,
    pub prompt_version: String,
}

/// A backend plus the bookkeeping needed to audit it: how many times it was
/// actually called, and how many calls may be in flight at once.
pub struct Explainer {
    backend: Box<dyn ExplanationBackend>,
    max_parallel: usize,
    invocations: AtomicUsize,
}

impl Explainer {
    pub fn new(backend: Box<dyn ExplanationBackend>, max_parallel: usize) -> Self {
        Explainer {
            backend,
            max_parallel: max_parallel.max(1),
            invocations: AtomicUsize::new(0),
        }
    }

    pub fn from_descriptor(descriptor: &BackendDescriptor) -> Result<Self> {
        Ok(Explainer::new(descriptor.build()?, descriptor.max_parallel))
    }

    pub fn backend_id(&self) -> &str {
        self.backend.backend_id()
    }

    pub fn max_parallel(&self) -> usize {
        self.max_parallel
    }

    /// Number of backend calls made so far (cache hits excluded).
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }
}

impl std::fmt::Debug for Explainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Explainer")
            .field("backend_id", &self.backend_id())
            .field("max_parallel", &self.max_parallel)
            .field("invocations", &self.invocations())
            .finish()
    }
}

/// Trim, then replace every whitespace run containing a line break with one space.
pub fn single_paragraph(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending = String::new();
    let mut saw_newline = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() {
            pending.push(ch);
            saw_newline |= ch == '\n' || ch == '\r';
        } else {
            if saw_newline {
                out.push(' ');
            } else {
                out.push_str(&pending);
            }
            pending.clear();
            saw_newline = false;
            out.push(ch);
        }
    }
    out
}

/// Return the cached explanation for `example`, or call the backend once and cache the result.
pub fn generate_explanation(
    explainer: &Explainer,
    template: &PromptTemplate,
    example: &LabeledExample,
    cache: &ExplanationCache,
) -> Result<Explanation> {
    template.validate()?;
    let key = cache_key(&template.version, &example.text);
    if let Some(hit) = cache.get(&key) {
        return Ok(Explanation {
            example_id: example.id.clone(),
            text: hit.explanation_text,
            backend_id: hit.backend_id,
            prompt_version: hit.prompt_version,
        });
    }

    let prompt = build_prompt(template, &example.text)?;
    explainer.invocations.fetch_add(1, Ordering::SeqCst);
    let raw = explainer
        .backend
        .explain(&ExplainRequest {
            prompt: &prompt,
            text: &example.text,
        })
        .map_err(|message| Error::Backend {
            backend_id: explainer.backend_id().to_string(),
            example_id: example.id.clone(),
            message,
        })?;
    let text = single_paragraph(&raw);
    if text.is_empty() {
        return Err(Error::EmptyResponse {
            backend_id: explainer.backend_id().to_string(),
            example_id: example.id.clone(),
        });
    }

    cache.insert(CacheEntry {
        key,
        example_id: example.id.clone(),
        input_text: example.text.clone(),
        explanation_text: text.clone(),
        backend_id: explainer.backend_id().to_string(),
        prompt_version: template.version.clone(),
        created_at: Utc::now(),
    })?;
    Ok(Explanation {
        example_id: example.id.clone(),
        text,
        backend_id: explainer.backend_id().to_string(),
        prompt_version: template.version.clone(),
    })
}

/// Explain many examples with up to `max_parallel` backend calls in flight.
/// Output order follows `examples`; the first failure (in input order) is returned.
///
/// Two examples with identical text that miss concurrently may both reach the
/// backend; the later cache write wins.
pub fn generate_explanations(
    explainer: &Explainer,
    template: &PromptTemplate,
    examples: &[LabeledExample],
    cache: &ExplanationCache,
) -> Result<Vec<Explanation>> {
    template.validate()?;
    let workers = explainer.max_parallel.min(examples.len());
    if workers <= 1 {
        return examples
            .iter()
            .map(|ex| generate_explanation(explainer, template, ex, cache))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<Explanation>>> = (0..examples.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= examples.len() {
                            break;
                        }
                        done.push((i, generate_explanation(explainer, template, &examples[i], cache)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("explanation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index visited"))
        .collect()
}

/// Explanations keyed by example id.
pub fn explanation_map(explanations: Vec<Explanation>) -> HashMap<String, Explanation> {
    explanations
        .into_iter()
        .map(|e| (e.example_id.clone(), e))
        .collect()
}
