//! Seeded synthetic corpora with known structure.
//!
//! * Keyword corpus: label `k` is on iff emotion `k`'s keyword is in the text.
//! * Latent-cue corpus: each emotion owns a pool of opaque cue tokens; train
//!   and test draw from disjoint halves of every pool, so the text alone does
//!   not generalize. A stub cue map turns every cue token into a clause shared
//!   across the pool, which carries the label into the explanation.

use crate::corpus::{Dataset, Emotion, EmotionLabelSet, LabeledExample, Split, NUM_LABELS};
use crate::explainer::CueRule;
use crate::rng::SplitMix64;

const FILLER: &[&str] = &[
    "the", "a", "today", "morning", "went", "back", "home", "after", "work", "with", "my",
    "friend", "we", "walked", "around", "city", "park", "bus", "late", "again", "then",
    "saw", "road", "window", "coffee", "table", "phone", "rain", "street", "later", "called",
    "brother", "sister", "neighbor", "dinner", "story", "door", "office", "train", "letter",
];

pub const KEYWORDS: [&str; NUM_LABELS] = ["furious", "terrified", "delighted", "heartbroken", "astonished"];

/// Clause the latent-cue stub attaches to each emotion's cue tokens.
pub const LATENT_CLAUSES: [&str; NUM_LABELS] = [
    "hints at hostility",
    "hints at danger",
    "hints at celebration",
    "hints at grief",
    "hints at the unexpected",
];

fn random_labels(rng: &mut SplitMix64, p: f64) -> EmotionLabelSet {
    EmotionLabelSet::new([(); NUM_LABELS].map(|_| rng.unit_f64() < p))
}

fn sentence(rng: &mut SplitMix64, mut words: Vec<String>) -> String {
    let filler = 4 + rng.below(5) as usize;
    for _ in 0..filler {
        words.push(FILLER[rng.below(FILLER.len() as u64) as usize].to_string());
    }
    rng.shuffle(&mut words);
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push('.');
    s
}

fn build(split: Split, prefix: &str, rows: Vec<(String, EmotionLabelSet)>) -> Dataset {
    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (text, labels))| LabeledExample::new(format!("{prefix}-{i:05}"), text, labels))
        .collect();
    Dataset::new(split, examples).expect("synthetic rows are valid")
}

/// Train and test sets where each label is decided by one keyword.
pub fn keyword_corpus(n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    let mut rng = SplitMix64::new(seed);
    let mut make = |n: usize| -> Vec<(String, EmotionLabelSet)> {
        (0..n)
            .map(|_| {
                let labels = random_labels(&mut rng, 0.35);
                let words = labels.positives().map(|e| KEYWORDS[e.index()].to_string()).collect();
                (sentence(&mut rng, words), labels)
            })
            .collect()
    };
    let train = make(n_train);
    let test = make(n_test);
    (build(Split::Train, "kw-train", train), build(Split::Test, "kw-test", test))
}

fn cue_token(e: Emotion, i: usize) -> String {
    format!("kw{}n{i:03}", e.index())
}

pub struct LatentCueCorpus {
    pub train: Dataset,
    pub test: Dataset,
    /// Stub cue map covering every cue token of both splits.
    pub cue_map: Vec<CueRule>,
}

/// `pool` cue tokens per emotion; train uses the first `train_pool`, test the rest.
pub fn latent_cue_corpus(n_train: usize, n_test: usize, seed: u64) -> LatentCueCorpus {
    const POOL: usize = 40;
    const TRAIN_POOL: usize = 30;
    let mut rng = SplitMix64::new(seed);
    let mut make = |n: usize, range: std::ops::Range<usize>| -> Vec<(String, EmotionLabelSet)> {
        (0..n)
            .map(|_| {
                let labels = random_labels(&mut rng, 0.3);
                let words = labels
                    .positives()
                    .map(|e| {
                        let i = range.start + rng.below((range.end - range.start) as u64) as usize;
                        cue_token(e, i)
                    })
                    .collect();
                (sentence(&mut rng, words), labels)
            })
            .collect()
    };
    let train = make(n_train, 0..TRAIN_POOL);
    let test = make(n_test, TRAIN_POOL..POOL);
    let cue_map = Emotion::ALL
        .iter()
        .flat_map(|&e| (0..POOL).map(move |i| CueRule::new(cue_token(e, i), LATENT_CLAUSES[e.index()])))
        .collect();
    LatentCueCorpus {
        train: build(Split::Train, "lc-train", train),
        test: build(Split::Test, "lc-test", test),
        cue_map,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tokenize;

    #[test]
    fn keyword_labels_match_keywords() {
        let (train, test) = keyword_corpus(200, 50, 1);
        for ex in train.examples.iter().chain(&test.examples) {
            let toks = tokenize(&ex.text);
            for e in Emotion::ALL {
                assert_eq!(toks.iter().any(|t| t == KEYWORDS[e.index()]), ex.labels.get(e));
            }
        }
    }

    #[test]
    fn latent_cues_do_not_overlap_between_splits() {
        let c = latent_cue_corpus(100, 40, 2);
        let cue_tokens = |d: &Dataset| -> std::collections::HashSet<String> {
            d.examples
                .iter()
                .flat_map(|ex| tokenize(&ex.text))
                .filter(|t| t.starts_with("kw"))
                .collect()
        };
        assert!(cue_tokens(&c.train).is_disjoint(&cue_tokens(&c.test)));
        assert_eq!(c.cue_map.len(), 5 * 40);
    }

    #[test]
    fn deterministic() {
        assert_eq!(keyword_corpus(20, 5, 9), keyword_corpus(20, 5, 9));
        assert_ne!(keyword_corpus(20, 5, 9).0, keyword_corpus(20, 5, 10).0);
    }
}
