use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64;

/// Lowercase, then split on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sparse hashed n-gram counts, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(usize, u32)>,
}

impl FeatureVector {
    pub fn from_counts(counts: BTreeMap<usize, u32>) -> Self {
        FeatureVector {
            entries: counts.into_iter().filter(|&(_, c)| c > 0).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0, |pos| self.entries[pos].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn hash_index(gram: &str, feature_dim: usize) -> usize {
    (fnv1a64(gram.as_bytes()) % feature_dim as u64) as usize
}

/// Unigrams, plus `_`-joined adjacent bigrams when `ngram_max == 2`,
/// hashed with FNV-1a-64 modulo `feature_dim`.
pub fn featurize<S: AsRef<str>>(tokens: &[S], feature_dim: usize, ngram_max: u8) -> FeatureVector {
    assert!(feature_dim >= 2, "feature_dim must be at least 2");
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(hash_index(t.as_ref(), feature_dim)).or_insert(0) += 1;
    }
    if ngram_max >= 2 {
        let mut bigram = String::new();
        for pair in tokens.windows(2) {
            bigram.clear();
            bigram.push_str(pair[0].as_ref());
            bigram.push('_');
            bigram.push_str(pair[1].as_ref());
            *counts.entry(hash_index(&bigram, feature_dim)).or_insert(0) += 1;
        }
    }
    FeatureVector::from_counts(counts)
}
