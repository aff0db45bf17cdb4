use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

/// Placeholder for words outside the vocabulary.
pub const UNK: &str = "<UNK>";

/// Whitespace word vocabulary; id 0 is [`UNK`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for WordVocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<WordVocab> for Vec<String> {
    fn from(v: WordVocab) -> Self {
        v.words
    }
}

impl WordVocab {
    /// Keeps words seen at least `min_count` times, most frequent first.
    pub fn train<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for line in corpus {
            for w in line.as_ref().split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let words: Vec<String> = std::iter::once(UNK.to_string())
            .chain(kept.into_iter().map(|(w, _)| w.to_string()))
            .collect();
        words.into()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(0))
            .collect()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }
}
