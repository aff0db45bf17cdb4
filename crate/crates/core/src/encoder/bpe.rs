use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered sub-word pieces. Ids `0..pieces.len()` name pieces; the 256 ids
/// after that are raw UTF-8 bytes used for characters outside the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct SubwordVocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    max_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: usize,
    /// The piece, or the character a fallback byte belongs to.
    pub text: String,
    /// First token of a whitespace-separated word.
    pub word_start: bool,
}

impl From<Vec<String>> for SubwordVocab {
    fn from(pieces: Vec<String>) -> Self {
        Self::from_pieces(pieces)
    }
}

impl From<SubwordVocab> for Vec<String> {
    fn from(v: SubwordVocab) -> Self {
        v.pieces
    }
}

impl SubwordVocab {
    /// Builds a vocabulary from an explicit piece list. Duplicates and empty
    /// pieces are dropped, first occurrence wins.
    pub fn from_pieces<S: Into<String>>(pieces: impl IntoIterator<Item = S>) -> Self {
        let mut v = Self {
            pieces: Vec::new(),
            index: HashMap::new(),
            max_chars: 0,
        };
        for p in pieces {
            v.push(p.into());
        }
        v
    }

    fn push(&mut self, p: String) -> bool {
        if p.is_empty() || self.index.contains_key(&p) {
            return false;
        }
        self.max_chars = self.max_chars.max(p.chars().count());
        self.index.insert(p.clone(), self.pieces.len());
        self.pieces.push(p);
        true
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    /// Piece ids plus the 256 byte-fallback ids.
    pub fn id_count(&self) -> usize {
        self.pieces.len() + 256
    }

    /// Greedy longest match, left to right, inside each whitespace word.
    /// A character no piece covers becomes its UTF-8 bytes, so nothing is
    /// ever out of vocabulary.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let chars: Vec<(usize, char)> = word.char_indices().collect();
            let mut i = 0;
            let mut first = true;
            while i < chars.len() {
                let start = chars[i].0;
                let longest = (1..=self.max_chars.min(chars.len() - i)).rev().find_map(|len| {
                    let end = chars.get(i + len).map_or(word.len(), |c| c.0);
                    self.index.get(&word[start..end]).map(|&id| (len, id, end))
                });
                match longest {
                    Some((len, id, end)) => {
                        out.push(Token {
                            id,
                            text: word[start..end].to_string(),
                            word_start: first,
                        });
                        i += len;
                    }
                    None => {
                        let c = chars[i].1;
                        let mut buf = [0u8; 4];
                        for (k, b) in c.encode_utf8(&mut buf).bytes().enumerate() {
                            out.push(Token {
                                id: self.pieces.len() + b as usize,
                                text: c.to_string(),
                                word_start: first && k == 0,
                            });
                        }
                        i += 1;
                    }
                }
                first = false;
            }
        }
        out
    }

    /// Inverse of [`tokenize`](Self::tokenize) up to whitespace normalisation.
    pub fn detokenize(&self, tokens: &[Token]) -> String {
        let mut bytes = Vec::new();
        for t in tokens {
            if t.word_start && !bytes.is_empty() {
                bytes.push(b' ');
            }
            match self.pieces.get(t.id) {
                Some(p) => bytes.extend_from_slice(p.as_bytes()),
                None => bytes.push((t.id - self.pieces.len()) as u8),
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// One piece per line, in id order.
    pub fn to_lines(&self) -> String {
        self.pieces.iter().map(|p| format!("{p}\n")).collect()
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let pieces: Vec<&str> = text.lines().collect();
        let v = Self::from_pieces(pieces.iter().copied());
        if v.len() != pieces.len() {
            return Err(Error::Format {
                what: "vocabulary",
                detail: "empty or repeated piece".into(),
            });
        }
        Ok(v)
    }
}

/// Learns a byte-pair-style vocabulary of at most `target_size` pieces.
///
/// The alphabet is `a`-`z` plus every character of the corpus. Each round
/// merges the adjacent pair with the highest frequency, ties broken by the
/// lexicographically smallest pair.
pub fn train_vocab<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<SubwordVocab> {
    let mut words: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *words.entry(w.to_string()).or_default() += 1;
        }
    }
    if words.is_empty() {
        return Err(Error::Config("vocabulary corpus is empty".into()));
    }
    let alphabet: BTreeSet<String> = ('a'..='z')
        .map(String::from)
        .chain(words.keys().flat_map(|w| w.chars().map(String::from)))
        .collect();
    if target_size < alphabet.len() {
        return Err(Error::Config(format!(
            "vocabulary size {target_size} is below the alphabet size {}",
            alphabet.len()
        )));
    }
    let mut vocab = SubwordVocab::from_pieces(alphabet);
    let mut segs: Vec<(Vec<String>, usize)> = words
        .into_iter()
        .map(|(w, c)| (w.chars().map(String::from).collect(), c))
        .collect();

    while vocab.len() < target_size {
        let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (s, c) in &segs {
            for p in s.windows(2) {
                *pairs.entry((&p[0], &p[1])).or_default() += c;
            }
        }
        // pairs iterate in lexicographic order and only a strictly larger count replaces the leader
        let best = pairs
            .iter()
            .filter(|((a, b), _)| !vocab.contains(&format!("{a}{b}")))
            .fold(None::<(&(&str, &str), usize)>, |acc, (p, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((p, c)),
            });
        let Some((&(a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        let merged = format!("{a}{b}");
        for (s, _) in &mut segs {
            let mut i = 0;
            while i + 1 < s.len() {
                if s[i] == a && s[i + 1] == b {
                    s[i] = merged.clone();
                    s.remove(i + 1);
                }
                i += 1;
            }
        }
        vocab.push(merged);
    }
    Ok(vocab)
}
