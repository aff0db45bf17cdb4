//! Instruction encoding: sub-word or whole-word tokenisation, a trainable
//! embedding, and a stacked bidirectional LSTM.

mod bpe;
mod lstm;
mod words;

pub use bpe::{train_vocab, SubwordVocab, Token};
pub use lstm::{EncoderConfig, InstructionEncoder, LstmCell, Pooling};
pub use words::{WordVocab, UNK};

use serde::{Deserialize, Serialize};

/// Either tokeniser, behind one interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tokenizer {
    Subword(SubwordVocab),
    Word(WordVocab),
}

impl Tokenizer {
    /// Number of distinct token ids, including byte-fallback ids.
    pub fn id_count(&self) -> usize {
        match self {
            Tokenizer::Subword(v) => v.id_count(),
            Tokenizer::Word(v) => v.len(),
        }
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        match self {
            Tokenizer::Subword(v) => v.tokenize(text).into_iter().map(|t| t.id).collect(),
            Tokenizer::Word(v) => v.ids(text),
        }
    }
}
