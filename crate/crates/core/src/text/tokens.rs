//! Lyrics → IPA token sequences with word and line structure.

use super::{G2pRegistry, Vocabulary};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// IPA token ids for a lyric (or one line of it) plus word/line boundaries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<usize>,
    /// Token index of the first token of each word.
    pub word_starts: Vec<usize>,
    /// Token index of the first token of each line; always also a word start.
    pub sentence_starts: Vec<usize>,
    /// Normalised word text, one per entry of `word_starts`.
    pub source_words: Vec<String>,
    /// Original (trimmed) text of each line.
    pub source_lines: Vec<String>,
    pub language_tag: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.word_starts.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_starts.len()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ShapeMismatch(format!("token sequence: {m}")));
        let increasing_in_range = |v: &[usize]| {
            v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&i| i < self.tokens.len())
        };
        if !increasing_in_range(&self.word_starts) {
            return bad("word_starts must be strictly increasing and in range");
        }
        if !increasing_in_range(&self.sentence_starts) {
            return bad("sentence_starts must be strictly increasing and in range");
        }
        if self
            .sentence_starts
            .iter()
            .any(|s| self.word_starts.binary_search(s).is_err())
        {
            return bad("every sentence start must be a word start");
        }
        if self.source_words.len() != self.word_starts.len() {
            return bad("source_words and word_starts differ in length");
        }
        if self.source_lines.len() != self.sentence_starts.len() {
            return bad("source_lines and sentence_starts differ in length");
        }
        Ok(())
    }

    /// Token range of line `i`, excluding separator silence.
    pub fn sentence_token_range(&self, i: usize, silence_id: usize) -> Range<usize> {
        let start = self.sentence_starts[i];
        let mut end = self
            .sentence_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.tokens.len());
        while end > start + 1 && self.tokens[end - 1] == silence_id {
            end -= 1;
        }
        start..end
    }

    /// Token range of line `i` given that lines are joined by exactly one
    /// separator token (as [`lyrics_to_ipa`] produces).
    pub fn line_token_range(&self, i: usize) -> Range<usize> {
        let start = self.sentence_starts[i];
        let end = self
            .sentence_starts
            .get(i + 1)
            .map_or(self.tokens.len(), |next| next - 1);
        start..end.max(start + 1)
    }

    /// Word indices belonging to line `i`.
    pub fn sentence_word_range(&self, i: usize) -> Range<usize> {
        let start = self.sentence_starts[i];
        let end = self
            .sentence_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.tokens.len());
        let first = self.word_starts.partition_point(|&w| w < start);
        let last = self.word_starts.partition_point(|&w| w < end);
        first..last
    }

    /// Line `i` as a standalone single-line sequence.
    pub fn sentence(&self, i: usize, silence_id: usize) -> TokenSequence {
        let range = self.sentence_token_range(i, silence_id);
        let words = self.sentence_word_range(i);
        TokenSequence {
            tokens: self.tokens[range.clone()].to_vec(),
            word_starts: self.word_starts[words.clone()]
                .iter()
                .map(|w| w - range.start)
                .collect(),
            sentence_starts: vec![0],
            source_words: self.source_words[words].to_vec(),
            source_lines: vec![self.source_lines[i].clone()],
            language_tag: self.language_tag.clone(),
        }
    }
}

/// Lowercases and drops punctuation/symbols, keeping letters, digits and
/// combining diacritics (needed for IPA input such as `k͈`).
pub fn normalize_word(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric() || is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF)
}

/// Converts newline-separated lyrics to IPA tokens.
///
/// Blank lines are skipped; one silence token separates consecutive lines;
/// words are whitespace-delimited within a line.
pub fn lyrics_to_ipa(
    raw_lyrics: &str,
    language: &str,
    g2p: &G2pRegistry,
    vocab: &Vocabulary,
) -> Result<TokenSequence> {
    let backend = g2p.backend(language)?;
    let mut seq = TokenSequence {
        tokens: Vec::new(),
        word_starts: Vec::new(),
        sentence_starts: Vec::new(),
        source_words: Vec::new(),
        source_lines: Vec::new(),
        language_tag: language.to_owned(),
    };
    for line in raw_lyrics.lines() {
        let words: Vec<String> = line
            .split_whitespace()
            .map(normalize_word)
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            continue;
        }
        if !seq.tokens.is_empty() {
            seq.tokens.push(vocab.silence_id());
        }
        seq.sentence_starts.push(seq.tokens.len());
        seq.source_lines.push(line.trim().to_owned());
        for word in words {
            let symbols = backend.phonemize(&word)?;
            if symbols.is_empty() {
                return Err(Error::G2pFailed {
                    word,
                    reason: "backend produced no phonemes".into(),
                });
            }
            seq.word_starts.push(seq.tokens.len());
            for sym in &symbols {
                seq.tokens.push(vocab.map_oov_symbol(sym)?);
            }
            seq.source_words.push(word);
        }
    }
    if seq.tokens.is_empty() {
        return Err(Error::EmptyLyrics);
    }
    Ok(seq)
}

/// On-disk golden fixture for a tokenisation run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFixture {
    pub text: String,
    pub language: String,
    pub token_ids: Vec<usize>,
    pub word_starts: Vec<usize>,
    pub sentence_starts: Vec<usize>,
}

impl From<(&str, &TokenSequence)> for TokenFixture {
    fn from((text, seq): (&str, &TokenSequence)) -> Self {
        Self {
            text: text.to_owned(),
            language: seq.language_tag.clone(),
            token_ids: seq.tokens.clone(),
            word_starts: seq.word_starts.clone(),
            sentence_starts: seq.sentence_starts.clone(),
        }
    }
}
