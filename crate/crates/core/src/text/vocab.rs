//! The fixed 76-entry IPA vocabulary and the out-of-vocabulary fallback table.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};

/// Reserved entry marking silence between lines.
pub const SILENCE: &str = "<sil>";

/// Number of entries including the silence token.
pub const VOCAB_SIZE: usize = 76;

const VOCAB_V1: &str = include_str!("../../data/vocab_v1.txt");
const FALLBACK_V1: &str = include_str!("../../data/fallback_v1.txt");

/// Bijective symbol ↔ id table. Line index in the vocabulary file is the id.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    entries: Vec<String>,
    ids: HashMap<String, usize>,
    silence_id: usize,
    fallback: BTreeMap<String, String>,
    max_symbol_chars: usize,
}

impl Vocabulary {
    /// The bundled v1 vocabulary and starter fallback table.
    pub fn v1() -> Self {
        Self::parse(VOCAB_V1, FALLBACK_V1).expect("bundled vocabulary is valid")
    }

    /// Parses a one-symbol-per-line vocabulary and a two-column
    /// `oov_symbol in_vocab_symbol` fallback table (`#` starts a comment).
    pub fn parse(vocab_text: &str, fallback_text: &str) -> Result<Self> {
        let entries: Vec<String> = vocab_text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        if entries.len() != VOCAB_SIZE {
            return Err(Error::InvalidVocabulary(format!(
                "expected {VOCAB_SIZE} entries, found {}",
                entries.len()
            )));
        }
        let mut ids = HashMap::with_capacity(entries.len());
        for (i, s) in entries.iter().enumerate() {
            if ids.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate symbol `{s}`")));
            }
        }
        let silence_id = *ids
            .get(SILENCE)
            .ok_or_else(|| Error::InvalidVocabulary(format!("missing `{SILENCE}` entry")))?;

        let mut fallback = BTreeMap::new();
        for (n, line) in fallback_text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(from), Some(to), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::InvalidVocabulary(format!(
                    "fallback line {}: expected two columns",
                    n + 1
                )));
            };
            if ids.contains_key(from) {
                return Err(Error::InvalidVocabulary(format!(
                    "fallback key `{from}` is already in the vocabulary"
                )));
            }
            if to == SILENCE || !ids.contains_key(to) {
                return Err(Error::InvalidVocabulary(format!(
                    "fallback target `{to}` is not a vocabulary symbol"
                )));
            }
            fallback.insert(from.to_owned(), to.to_owned());
        }
        let max_symbol_chars = entries
            .iter()
            .chain(fallback.keys())
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Self {
            entries,
            ids,
            silence_id,
            fallback,
            max_symbol_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn silence_id(&self) -> usize {
        self.silence_id
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.ids.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    /// The 75 IPA symbols, in id order, excluding silence.
    pub fn ipa_symbols(&self) -> impl Iterator<Item = (usize, &str)> {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.silence_id)
            .map(|(i, s)| (i, s.as_str()))
    }

    pub fn fallback_map(&self) -> &BTreeMap<String, String> {
        &self.fallback
    }

    /// Resolves an IPA symbol to an in-vocabulary id, substituting the
    /// nearest pronunciation from the fallback table when needed.
    pub fn map_oov_symbol(&self, symbol: &str) -> Result<usize> {
        if let Some(id) = self.id(symbol) {
            if id != self.silence_id {
                return Ok(id);
            }
        }
        self.fallback
            .get(symbol)
            .and_then(|to| self.id(to))
            .ok_or_else(|| Error::NoMapping(symbol.to_owned()))
    }

    /// Splits a run of IPA text into known symbols by greedy longest match
    /// over vocabulary and fallback keys.
    pub fn segment(&self, ipa: &str) -> Result<Vec<String>> {
        let chars: Vec<char> = ipa.chars().filter(|c| !c.is_whitespace()).collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let longest = (1..=self.max_symbol_chars.min(chars.len() - pos))
                .rev()
                .find_map(|n| {
                    let cand: String = chars[pos..pos + n].iter().collect();
                    let known = (self.ids.contains_key(&cand) && cand != SILENCE)
                        || self.fallback.contains_key(&cand);
                    known.then_some((n, cand))
                });
            match longest {
                Some((n, sym)) => {
                    out.push(sym);
                    pos += n;
                }
                None => return Err(Error::NoMapping(chars[pos].to_string())),
            }
        }
        Ok(out)
    }

    /// Serialises back to the line-oriented vocabulary file format.
    pub fn to_vocab_file(&self) -> String {
        let mut s = self.entries.join("\n");
        s.push('\n');
        s
    }
}

/// Free-function form of [`Vocabulary::map_oov_symbol`].
pub fn map_oov_symbol(symbol: &str, vocab: &Vocabulary) -> Result<usize> {
    vocab.map_oov_symbol(symbol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_vocabulary_has_76_entries_with_one_silence() {
        let v = Vocabulary::v1();
        assert_eq!(v.len(), VOCAB_SIZE);
        assert_eq!(v.ipa_symbols().count(), 75);
        assert_eq!(v.symbol(v.silence_id()), Some(SILENCE));
    }

    #[test]
    fn every_id_round_trips_through_its_symbol() {
        let v = Vocabulary::v1();
        for id in 0..v.len() {
            let sym = v.symbol(id).unwrap();
            assert_eq!(v.id(sym), Some(id));
        }
    }

    #[test]
    fn in_vocab_symbols_map_to_themselves() {
        let v = Vocabulary::v1();
        for (id, sym) in v.ipa_symbols() {
            assert_eq!(v.map_oov_symbol(sym).unwrap(), id);
        }
    }

    #[test]
    fn fallback_symbols_map_to_their_target() {
        let v = Vocabulary::v1();
        assert_eq!(v.map_oov_symbol("ʁ").unwrap(), v.id("x").unwrap());
        for (from, to) in v.fallback_map() {
            let id = v.map_oov_symbol(from).unwrap();
            assert_eq!(v.symbol(id), Some(to.as_str()));
            // idempotent: mapping the result again is a fixed point
            assert_eq!(v.map_oov_symbol(to).unwrap(), id);
        }
    }

    #[test]
    fn unknown_symbol_has_no_mapping() {
        let v = Vocabulary::v1();
        assert!(matches!(v.map_oov_symbol("ǂ"), Err(Error::NoMapping(s)) if s == "ǂ"));
        assert!(matches!(v.map_oov_symbol(SILENCE), Err(Error::NoMapping(_))));
    }

    #[test]
    fn segmentation_prefers_longest_symbol() {
        let v = Vocabulary::v1();
        assert_eq!(v.segment("tʃaɪ").unwrap(), vec!["tʃ", "aɪ"]);
        assert_eq!(v.segment("kʰa").unwrap(), vec!["kʰ", "a"]);
    }

    #[test]
    fn rejects_fallback_target_outside_vocabulary() {
        let err = Vocabulary::parse(VOCAB_V1, "ʁ ǂ\n").unwrap_err();
        assert!(matches!(err, Error::InvalidVocabulary(_)));
    }

    #[test]
    fn vocab_file_round_trips() {
        let v = Vocabulary::v1();
        let again = Vocabulary::parse(&v.to_vocab_file(), FALLBACK_V1).unwrap();
        assert_eq!(v, again);
    }
}
