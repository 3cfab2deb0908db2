//! Grapheme-to-phoneme backend adapters.
//!
//! Backends turn one normalised word into a list of IPA symbol strings.
//! Symbols need not be in the vocabulary; they are resolved afterwards
//! through the fallback table.

use super::Vocabulary;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Arc;

const LEXICON_EN: &str = include_str!("../../data/lexicon_en.tsv");
const LEXICON_KO: &str = include_str!("../../data/lexicon_ko.tsv");

pub trait G2p: Send + Sync {
    /// IPA symbols for a lowercased, punctuation-free word.
    fn phonemize(&self, word: &str) -> Result<Vec<String>>;
}

/// Treats the word itself as IPA text and segments it against the vocabulary.
/// Latin letters that are not IPA symbols go through the fallback table.
///
/// Reentrant.
#[derive(Clone, Debug)]
pub struct CharIpa {
    vocab: Arc<Vocabulary>,
}

impl CharIpa {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        Self { vocab }
    }
}

impl G2p for CharIpa {
    fn phonemize(&self, word: &str) -> Result<Vec<String>> {
        self.vocab.segment(word)
    }
}

/// Pronouncing-dictionary lookup with an optional backend for unknown words.
///
/// Reentrant.
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
    fallback: Option<Box<dyn G2p>>,
}

impl Lexicon {
    /// Parses `word<TAB>sym sym ...` lines; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, pron) = line.split_once('\t').ok_or_else(|| Error::G2pFailed {
                word: line.to_owned(),
                reason: format!("lexicon line {} has no tab separator", n + 1),
            })?;
            let symbols: Vec<String> = pron.split_whitespace().map(str::to_owned).collect();
            entries.insert(word.trim().to_lowercase(), symbols);
        }
        Ok(Self {
            entries,
            fallback: None,
        })
    }

    pub fn english() -> Self {
        Self::parse(LEXICON_EN).expect("bundled English lexicon parses")
    }

    pub fn korean() -> Self {
        Self::parse(LEXICON_KO).expect("bundled Korean lexicon parses")
    }

    pub fn with_fallback(mut self, fallback: Box<dyn G2p>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl G2p for Lexicon {
    fn phonemize(&self, word: &str) -> Result<Vec<String>> {
        if let Some(p) = self.entries.get(word) {
            return Ok(p.clone());
        }
        match &self.fallback {
            Some(f) => f.phonemize(word),
            None => Err(Error::G2pFailed {
                word: word.to_owned(),
                reason: "not in lexicon".into(),
            }),
        }
    }
}

/// Runs an external program once per word, feeding the word on stdin and
/// reading IPA from stdout (e.g. `espeak-ng -q --ipa -v en`). Whitespace in
/// the output separates symbols; otherwise the output is segmented against
/// the vocabulary.
///
/// Reentrant: every call spawns its own process.
#[derive(Clone, Debug)]
pub struct ExternalCommand {
    program: String,
    args: Vec<String>,
    vocab: Arc<Vocabulary>,
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>, vocab: Arc<Vocabulary>) -> Self {
        Self {
            program: program.into(),
            args,
            vocab,
        }
    }
}

impl G2p for ExternalCommand {
    fn phonemize(&self, word: &str) -> Result<Vec<String>> {
        let fail = |reason: String| Error::G2pFailed {
            word: word.to_owned(),
            reason,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start `{}`: {e}", self.program)))?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(word.as_bytes())
            .map_err(|e| fail(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!(
                "exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8(out.stdout).map_err(|e| fail(e.to_string()))?;
        let text = text.trim();
        if text.split_whitespace().count() > 1 {
            Ok(text.split_whitespace().map(str::to_owned).collect())
        } else {
            self.vocab.segment(text)
        }
    }
}

/// Language tag → backend table, with an optional character-level fallback
/// for unregistered languages.
pub struct G2pRegistry {
    backends: HashMap<String, Box<dyn G2p>>,
    char_fallback: Option<CharIpa>,
}

impl G2pRegistry {
    pub fn empty() -> Self {
        Self {
            backends: HashMap::new(),
            char_fallback: None,
        }
    }

    /// Bundled English and Korean lexicons (unknown words fall back to
    /// character-level IPA), an `ipa` pass-through language, and the
    /// character-level fallback for every other language.
    pub fn bundled(vocab: Arc<Vocabulary>) -> Self {
        let chars = CharIpa::new(vocab);
        let mut reg = Self::empty();
        reg.register("en", Box::new(Lexicon::english().with_fallback(Box::new(chars.clone()))));
        reg.register("ko", Box::new(Lexicon::korean().with_fallback(Box::new(chars.clone()))));
        reg.register("ipa", Box::new(chars.clone()));
        reg.char_fallback = Some(chars);
        reg
    }

    pub fn register(&mut self, language: impl Into<String>, backend: Box<dyn G2p>) {
        self.backends.insert(language.into(), backend);
    }

    pub fn set_char_fallback(&mut self, fallback: Option<CharIpa>) {
        self.char_fallback = fallback;
    }

    pub fn backend(&self, language: &str) -> Result<&dyn G2p> {
        if let Some(b) = self.backends.get(language) {
            return Ok(b.as_ref());
        }
        self.char_fallback
            .as_ref()
            .map(|c| c as &dyn G2p)
            .ok_or_else(|| Error::UnknownLanguage(language.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::v1())
    }

    #[test]
    fn lexicon_lookup_and_fallback() {
        let chars = CharIpa::new(vocab());
        let lex = Lexicon::english().with_fallback(Box::new(chars));
        assert_eq!(lex.phonemize("hello").unwrap(), vec!["h", "ə", "l", "oʊ"]);
        // not in lexicon: letters read as IPA, `g` via the fallback table
        assert_eq!(lex.phonemize("dog").unwrap(), vec!["d", "o", "g"]);
    }

    #[test]
    fn lexicon_without_fallback_reports_unknown_words() {
        let err = Lexicon::english().phonemize("zyzzyva").unwrap_err();
        assert!(matches!(err, Error::G2pFailed { .. }));
    }

    #[test]
    fn registry_without_fallback_rejects_unknown_language() {
        let mut reg = G2pRegistry::bundled(vocab());
        assert!(reg.backend("fr").is_ok());
        reg.set_char_fallback(None);
        assert!(matches!(reg.backend("fr"), Err(Error::UnknownLanguage(l)) if l == "fr"));
        assert!(reg.backend("en").is_ok());
    }

    #[cfg(unix)]
    #[test]
    fn external_command_output_is_segmented() {
        let g = ExternalCommand::new("cat", vec![], vocab());
        assert_eq!(g.phonemize("tʃaɪ").unwrap(), vec!["tʃ", "aɪ"]);
        let missing = ExternalCommand::new("/nonexistent/g2p", vec![], vocab());
        assert!(missing.phonemize("a").is_err());
    }
}
