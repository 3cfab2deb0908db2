use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no grapheme-to-phoneme backend for language `{0}` and character fallback is disabled")]
    UnknownLanguage(String),
    #[error("lyrics contain no non-blank line")]
    EmptyLyrics,
    #[error("IPA symbol `{0}` is neither in the vocabulary nor in the fallback table")]
    NoMapping(String),
    #[error("grapheme-to-phoneme backend failed on `{word}`: {reason}")]
    G2pFailed { word: String, reason: String },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("cannot decode audio: {0}")]
    CorruptAudio(String),
    #[error("features are already stacked (stack factor {0})")]
    AlreadyStacked(usize),

    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("model expects stack factor {expected}, features have {actual}")]
    StackFactorMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input too short: {0}")]
    InputTooShort(String),
    #[error("cannot ensemble an empty list of alignment matrices")]
    EmptyEnsemble,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("no supervised rows in training target")]
    NoSupervisedRows,
    #[error("training data level mismatch: {0}")]
    DataLevelMismatch(String),
    #[error("loss diverged at step {step} (item {item})")]
    DivergedLoss { step: u64, item: String },

    #[error("song has no words")]
    EmptySong,
    #[error("duration must be positive, got {0}")]
    NonpositiveDuration(f64),
    #[error("empty input")]
    EmptyInput,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate song id `{0}`")]
    DuplicateId(String),
    #[error("unknown song `{0}`")]
    UnknownSong(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("invalid onset {onset} s (song duration {duration} s)")]
    InvalidOnset { onset: f64, duration: f64 },
    #[error("invalid file format: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("song `{song_id}`: {source}")]
    InSong {
        song_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches a song id, unless one is already attached.
    pub fn in_song(self, song_id: &str) -> Error {
        match self {
            e @ Error::InSong { .. } => e,
            e => Error::InSong {
                song_id: song_id.to_owned(),
                source: Box::new(e),
            },
        }
    }

    /// The error with any song context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InSong { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Io {
            context: context(),
            source,
        })
    }
}
