//! Text preprocessing: lyrics to IPA token sequences over a fixed vocabulary.

mod g2p;
mod tokens;
mod vocab;

pub use g2p::{CharIpa, ExternalCommand, G2p, G2pRegistry, Lexicon};
pub use tokens::{lyrics_to_ipa, normalize_word, TokenFixture, TokenSequence};
pub use vocab::{map_oov_symbol, Vocabulary, SILENCE, VOCAB_SIZE};
