use crate::audio::{N_MELS, SENTENCE_STACK};
use crate::error::{Error, Result};
use crate::text::VOCAB_SIZE;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Granularity of a model in the cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Sentence,
    Word,
}

impl Level {
    /// Frame stacking the level's audio features use.
    pub fn stack_factor(self) -> usize {
        match self {
            Level::Sentence => SENTENCE_STACK,
            Level::Word => 1,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Sentence => "sentence",
            Level::Word => "word",
        })
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Level::Sentence),
            "word" => Ok(Level::Word),
            other => Err(Error::InvalidConfig(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub level: Level,
    /// Channel width of each CBHG encoder.
    pub c_encoder: usize,
    /// Channel expansion factor applied after the encoders.
    pub c_in: usize,
    /// Number of CBHG encoders (one for text, one for audio).
    pub cbhg_layers: usize,
    /// UNet channels per depth level; starts at 32 and doubles.
    pub unet_channels: Vec<usize>,
    pub vocab_size: usize,
    /// Input feature width (80 × stack factor).
    pub n_mels_effective: usize,
    /// Largest kernel in the CBHG convolution bank (kernels 1..=K).
    pub bank_size: usize,
    pub bank_channels: usize,
    pub highway_layers: usize,
}

impl ModelConfig {
    /// Stock sentence-level model: 256-wide CBHGs, UNet 32-64-128-256.
    pub fn sentence() -> Self {
        Self {
            level: Level::Sentence,
            c_encoder: 256,
            c_in: 8,
            cbhg_layers: 2,
            unet_channels: vec![32, 64, 128, 256],
            vocab_size: VOCAB_SIZE,
            n_mels_effective: N_MELS * SENTENCE_STACK,
            bank_size: 8,
            bank_channels: 128,
            highway_layers: 4,
        }
    }

    /// Stock word-level model: 512-wide CBHGs, UNet 32-64-128.
    pub fn word() -> Self {
        Self {
            level: Level::Word,
            c_encoder: 512,
            c_in: 8,
            cbhg_layers: 2,
            unet_channels: vec![32, 64, 128],
            vocab_size: VOCAB_SIZE,
            n_mels_effective: N_MELS,
            bank_size: 8,
            bank_channels: 128,
            highway_layers: 4,
        }
    }

    pub fn stock(level: Level) -> Self {
        match level {
            Level::Sentence => Self::sentence(),
            Level::Word => Self::word(),
        }
    }

    /// Small configuration for tests: C_in 2, C_enc 8, UNet depth 2.
    pub fn toy(level: Level) -> Self {
        Self {
            level,
            c_encoder: 8,
            c_in: 2,
            cbhg_layers: 2,
            unet_channels: vec![32, 64],
            vocab_size: VOCAB_SIZE,
            n_mels_effective: N_MELS * level.stack_factor(),
            bank_size: 8,
            bank_channels: 8,
            highway_layers: 4,
        }
    }

    pub fn depth(&self) -> usize {
        self.unet_channels.len()
    }

    /// Spatial sizes are padded to a multiple of `2^depth` before the UNet.
    pub fn pad_multiple(&self) -> usize {
        1 << self.depth()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.unet_channels.first() != Some(&32) {
            return bad("UNet must start at 32 channels".into());
        }
        if self.unet_channels.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad("UNet channels must double at every depth".into());
        }
        if self.c_encoder == 0 || self.c_encoder % 2 != 0 {
            return bad(format!("c_encoder must be positive and even, got {}", self.c_encoder));
        }
        if self.c_in == 0 {
            return bad("c_in must be positive".into());
        }
        if self.cbhg_layers != 2 {
            return bad(format!("expected 2 CBHG encoders, got {}", self.cbhg_layers));
        }
        if self.n_mels_effective != N_MELS * self.level.stack_factor() {
            return bad(format!(
                "{} level expects {} input features, got {}",
                self.level,
                N_MELS * self.level.stack_factor(),
                self.n_mels_effective
            ));
        }
        if self.bank_size == 0 || self.bank_channels == 0 {
            return bad("convolution bank must be non-empty".into());
        }
        Ok(())
    }
}
