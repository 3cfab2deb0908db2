//! Supervised training, pseudo-labelling and the synthetic corpus generator.

mod augment;
mod examples;
mod pseudo;
mod synth;
mod target;
mod trainer;

pub use augment::{augment_features, augment_waveform, scale_spectrum, Augmentation};
pub use examples::{load_examples, SongExample, TrainItem};
pub use pseudo::{pseudo_label, PseudoLabeled};
pub use synth::{synth_corpus, token_templates, write_synth_corpus, SynthConfig, SynthSong};
pub use target::{alignment_loss, TrainTarget};
pub use trainer::{train, TrainLog, TrainLogRow, TrainSpec, Trainer};
