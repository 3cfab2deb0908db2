//! Two-stage inference: whole-song sentence alignment, then word alignment
//! inside each sliced sentence segment.

mod matrix_file;
mod output;
mod pipeline;

pub use matrix_file::{load_matrix, matrix_path_for, save_matrix, SavedMatrix};
pub use output::{lrc_stamp, ModelVersions, SentenceOnset, SongAlignment, WordOnset};
pub use pipeline::{
    align_sentences, align_words, segment_frame_range, slice_segments, smooth_monotonic, AlignedUnit,
    AlignmentResult, Cascade, CascadeOptions, CascadeOutput, Segment,
    StageTimes,
};
