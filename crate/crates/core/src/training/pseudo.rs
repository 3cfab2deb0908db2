use super::examples::{segment_frames, SongExample};
use crate::audio::{stack_frames, SENTENCE_STACK};
use crate::datasets::LabelUnit;
use crate::error::Result;
use crate::model::{align, AlignerWeights, Level};
use crate::par::{self, Exec};

/// A song labelled by a model, with the mean confidence of its decoded rows.
#[derive(Clone, Debug)]
pub struct PseudoLabeled {
    pub example: SongExample,
    pub confidence: f64,
}

/// Labels songs with a trained model and keeps those whose mean confidence is
/// at least `confidence_floor`.
///
/// Sentence-level weights label line onsets over the whole song. Word-level
/// weights label word onsets line by line, cropping around the song's existing
/// line onsets; songs without line onsets are skipped.
pub fn pseudo_label(
    weights: &AlignerWeights,
    unlabeled: &[SongExample],
    confidence_floor: f64,
    pad_sec: f64,
    exec: Exec,
) -> Result<Vec<PseudoLabeled>> {
    let results = par::map(exec, unlabeled, |ex| label_one(weights, ex, pad_sec));
    let mut out = Vec::new();
    for r in results {
        if let Some(p) = r? {
            if p.confidence >= confidence_floor {
                out.push(p);
            }
        }
    }
    Ok(out)
}

fn label_one(weights: &AlignerWeights, ex: &SongExample, pad: f64) -> Result<Option<PseudoLabeled>> {
    let mut labeled = ex.clone();
    let confidences: Vec<f64> = match weights.config.level {
        Level::Sentence => {
            let stacked = stack_frames(&ex.features, SENTENCE_STACK)?;
            let m = align(&ex.tokens.tokens, &stacked, weights)?;
            let mut conf = Vec::new();
            labeled.labels.sentences = ex
                .tokens
                .sentence_starts
                .iter()
                .zip(&ex.tokens.source_lines)
                .map(|(&row, text)| {
                    conf.push(m.confidence(row));
                    LabelUnit {
                        start_sec: stacked.frame_to_seconds(m.argmax(row)),
                        text: text.clone(),
                    }
                })
                .collect();
            conf
        }
        Level::Word => {
            if ex.labels.sentences.len() != ex.tokens.num_sentences() {
                return Ok(None);
            }
            let spf = ex.features.seconds_per_frame();
            let n = ex.tokens.num_sentences();
            let mut words = Vec::with_capacity(ex.tokens.num_words());
            let mut conf = Vec::new();
            for line in 0..n {
                let start = (ex.labels.sentences[line].start_sec - pad).max(0.0);
                let end = if line + 1 < n {
                    ex.labels.sentences[line + 1].start_sec.max(ex.labels.sentences[line].start_sec) + pad
                } else {
                    ex.duration_sec()
                };
                let (f0, f1) = segment_frames(start, end, spf, ex.features.num_frames());
                let seg = ex.features.slice_frames(f0, f1);
                let range = ex.tokens.line_token_range(line);
                let m = align(&ex.tokens.tokens[range.clone()], &seg, weights)?;
                for w in ex.tokens.sentence_word_range(line) {
                    let row = ex.tokens.word_starts[w] - range.start;
                    conf.push(m.confidence(row));
                    words.push(LabelUnit {
                        start_sec: (f0 + m.argmax(row)) as f64 * spf,
                        text: ex.tokens.source_words[w].clone(),
                    });
                }
            }
            labeled.labels.words = Some(words);
            conf
        }
    };
    if confidences.is_empty() {
        return Ok(None);
    }
    let confidence = confidences.iter().sum::<f64>() / confidences.len() as f64;
    Ok(Some(PseudoLabeled {
        example: labeled,
        confidence,
    }))
}
