use lyralign::model::{AlignerWeights, AlignmentMatrix, Level, ModelConfig};
use lyralign::par::Exec;
use lyralign::text::Vocabulary;
use lyralign::training::{
    alignment_loss, pseudo_label, synth_corpus, token_templates, train, write_synth_corpus, SongExample, SynthConfig,
    TrainLog, TrainSpec, TrainTarget, Trainer,
};
use lyralign::Error;
use ndarray::Array2;
use proptest::prelude::*;

fn corpus(n: usize, seed: u64) -> Vec<SongExample> {
    synth_corpus(n, seed, &Vocabulary::v1(), &SynthConfig::default())
        .unwrap()
        .into_iter()
        .map(|s| s.example)
        .collect()
}

fn quick_spec(level: Level, steps: u64) -> TrainSpec {
    TrainSpec {
        batch_size: 2,
        max_steps: steps,
        augmentations: vec![],
        learning_rate: 1e-3,
        ..TrainSpec::stock(level)
    }
}

fn matrix(rows: &[&[f64]]) -> AlignmentMatrix {
    let t = rows[0].len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    AlignmentMatrix::from_logits(Array2::from_shape_vec((rows.len(), t), flat).unwrap())
}

#[test]
fn uniform_row_costs_ln_t() {
    let a = matrix(&[&[0.0; 4]]);
    let l = alignment_loss(&a, &TrainTarget::new(vec![(0, 2)], 4).unwrap()).unwrap();
    assert!((l - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_row_costs_nothing() {
    let a = matrix(&[&[-50.0, 50.0, -50.0]]);
    let l = alignment_loss(&a, &TrainTarget::new(vec![(0, 1)], 3).unwrap()).unwrap();
    assert!(l < 1e-12);
}

#[test]
fn two_rows_match_hand_softmax() {
    let a = matrix(&[&[1.0, 2.0, 0.5], &[0.0, -1.0, 3.0]]);
    let nll = |r: [f64; 3], k: usize| {
        let z: f64 = r.iter().map(|v| v.exp()).sum();
        -(r[k].exp() / z).ln()
    };
    let expected = (nll([1.0, 2.0, 0.5], 0) + nll([0.0, -1.0, 3.0], 2)) / 2.0;
    let l = alignment_loss(&a, &TrainTarget::new(vec![(0, 0), (1, 2)], 3).unwrap()).unwrap();
    assert!((l - expected).abs() < 1e-6);
}

#[test]
fn loss_guards() {
    let a = matrix(&[&[0.0; 4]]);
    assert!(matches!(
        alignment_loss(&a, &TrainTarget::new(vec![], 4).unwrap()),
        Err(Error::NoSupervisedRows)
    ));
    assert!(TrainTarget::new(vec![(0, 4)], 4).is_err());
    assert!(TrainTarget::new(vec![(0, 1), (0, 2)], 4).is_err());
    assert!(alignment_loss(&a, &TrainTarget::new(vec![(0, 1)], 5).unwrap()).is_err());
    let t = TrainTarget::new(vec![(3, 1), (1, 0)], 4).unwrap();
    assert_eq!(t.mask().into_iter().collect::<Vec<_>>(), vec![1, 3]);
}

proptest! {
    #[test]
    fn loss_ignores_row_order_and_unsupervised_rows(
        vals in prop::collection::vec(-5.0f64..5.0, 30),
        frames in prop::collection::vec(0usize..6, 5),
        extra in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let a = AlignmentMatrix::from_logits(Array2::from_shape_vec((5, 6), vals.clone()).unwrap());
        let pairs: Vec<(usize, usize)> = vec![(0, frames[0]), (2, frames[2]), (4, frames[4])];
        let base = alignment_loss(&a, &TrainTarget::new(pairs.clone(), 6).unwrap()).unwrap();
        let mut rev = pairs.clone();
        rev.reverse();
        let reordered = alignment_loss(&a, &TrainTarget::new(rev, 6).unwrap()).unwrap();
        prop_assert!((base - reordered).abs() < 1e-12);
        let mut grown = vals.clone();
        grown.extend(extra);
        let b = AlignmentMatrix::from_logits(Array2::from_shape_vec((6, 6), grown).unwrap());
        let with_extra = alignment_loss(&b, &TrainTarget::new(pairs, 6).unwrap()).unwrap();
        prop_assert!((base - with_extra).abs() < 1e-12);
    }
}

#[test]
fn stock_specs_carry_published_hyperparameters() {
    let s = TrainSpec::stock(Level::Sentence);
    assert_eq!((s.batch_size, s.learning_rate, s.weight_decay), (24, 5e-4, 1e-3));
    let w = TrainSpec::stock(Level::Word);
    assert_eq!((w.batch_size, w.learning_rate, w.weight_decay), (64, 5e-4, 1e-7));
    assert_eq!(w.augmentations.len(), 5);
}

#[test]
fn train_spec_rejects_unknown_fields() {
    assert!(serde_json::from_str::<TrainSpec>(r#"{"level":"word","batchsize":3}"#).is_err());
    let s: TrainSpec = serde_json::from_str(r#"{"level":"word","batch_size":3}"#).unwrap();
    assert_eq!(s.batch_size, 3);
}

#[test]
fn zero_steps_leaves_weights_untouched() {
    let c = corpus(2, 3);
    let (w, log) = train(&quick_spec(Level::Word, 0), &c, ModelConfig::toy(Level::Word)).unwrap();
    let fresh = Trainer::new(quick_spec(Level::Word, 0), &c, ModelConfig::toy(Level::Word)).unwrap();
    assert!(log.rows.is_empty());
    assert_eq!(w.to_bytes().unwrap(), fresh.weights().to_bytes().unwrap());
}

#[test]
fn word_only_labels_cannot_train_sentences() {
    let mut c = corpus(2, 3);
    for ex in &mut c {
        ex.labels.sentences.clear();
    }
    let r = train(&quick_spec(Level::Sentence, 1), &c, ModelConfig::toy(Level::Sentence));
    assert!(matches!(r, Err(Error::DataLevelMismatch(_))));
    let mut c = corpus(2, 3);
    c[1].labels.words = None;
    let r = train(&quick_spec(Level::Word, 1), &c, ModelConfig::toy(Level::Word));
    assert!(matches!(r, Err(Error::DataLevelMismatch(_))));
}

#[test]
fn training_is_reproducible_and_thread_count_independent() {
    let c = corpus(3, 4);
    let spec = TrainSpec {
        augmentations: lyralign::training::Augmentation::stock(),
        ..quick_spec(Level::Word, 4)
    };
    let run = |exec| {
        let mut t = Trainer::new(spec.clone(), &c, ModelConfig::toy(Level::Word)).unwrap().with_exec(exec);
        t.run(None).unwrap();
        t.into_parts()
    };
    let (w1, l1) = run(Exec::Parallel);
    let (w2, l2) = run(Exec::Parallel);
    let (w3, l3) = run(Exec::Sequential);
    for (a, b) in l1.rows.iter().zip(&l2.rows).chain(l1.rows.iter().zip(&l3.rows)) {
        assert_eq!(a.step, b.step);
        assert!((a.loss - b.loss).abs() < 1e-6);
    }
    assert_eq!(w1.to_bytes().unwrap(), w2.to_bytes().unwrap());
    assert_eq!(w1.to_bytes().unwrap(), w3.to_bytes().unwrap());
    assert_eq!(l1.rows.len(), 4);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let c = corpus(3, 5);
    let dir = tempfile::tempdir().unwrap();
    let spec = TrainSpec {
        checkpoint_every: 3,
        ..quick_spec(Level::Sentence, 6)
    };
    let (full_w, full_log) = train(&spec, &c, ModelConfig::toy(Level::Sentence)).unwrap();

    let first = TrainSpec {
        max_steps: 3,
        ..spec.clone()
    };
    let mut t = Trainer::new(first, &c, ModelConfig::toy(Level::Sentence)).unwrap();
    t.run(Some(dir.path())).unwrap();
    drop(t);
    let mut t = Trainer::resume(spec, &c, dir.path()).unwrap();
    assert_eq!(t.step_count(), 3);
    t.run(Some(dir.path())).unwrap();
    let (w, log) = t.into_parts();
    assert_eq!(w.to_bytes().unwrap(), full_w.to_bytes().unwrap());
    let losses = |l: &TrainLog| l.rows.iter().map(|r| (r.step, r.loss)).collect::<Vec<_>>();
    assert_eq!(losses(&log), losses(&full_log));
    let on_disk = TrainLog::read_csv(&dir.path().join("train_log.csv")).unwrap();
    assert_eq!(losses(&on_disk), losses(&full_log));
}

#[test]
fn overfits_a_single_song() {
    let c = corpus(1, 6);
    let spec = TrainSpec {
        batch_size: 1,
        max_steps: 300,
        augmentations: vec![],
        learning_rate: 2e-3,
        weight_decay: 0.0,
        segment_jitter_sec: 0.0,
        ..TrainSpec::stock(Level::Word)
    };
    let (_, log) = train(&spec, &c, ModelConfig::toy(Level::Word)).unwrap();
    let lines = c[0].tokens.num_sentences();
    // Compare whole passes over the song's lines, so both ends average the same items.
    let mean = |rows: &[lyralign::training::TrainLogRow]| rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
    let initial = mean(&log.rows[..lines]);
    let last = mean(&log.rows[log.rows.len() - lines..]);
    assert!(last < 0.1 * initial, "initial {initial} final {last}");
}

#[test]
fn synthetic_corpus_is_deterministic() {
    let a = synth_corpus(3, 9, &Vocabulary::v1(), &SynthConfig::default()).unwrap();
    let b = synth_corpus(3, 9, &Vocabulary::v1(), &SynthConfig::default()).unwrap();
    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    write_synth_corpus(da.path(), &a).unwrap();
    write_synth_corpus(db.path(), &b).unwrap();
    let mut files: Vec<_> = walk(da.path());
    files.sort();
    assert!(files.len() >= 10);
    for f in files {
        let rel = f.strip_prefix(da.path()).unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(db.path().join(rel)).unwrap(), "{rel:?}");
    }
    let other = synth_corpus(3, 10, &Vocabulary::v1(), &SynthConfig::default()).unwrap();
    assert_ne!(a[0].lyrics, other[0].lyrics);
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn synthetic_onsets_increase() {
    for s in synth_corpus(20, 11, &Vocabulary::v1(), &SynthConfig::default()).unwrap() {
        let words = s.example.labels.words.as_ref().unwrap();
        assert!(words.windows(2).all(|w| w[0].start_sec < w[1].start_sec));
        let sentences = &s.example.labels.sentences;
        assert!(sentences.windows(2).all(|w| w[0].start_sec < w[1].start_sec));
        assert_eq!(words.len(), s.example.tokens.num_words());
        assert!(words.last().unwrap().start_sec < s.example.duration_sec());
    }
}

#[test]
fn noiseless_frames_are_templates() {
    let cfg = SynthConfig {
        noise_std: (0.0, 0.0),
        ..SynthConfig::default()
    };
    let vocab = Vocabulary::v1();
    let templates = token_templates(&vocab, &cfg);
    for s in synth_corpus(5, 12, &vocab, &cfg).unwrap() {
        let ex = &s.example;
        let f = ex.features.frames();
        let words = ex.labels.words.as_ref().unwrap();
        for (w, label) in words.iter().enumerate() {
            let frame = ex.features.seconds_to_frame(label.start_sec);
            let token = ex.tokens.tokens[ex.tokens.word_starts[w]];
            assert_eq!(f.row(frame), templates.row(token));
        }
        assert!(f.row(0).iter().all(|&v| v == cfg.silence_level as f32));
    }
}

#[test]
fn pseudo_label_floor_filters_songs() {
    let c = corpus(6, 13);
    let w = AlignerWeights::init(ModelConfig::toy(Level::Sentence), 3).unwrap();
    let all = pseudo_label(&w, &c, 0.0, 0.5, Exec::Parallel).unwrap();
    assert_eq!(all.len(), c.len());
    for p in &all {
        assert_eq!(p.example.labels.sentences.len(), p.example.tokens.num_sentences());
        assert!((0.0..=1.0).contains(&p.confidence));
    }
    let mut confs: Vec<f64> = all.iter().map(|p| p.confidence).collect();
    confs.sort_by(f64::total_cmp);
    let mid = (confs[2] + confs[3]) / 2.0;
    let kept = pseudo_label(&w, &c, mid, 0.5, Exec::Sequential).unwrap();
    assert_eq!(kept.len(), 3);
    assert!(kept.iter().all(|p| p.confidence >= mid));
    assert!(pseudo_label(&w, &c, 1.0, 0.5, Exec::Parallel).unwrap().is_empty());

    // Word-level labels round-trip into a word-level training run.
    let ww = AlignerWeights::init(ModelConfig::toy(Level::Word), 4).unwrap();
    let words = pseudo_label(&ww, &c, 0.0, 0.5, Exec::Parallel).unwrap();
    let relabeled: Vec<SongExample> = words.into_iter().map(|p| p.example).collect();
    assert!(train(&quick_spec(Level::Word, 1), &relabeled, ModelConfig::toy(Level::Word)).is_ok());
}
