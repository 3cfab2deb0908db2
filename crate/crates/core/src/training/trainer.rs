use super::augment::Augmentation;
use super::examples::{sentence_item, word_item, SongExample, TrainItem};
use crate::audio::FeatureStats;
use crate::error::{Error, IoContext, Result};
use crate::model::{net, prepare_frames, AlignerWeights, Level, ModelConfig};
use crate::nn::{AdamW, AdamWConfig, Gradients, Graph};
use crate::par::{self, Exec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub level: Level,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_steps: u64,
    pub augmentations: Vec<Augmentation>,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Sentence-level songs are truncated to this many stacked frames.
    pub max_sentence_frames: usize,
    /// Word-level crops extend this far before/after the line.
    pub segment_pad_sec: f64,
    /// Uniform jitter applied to each word-level crop edge.
    pub segment_jitter_sec: f64,
    /// Checkpoint interval in steps when a checkpoint directory is given.
    pub checkpoint_every: u64,
}

impl TrainSpec {
    /// Stock hyperparameters for a level (batch 24 / wd 1e-3 for sentences,
    /// batch 64 / wd 1e-7 for words, lr 5e-4 for both).
    pub fn stock(level: Level) -> Self {
        let (batch_size, weight_decay) = match level {
            Level::Sentence => (24, 1e-3),
            Level::Word => (64, 1e-7),
        };
        Self {
            level,
            batch_size,
            learning_rate: 5e-4,
            weight_decay,
            max_steps: 100_000,
            augmentations: Augmentation::stock(),
            seed: 0,
            grad_clip: 1.0,
            max_sentence_frames: 2048,
            segment_pad_sec: 0.5,
            segment_jitter_sec: 0.25,
            checkpoint_every: 1000,
        }
    }
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self::stock(Level::Sentence)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

/// Step-indexed loss log, stored as CSV (`step,loss,lr,wall_ms`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().io_context(|| format!("write {}", path.display()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<TrainLogRow>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { rows })
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.rows.first().map(|r| r.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Deterministic 64-bit mix of a seed and two counters.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a training sample refers to: a whole song or one line of it.
#[derive(Clone, Copy, Debug)]
struct Unit {
    song: usize,
    line: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    step: u64,
    spec: TrainSpec,
}

/// Owns the weights and optimiser state for one training run.
pub struct Trainer<'c> {
    spec: TrainSpec,
    corpus: &'c [SongExample],
    units: Vec<Unit>,
    weights: AlignerWeights,
    opt: AdamW,
    step: u64,
    log: TrainLog,
    exec: Exec,
}

impl<'c> Trainer<'c> {
    /// Fresh weights seeded from `spec.seed`; feature statistics are computed
    /// over the corpus.
    pub fn new(spec: TrainSpec, corpus: &'c [SongExample], config: ModelConfig) -> Result<Self> {
        if config.level != spec.level {
            return Err(Error::InvalidConfig(format!(
                "model is {}-level but the training spec is {}-level",
                config.level, spec.level
            )));
        }
        let units = Self::units(&spec, corpus)?;
        let mut weights = AlignerWeights::init(config, spec.seed)?;
        let stats = FeatureStats::compute(corpus.iter().map(|e| &e.features))?;
        weights.stats = stats.tiled(spec.level.stack_factor());
        let opt = AdamW::new(Self::opt_config(&spec), &weights.params);
        Ok(Self {
            spec,
            corpus,
            units,
            weights,
            opt,
            step: 0,
            log: TrainLog::default(),
            exec: Exec::default(),
        })
    }

    /// Continues from weights produced elsewhere (e.g. a teacher model).
    pub fn from_weights(spec: TrainSpec, corpus: &'c [SongExample], weights: AlignerWeights) -> Result<Self> {
        if weights.config.level != spec.level {
            return Err(Error::DataLevelMismatch(format!(
                "weights are {}-level, spec is {}-level",
                weights.config.level, spec.level
            )));
        }
        let units = Self::units(&spec, corpus)?;
        let opt = AdamW::new(Self::opt_config(&spec), &weights.params);
        Ok(Self {
            spec,
            corpus,
            units,
            weights,
            opt,
            step: 0,
            log: TrainLog::default(),
            exec: Exec::default(),
        })
    }

    /// Restores a run saved with [`Trainer::save_checkpoint`].
    pub fn resume(spec: TrainSpec, corpus: &'c [SongExample], dir: &Path) -> Result<Self> {
        let weights = AlignerWeights::load(&dir.join("weights.lyaw"))?;
        let mut t = Self::from_weights(spec, corpus, weights)?;
        let state_path = dir.join("state.json");
        let state: CheckpointState = serde_json::from_slice(
            &std::fs::read(&state_path).io_context(|| format!("read {}", state_path.display()))?,
        )?;
        let opt_path = dir.join("optimizer.bin");
        let bytes = std::fs::read(&opt_path).io_context(|| format!("read {}", opt_path.display()))?;
        t.opt = AdamW::from_bytes(&bytes, &t.weights.params)
            .ok_or_else(|| Error::Format(format!("{}: optimiser state does not match weights", opt_path.display())))?;
        t.opt.config = Self::opt_config(&t.spec);
        t.step = state.step;
        let mut log = TrainLog::read_csv(&dir.join("train_log.csv"))?;
        log.rows.retain(|r| r.step <= state.step);
        t.log = log;
        Ok(t)
    }

    fn opt_config(spec: &TrainSpec) -> AdamWConfig {
        AdamWConfig {
            learning_rate: spec.learning_rate,
            weight_decay: spec.weight_decay,
            ..AdamWConfig::default()
        }
    }

    fn units(spec: &TrainSpec, corpus: &[SongExample]) -> Result<Vec<Unit>> {
        if spec.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let mut units = Vec::new();
        for (song, ex) in corpus.iter().enumerate() {
            ex.check_level(spec.level)?;
            match spec.level {
                Level::Sentence => units.push(Unit { song, line: 0 }),
                Level::Word => {
                    for line in 0..ex.tokens.num_sentences() {
                        if !ex.tokens.sentence_word_range(line).is_empty() {
                            units.push(Unit { song, line });
                        }
                    }
                }
            }
        }
        if units.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(units)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn weights(&self) -> &AlignerWeights {
        &self.weights
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn spec(&self) -> &TrainSpec {
        &self.spec
    }

    pub fn into_parts(self) -> (AlignerWeights, TrainLog) {
        (self.weights, self.log)
    }

    /// Units for batch slot `slot` of step `step`, walking per-epoch shuffles.
    fn unit_at(&self, step: u64, slot: usize) -> Unit {
        let n = self.units.len() as u64;
        let pos = step * self.spec.batch_size as u64 + slot as u64;
        let (epoch, idx) = (pos / n, pos % n);
        let mut order: Vec<usize> = (0..self.units.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.spec.seed, epoch, u64::MAX)));
        self.units[order[idx as usize]]
    }

    fn build_item(&self, step: u64, slot: usize) -> Result<TrainItem> {
        let unit = self.unit_at(step, slot);
        let ex = &self.corpus[unit.song];
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.spec.seed, step, slot as u64));
        match self.spec.level {
            Level::Sentence => sentence_item(ex, self.spec.max_sentence_frames, &self.spec.augmentations, &mut rng),
            Level::Word => word_item(
                ex,
                unit.line,
                self.spec.segment_pad_sec,
                self.spec.segment_jitter_sec,
                &self.spec.augmentations,
                &mut rng,
            ),
        }
    }

    /// Loss and parameter gradients for one item.
    pub fn item_gradients(weights: &AlignerWeights, item: &TrainItem) -> Result<(f64, Gradients)> {
        if item.target.is_empty() {
            return Err(Error::NoSupervisedRows);
        }
        let frames = prepare_frames(&item.features, weights)?;
        let mut g = Graph::new(&weights.params);
        let logits = net::forward(&mut g, &item.tokens, frames, &weights.config);
        let loss = g.row_cross_entropy(logits, item.target.targets());
        let value = g.value(loss).data()[0];
        Ok((value, g.backward(loss)))
    }

    /// One optimiser step; returns the batch-mean loss before the update.
    pub fn train_step(&mut self) -> Result<f64> {
        let started = Instant::now();
        let step = self.step;
        let items = (0..self.spec.batch_size)
            .map(|slot| self.build_item(step, slot))
            .collect::<Result<Vec<_>>>()?;
        let weights = &self.weights;
        let results = par::map(self.exec, &items, |item| Self::item_gradients(weights, item));
        let mut total = Gradients::zeros_like(&self.weights.params);
        let mut loss = 0.0;
        for (item, r) in items.iter().zip(results) {
            let (l, g) = r?;
            if !l.is_finite() || !g.all_finite() {
                return Err(Error::DivergedLoss {
                    step: step + 1,
                    item: item.song_id.clone(),
                });
            }
            loss += l;
            total.accumulate(&g);
        }
        let n = items.len() as f64;
        loss /= n;
        total.scale(1.0 / n);
        if self.spec.grad_clip > 0.0 {
            let norm = total.global_norm();
            if norm > self.spec.grad_clip {
                total.scale(self.spec.grad_clip / norm);
            }
        }
        self.opt.step(&mut self.weights.params, &total);
        self.step += 1;
        self.log.rows.push(TrainLogRow {
            step: self.step,
            loss,
            lr: self.spec.learning_rate,
            wall_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        Ok(loss)
    }

    /// Trains until `spec.max_steps`, checkpointing into `checkpoint` if given.
    pub fn run(&mut self, checkpoint: Option<&Path>) -> Result<()> {
        while self.step < self.spec.max_steps {
            let loss = self.train_step()?;
            if self.step % 10 == 0 || self.step == 1 {
                tracing::info!(step = self.step, loss, "train");
            }
            if let Some(dir) = checkpoint {
                let every = self.spec.checkpoint_every;
                if (every > 0 && self.step % every == 0) || self.step == self.spec.max_steps {
                    self.save_checkpoint(dir)?;
                }
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).io_context(|| format!("create {}", dir.display()))?;
        self.weights.save(&dir.join("weights.lyaw"))?;
        let opt = dir.join("optimizer.bin");
        std::fs::write(&opt, self.opt.to_bytes()).io_context(|| format!("write {}", opt.display()))?;
        self.log.write_csv(&dir.join("train_log.csv"))?;
        // State last: a checkpoint counts once this file names its step.
        let state = serde_json::to_vec_pretty(&CheckpointState {
            step: self.step,
            spec: self.spec.clone(),
        })?;
        let path = dir.join("state.json");
        std::fs::write(&path, state).io_context(|| format!("write {}", path.display()))
    }
}

/// Trains a fresh model for `spec.max_steps` steps.
pub fn train(spec: &TrainSpec, corpus: &[SongExample], config: ModelConfig) -> Result<(AlignerWeights, TrainLog)> {
    let mut t = Trainer::new(spec.clone(), corpus, config)?;
    t.run(None)?;
    Ok(t.into_parts())
}
