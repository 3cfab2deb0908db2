//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits non-zero if any failed.
//!
//! The synthetic end-to-end criterion trains two toy models and takes a few
//! minutes on a laptop CPU; the criteria after it reuse its artifacts.

use lyralign::metrics::{mae, mauch, medae, perc, Confusion, WordTiming};
use lyralign::model::{
    cross_correlate, encode_audio, encode_text, predict_alignment, AlignerWeights, Level, ModelConfig,
};
use lyralign::audio::MelFeatures;
use lyralign::par::Exec;
use lyralign::training::{TrainItem, TrainTarget, Trainer};
use lyralign_cli::align::{cmd_align, AlignConfig};
use lyralign_cli::bench::{cmd_bench, BenchConfig, STAGES};
use lyralign_cli::eval::{cmd_eval, EvalConfig};
use lyralign_cli::synth::{cmd_synth, SynthCmdConfig};
use lyralign_cli::train::{cmd_train, ModelSize, TrainConfig};
use lyralign_cli::triage::{cmd_triage, TriageConfig, TriageUnit};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn run(name: &str, results: &mut Vec<(String, bool)>, f: impl FnOnce() -> anyhow::Result<Verdict>) {
    let start = Instant::now();
    let v = match f() {
        Ok(v) => v,
        Err(e) => verdict(false, format!("error: {}", lyralign_cli::render_error(&e))),
    };
    println!(
        "{} {name}: {} ({:.1} s)",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        start.elapsed().as_secs_f64()
    );
    results.push((name.to_string(), v.pass));
}

// ---------------------------------------------------------------------------
// Metric oracle

struct OracleWord {
    t_ref: f64,
    t_pred: f64,
    e_ref: Option<f64>,
    e_pred: Option<f64>,
}

fn oracle_mae(w: &[OracleWord]) -> f64 {
    w.iter().map(|x| (x.t_pred - x.t_ref).abs()).sum::<f64>() / w.len() as f64
}

fn oracle_medae(w: &[OracleWord]) -> f64 {
    let mut d: Vec<f64> = w.iter().map(|x| (x.t_pred - x.t_ref).abs()).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    }
}

/// Overlap of predicted and reference word intervals, summed and divided by
/// the duration. Missing ends fall back to the next word's onset, or 0.5 s
/// after the onset (capped at the duration) for the last word.
fn oracle_perc(w: &[OracleWord], duration: f64) -> f64 {
    let n = w.len();
    let mut overlap = 0.0;
    for i in 0..n {
        let end = |explicit: Option<f64>, onset: f64, next: Option<f64>| {
            explicit.unwrap_or_else(|| next.unwrap_or_else(|| (onset + 0.5).min(duration)))
        };
        let e_ref = end(w[i].e_ref, w[i].t_ref, w.get(i + 1).map(|x| x.t_ref));
        let e_pred = end(w[i].e_pred, w[i].t_pred, w.get(i + 1).map(|x| x.t_pred));
        let a = w[i].t_ref.max(w[i].t_pred);
        let b = e_ref.min(e_pred);
        overlap += (b - a).max(0.0);
    }
    overlap / duration
}

fn oracle_mauch(w: &[OracleWord], tau: f64) -> f64 {
    w.iter().filter(|x| (x.t_pred - x.t_ref).abs() < tau).count() as f64 / w.len() as f64
}

fn metric_oracle() -> anyhow::Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(5..=200);
        let duration = rng.gen_range(10.0..400.0);
        let mut t = 0.0;
        let mut ours = Vec::with_capacity(n);
        let mut oracle = Vec::with_capacity(n);
        for i in 0..n {
            t += rng.gen_range(0.0..duration / n as f64);
            let t_pred = (t + rng.gen_range(-1.5..1.5f64)).max(0.0);
            let e_ref = rng.gen_bool(0.25).then(|| t + rng.gen_range(0.05..1.0));
            let e_pred = rng.gen_bool(0.25).then(|| t_pred + rng.gen_range(0.05..1.0));
            let mut w = WordTiming::new(i, t, t_pred, rng.gen());
            w.e_ref = e_ref;
            w.e_pred = e_pred;
            ours.push(w);
            oracle.push(OracleWord {
                t_ref: t,
                t_pred,
                e_ref,
                e_pred,
            });
        }
        let tau = rng.gen_range(0.01..1.0);
        for (a, b) in [
            (mae(&ours)?, oracle_mae(&oracle)),
            (medae(&ours)?, oracle_medae(&oracle)),
            (perc(&ours, duration)?, oracle_perc(&oracle, duration)),
            (mauch(&ours, tau)?, oracle_mauch(&oracle, tau)),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        worst <= 1e-9 && secs < 10.0,
        format!("1000 songs, max |diff| {worst:.2e} (tol 1e-9), {secs:.2} s (limit 10 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Published confusion matrix

fn table_replay() -> anyhow::Result<Verdict> {
    // Rates at threshold 0.08: accepted/true, accepted/false, rejected/false,
    // rejected/true.
    let c = Confusion {
        tp: 0.9107,
        fp: 0.0865,
        tn: 0.0026,
        fn_: 0.0002,
    };
    let f1 = c.f1().unwrap_or(f64::NAN);
    Ok(verdict(
        (f1 - 0.9517).abs() <= 0.01,
        format!("F1 {f1:.4} vs 0.9517 (tol 0.01)"),
    ))
}

// ---------------------------------------------------------------------------
// Cross-correlation

fn cross_correlation() -> anyhow::Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c_in = rng.gen_range(1..=4);
        let c_enc = rng.gen_range(1..=16);
        let l = rng.gen_range(1..=32);
        let t = rng.gen_range(1..=32);
        let text = Array3::from_shape_fn((c_in, c_enc, l), |_| rng.gen_range(-3.0..3.0));
        let audio = Array3::from_shape_fn((c_in, c_enc, t), |_| rng.gen_range(-3.0..3.0));
        let m = cross_correlate(&text, &audio)?;
        if m.dim() != (c_in, l, t) {
            return Ok(verdict(false, format!("shape {:?} for ({c_in}, {l}, {t})", m.dim())));
        }
        for c in 0..c_in {
            for i in 0..l {
                for j in 0..t {
                    let mut sum = 0.0;
                    let mut mag = 0.0;
                    for k in 0..c_enc {
                        let p = text[[c, k, i]] * audio[[c, k, j]];
                        sum += p;
                        mag += p.abs();
                    }
                    // Relative to the sum of term magnitudes, which is what
                    // bounds rounding in any summation order.
                    let rel = (m[[c, i, j]] - sum).abs() / mag.max(f64::MIN_POSITIVE);
                    worst = worst.max(rel);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        worst <= 1e-6 && secs < 5.0,
        format!("100 shapes, max rel err {worst:.2e} (tol 1e-6), {secs:.2} s (limit 5 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Shape contract

fn random_features(frames: usize, stack: usize, rng: &mut ChaCha8Rng) -> anyhow::Result<MelFeatures> {
    let a = ndarray::Array2::from_shape_fn((frames, 80 * stack), |_| rng.gen_range(-8.0f32..2.0));
    Ok(MelFeatures::new(a, 16_000, 512, stack)?)
}

fn shape_contract() -> anyhow::Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = [
        AlignerWeights::init(ModelConfig::toy(Level::Sentence), 1)?,
        AlignerWeights::init(ModelConfig::toy(Level::Word), 2)?,
    ];
    let mut odd = 0;
    for case in 0..50 {
        let w = &models[case % 2];
        let cfg = &w.config;
        let l = rng.gen_range(1..=48);
        let t = rng.gen_range(1..=160);
        odd += usize::from(l % 2 == 1 || t % 2 == 1);
        let tokens: Vec<usize> = (0..l).map(|_| rng.gen_range(0..cfg.vocab_size)).collect();
        let feats = random_features(t, cfg.level.stack_factor(), &mut rng)?;
        let text = encode_text(&tokens, w)?;
        let audio = encode_audio(&feats, w)?;
        let m = cross_correlate(&text, &audio)?;
        let a = predict_alignment(&m, w)?;
        let got = (text.dim(), audio.dim(), m.dim(), (a.num_tokens(), a.num_frames()));
        let want = ((cfg.c_in, cfg.c_encoder, l), (cfg.c_in, cfg.c_encoder, t), (cfg.c_in, l, t), (l, t));
        if got != want {
            return Ok(verdict(false, format!("{} L={l} T={t}: got {got:?}, want {want:?}", cfg.level)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        secs < 60.0 && odd > 0,
        format!("50 (L, T) pairs, {odd} with an odd side, {secs:.2} s (limit 60 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Gradient check

fn gradient_check() -> anyhow::Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut weights = AlignerWeights::init(ModelConfig::toy(Level::Word), 9)?;
    let t = 11;
    let item = TrainItem {
        song_id: "gradcheck".into(),
        tokens: vec![5, 9, 0, 12, 3, 40],
        features: random_features(t, 1, &mut rng)?,
        target: TrainTarget::new(vec![(0, 1), (3, 5), (5, 9)], t)?,
    };
    let (f0, grads) = Trainer::item_gradients(&weights, &item)?;
    let ids: Vec<_> = weights.params.ids().collect();
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    let mut shrunk = 0;
    let mut smallest = 1e-3f64;
    for _ in 0..20 {
        let id = ids[rng.gen_range(0..ids.len())];
        let j = rng.gen_range(0..weights.params.get(id).len());
        let orig = weights.params.get(id).data()[j];
        let mut loss_at = |x: f64| -> anyhow::Result<f64> {
            weights.params.get_mut(id).data_mut()[j] = x;
            let (l, _) = Trainer::item_gradients(&weights, &item)?;
            weights.params.get_mut(id).data_mut()[j] = orig;
            Ok(l)
        };
        // The loss is piecewise smooth (ReLU, max-pool). When the forward and
        // backward slopes disagree a kink lies inside the bracket, so the
        // step shrinks until they agree. Only the loss is consulted here.
        let mut h = 1e-3;
        let numeric = loop {
            let (up, down) = (loss_at(orig + h)?, loss_at(orig - h)?);
            let (fwd, bwd) = ((up - f0) / h, (f0 - down) / h);
            let smooth = (fwd - bwd).abs() <= 1e-3 * fwd.abs().max(bwd.abs()).max(1e-4);
            if smooth || h <= 1e-7 {
                break (up - down) / (2.0 * h);
            }
            h /= 10.0;
        };
        if h < 1e-3 {
            shrunk += 1;
            smallest = smallest.min(h);
        }
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[j]);
        // Gradients below 1e-4 are compared absolutely at that scale.
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
        if rel > worst {
            worst = rel;
            worst_name = format!("{}[{j}]", weights.params.name(id));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        worst <= 1e-2 && secs < 120.0,
        format!(
            "20 parameters, max rel err {worst:.2e} at {worst_name} (tol 1e-2); step 1e-3, \
             shrunk at {shrunk} kinks (smallest {smallest:.0e}); {secs:.1} s (limit 120 s)"
        ),
    ))
}

// ---------------------------------------------------------------------------
// Training and cascade

fn write_spec(path: &Path, json: &str) -> anyhow::Result<PathBuf> {
    std::fs::write(path, json)?;
    Ok(path.to_path_buf())
}

fn overfit(root: &Path) -> anyhow::Result<Verdict> {
    let start = Instant::now();
    let manifest = cmd_synth(&SynthCmdConfig {
        n: 1,
        seed: 5,
        out: root.join("one_song"),
        ..SynthCmdConfig::default()
    })?;
    let spec = write_spec(
        &root.join("overfit.json"),
        r#"{"batch_size": 1, "learning_rate": 0.002, "weight_decay": 0.0, "augmentations": [], "max_steps": 300}"#,
    )?;
    let s = cmd_train(
        &TrainConfig {
            level: Level::Sentence,
            manifest: Some(manifest),
            spec: Some(spec),
            out: root.join("overfit_model"),
            model: ModelSize::Toy,
            ..TrainConfig::default()
        },
        Exec::Parallel,
    )?;
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        s.steps == 300 && s.loss_ratio < 0.1 && secs < 300.0,
        format!(
            "300 steps, loss {:.4} -> {:.3e}, ratio {:.3e} (limit 0.1), {secs:.1} s (limit 300 s)",
            s.initial_loss, s.final_loss, s.loss_ratio
        ),
    ))
}

struct Models {
    sentence: PathBuf,
    word: PathBuf,
    eval_manifest: PathBuf,
    predictions: PathBuf,
}

fn align_config(m: &Models, out_dir: PathBuf) -> AlignConfig {
    AlignConfig {
        manifest: Some(m.eval_manifest.clone()),
        weights_sentence: Some(m.sentence.clone()),
        weights_word: Some(m.word.clone()),
        out_dir,
        ..AlignConfig::default()
    }
}

fn train_models(root: &Path) -> anyhow::Result<Models> {
    let train_manifest = cmd_synth(&SynthCmdConfig {
        n: 200,
        seed: 1,
        out: root.join("train"),
        ..SynthCmdConfig::default()
    })?;
    let eval_manifest = cmd_synth(&SynthCmdConfig {
        n: 20,
        seed: 2,
        out: root.join("eval"),
        ..SynthCmdConfig::default()
    })?;
    let sentence_spec = write_spec(
        &root.join("sentence.json"),
        r#"{"batch_size": 8, "learning_rate": 0.001, "weight_decay": 0.0, "augmentations": [], "max_steps": 600}"#,
    )?;
    let word_spec = write_spec(
        &root.join("word.json"),
        r#"{"batch_size": 16, "learning_rate": 0.001, "weight_decay": 0.0, "augmentations": [], "max_steps": 1200}"#,
    )?;
    let cfg = |level, spec: &PathBuf, out: &str| TrainConfig {
        level,
        manifest: Some(train_manifest.clone()),
        spec: Some(spec.clone()),
        out: root.join(out),
        model: ModelSize::Toy,
        ..TrainConfig::default()
    };
    let (sent_cfg, word_cfg) = (cfg(Level::Sentence, &sentence_spec, "sentence"), cfg(Level::Word, &word_spec, "word"));
    let (s, w) = std::thread::scope(|scope| {
        let s = scope.spawn(|| cmd_train(&sent_cfg, Exec::Parallel));
        let w = scope.spawn(|| cmd_train(&word_cfg, Exec::Parallel));
        (s.join().expect("sentence training thread"), w.join().expect("word training thread"))
    });
    let (s, w) = (s?, w?);
    println!("     sentence model: {}", s.line());
    println!("     word model:     {}", w.line());
    let models = Models {
        sentence: s.weights,
        word: w.weights,
        eval_manifest,
        predictions: root.join("predictions"),
    };
    let report = cmd_align(&align_config(&models, models.predictions.clone()), Exec::Parallel)?;
    anyhow::ensure!(report.failures.is_empty(), "alignment failures: {:?}", report.failures);
    Ok(models)
}

fn end_to_end(root: &Path, models: &anyhow::Result<Models>) -> anyhow::Result<Verdict> {
    let m = models.as_ref().map_err(|e| anyhow::anyhow!("{}", lyralign_cli::render_error(e)))?;
    let report = cmd_eval(
        &EvalConfig {
            predictions: Some(m.predictions.clone()),
            references: Some(m.eval_manifest.clone()),
            taus: vec![0.2],
            out: root.join("eval_report"),
            ..EvalConfig::default()
        },
        Exec::Parallel,
    )?;
    let a = &report.metrics.aggregate;
    let m02 = a.mauch["0.2"];
    Ok(verdict(
        a.mae < 0.1 && m02 > 0.9,
        format!(
            "{} songs / {} words: MAE {:.4} s (limit < 0.1), Mauch_0.2 {:.4} (limit > 0.9), MedAE {:.4} s",
            a.n_songs, a.n_words, a.mae, m02, a.medae
        ),
    ))
}

fn triage_effect(root: &Path, models: &anyhow::Result<Models>) -> anyhow::Result<Verdict> {
    let m = models.as_ref().map_err(|e| anyhow::anyhow!("{}", lyralign_cli::render_error(e)))?;
    let r = cmd_triage(&TriageConfig {
        predictions: Some(m.predictions.clone()),
        references: Some(m.eval_manifest.clone()),
        reject_fraction: Some(0.1),
        unit: TriageUnit::Word,
        out: Some(root.join("triage.json")),
        ..TriageConfig::default()
    })?;
    let e = r.evaluation.as_ref().expect("references were given");
    let accepted = e.accepted_mae.unwrap_or(f64::INFINITY);
    Ok(verdict(
        accepted < e.full_mae,
        format!(
            "rejected {} of {} words; accepted MAE {:.4} s vs full {:.4} s ({:+.1}%)",
            r.rejected.len(),
            r.rejected.len() + r.accepted.len(),
            accepted,
            e.full_mae,
            100.0 * (accepted / e.full_mae - 1.0)
        ),
    ))
}

fn determinism(root: &Path, models: &anyhow::Result<Models>) -> anyhow::Result<Verdict> {
    let m = models.as_ref().map_err(|e| anyhow::anyhow!("{}", lyralign_cli::render_error(e)))?;
    let a = cmd_align(&align_config(m, root.join("det_a")), Exec::Parallel)?;
    let b = cmd_align(&align_config(m, root.join("det_b")), Exec::Parallel)?;
    anyhow::ensure!(a.written.len() == b.written.len(), "different numbers of outputs");
    let mut differing = Vec::new();
    for (pa, pb) in a.written.iter().zip(&b.written) {
        if std::fs::read(pa)? != std::fs::read(pb)? {
            differing.push(pa.display().to_string());
        }
    }
    Ok(verdict(
        differing.is_empty() && !a.written.is_empty(),
        format!("{} alignment files compared, {} differ", a.written.len(), differing.len()),
    ))
}

fn bench_structure(models: &anyhow::Result<Models>) -> anyhow::Result<Verdict> {
    let m = models.as_ref().map_err(|e| anyhow::anyhow!("{}", lyralign_cli::render_error(e)))?;
    let r = cmd_bench(
        &BenchConfig {
            manifest: Some(m.eval_manifest.clone()),
            weights_sentence: Some(m.sentence.clone()),
            weights_word: Some(m.word.clone()),
            ..BenchConfig::default()
        },
        Exec::Parallel,
    )?;
    let names: Vec<&str> = r.rows.iter().map(|row| row.stage.as_str()).collect();
    let total = r.row("total").unwrap_or(0.0);
    let sum: f64 = r.rows.iter().filter(|row| row.stage != "total").map(|row| row.mean_sec).sum();
    let gap = (total - sum).abs() / total.max(f64::MIN_POSITIVE);
    Ok(verdict(
        names == STAGES && gap <= 0.05,
        format!(
            "rows {names:?}; total {:.4} s vs sum of stages {:.4} s (gap {:.2}%, limit 5%)",
            total,
            sum,
            100.0 * gap
        ),
    ))
}

fn main() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut results = Vec::new();

    run("metric oracle equivalence", &mut results, metric_oracle);
    run("published confusion matrix F1 replay", &mut results, table_replay);
    run("cross-correlation vs triple loop", &mut results, cross_correlation);
    run("encoder / correlation / predictor shapes", &mut results, shape_contract);
    run("gradient check", &mut results, gradient_check);
    run("overfit one song", &mut results, || overfit(root));

    let t = Instant::now();
    let models = train_models(root);
    println!("     toy models trained and eval set aligned in {:.1} s", t.elapsed().as_secs_f64());
    run("synthetic end-to-end accuracy", &mut results, || end_to_end(root, &models));
    run("triage lowers accepted-set MAE", &mut results, || triage_effect(root, &models));
    run("align output is byte-identical across runs", &mut results, || determinism(root, &models));
    run("bench emits five rows that add up", &mut results, || bench_structure(&models));

    let failed: Vec<&String> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| n).collect();
    println!(
        "acceptance: {} passed, {} failed, {:.1} s",
        results.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
