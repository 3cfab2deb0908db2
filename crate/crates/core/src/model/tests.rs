use super::*;
use crate::nn::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(level: Level) -> AlignerWeights {
    AlignerWeights::init(ModelConfig::toy(level), 3).unwrap()
}

fn loss(weights: &AlignerWeights, tokens: &[usize], frames: &Tensor, targets: &[(usize, usize)]) -> f64 {
    let mut g = Graph::new(&weights.params);
    let logits = net::forward(&mut g, tokens, frames.clone(), &weights.config);
    let l = g.row_cross_entropy(logits, targets);
    g.value(l).data()[0]
}

#[test]
fn padding_rounds_up_to_multiple() {
    assert_eq!(net::padded(17, 8), 24);
    assert_eq!(net::padded(16, 8), 16);
    assert_eq!(net::padded(1, 4), 4);
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut w = tiny(Level::Word);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tokens = [5, 9, 0, 12, 3];
    let t = 9;
    let frames = Tensor::from_vec(&[t, 80], (0..t * 80).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let targets = [(0, 1), (3, 5), (4, 7)];

    let grads = {
        let mut g = Graph::new(&w.params);
        let logits = net::forward(&mut g, &tokens, frames.clone(), &w.config);
        let l = g.row_cross_entropy(logits, &targets);
        g.backward(l)
    };
    let ids: Vec<_> = w.params.ids().collect();
    // Small step: larger ones straddle ReLU and max-pool kinks.
    let h = 1e-5;
    let mut checked = 0;
    for _ in 0..20 {
        let id = ids[rng.gen_range(0..ids.len())];
        let n = w.params.get(id).len();
        let j = rng.gen_range(0..n);
        let orig = w.params.get(id).data()[j];
        w.params.get_mut(id).data_mut()[j] = orig + h;
        let up = loss(&w, &tokens, &frames, &targets);
        w.params.get_mut(id).data_mut()[j] = orig - h;
        let down = loss(&w, &tokens, &frames, &targets);
        w.params.get_mut(id).data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[j]);
        let scale = numeric.abs().max(analytic.abs()).max(1e-4);
        assert!(
            (numeric - analytic).abs() / scale < 1e-2,
            "{}[{j}]: numeric {numeric} analytic {analytic}",
            w.params.name(id)
        );
        checked += 1;
    }
    assert_eq!(checked, 20);
}

#[test]
#[ignore]
fn timing_probe() {
    for (level, l, t) in [(Level::Word, 30, 120), (Level::Sentence, 120, 200), (Level::Sentence, 300, 470)] {
        let w = AlignerWeights::init(ModelConfig::toy(level), 1).unwrap();
        let f = 80 * level.stack_factor();
        let frames = Tensor::from_vec(&[t, f], vec![0.1; t * f]);
        let tokens: Vec<usize> = (0..l).map(|i| 1 + i % 70).collect();
        let start = std::time::Instant::now();
        for _ in 0..3 {
            let mut g = Graph::new(&w.params);
            let logits = net::forward(&mut g, &tokens, frames.clone(), &w.config);
            let loss = g.row_cross_entropy(logits, &[(0, 0)]);
            let _ = g.backward(loss);
        }
        println!("{level} L={l} T={t}: {:?}/step params={}", start.elapsed() / 3, w.num_parameters());
    }
}
