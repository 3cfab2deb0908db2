//! Forward graph of the aligner: two CBHG encoders, channel-wise
//! cross-correlation, and a UNet with a bidirectional GRU at its bottleneck.

use super::config::ModelConfig;
use crate::nn::{Graph, Tensor, Var};

fn conv1d(g: &mut Graph<'_>, x: Var, prefix: &str, kernel: usize) -> Var {
    let w = g.param_named(&format!("{prefix}.w"));
    let b = g.param_named(&format!("{prefix}.b"));
    g.conv1d(x, w, b, kernel)
}

fn conv2d(g: &mut Graph<'_>, x: Var, prefix: &str, kernel: usize) -> Var {
    let w = g.param_named(&format!("{prefix}.w"));
    let b = g.param_named(&format!("{prefix}.b"));
    g.conv2d(x, w, b, kernel)
}

/// Runs a forward and a reverse GRU over `x: [B, T, D]` and concatenates them.
fn bigru(g: &mut Graph<'_>, x: Var, prefix: &str) -> Var {
    let f = g.gru(x, &format!("{prefix}.fwd"), false);
    let b = g.gru(x, &format!("{prefix}.bwd"), true);
    g.concat(&[f, b])
}

/// `x: [T, C_enc]` to `[T, C_enc]`.
fn cbhg(g: &mut Graph<'_>, x: Var, prefix: &str, cfg: &ModelConfig) -> Var {
    let steps = g.value(x).rows();
    let bank: Vec<Var> = (1..=cfg.bank_size)
        .map(|k| {
            let y = conv1d(g, x, &format!("{prefix}.bank.{k}"), k);
            g.relu(y)
        })
        .collect();
    let y = g.concat(&bank);
    let y = g.maxpool1d(y);
    let y = conv1d(g, y, &format!("{prefix}.proj1"), 3);
    let y = g.relu(y);
    let y = conv1d(g, y, &format!("{prefix}.proj2"), 3);
    let mut y = g.add(y, x);
    for i in 0..cfg.highway_layers {
        let h = g.linear(y, &format!("{prefix}.hw.{i}.h.w"), &format!("{prefix}.hw.{i}.h.b"));
        let h = g.relu(h);
        let t = g.linear(y, &format!("{prefix}.hw.{i}.t.w"), &format!("{prefix}.hw.{i}.t.b"));
        let t = g.sigmoid(t);
        let d = g.sub(h, y);
        let d = g.mul(t, d);
        y = g.add(y, d);
    }
    let y = g.reshape(y, &[1, steps, cfg.c_encoder]);
    let y = bigru(g, y, &format!("{prefix}.gru"));
    g.reshape(y, &[steps, cfg.c_encoder])
}

/// Token ids to `[L, C_in * C_enc]`.
pub(crate) fn text_encoder(g: &mut Graph<'_>, tokens: &[usize], cfg: &ModelConfig) -> Var {
    let table = g.param_named("text.embed");
    let x = g.embedding(table, tokens);
    let y = cbhg(g, x, "text.cbhg", cfg);
    g.linear(y, "text.cbhg.expand.w", "text.cbhg.expand.b")
}

/// Normalised frames `[T, F]` to `[T, C_in * C_enc]`.
pub(crate) fn audio_encoder(g: &mut Graph<'_>, frames: Tensor, cfg: &ModelConfig) -> Var {
    let x = g.input(frames);
    let x = g.linear(x, "audio.in.w", "audio.in.b");
    let y = cbhg(g, x, "audio.cbhg", cfg);
    g.linear(y, "audio.cbhg.expand.w", "audio.cbhg.expand.b")
}

/// Padded size for a UNet of the configured depth.
pub(crate) fn padded(n: usize, multiple: usize) -> usize {
    n.div_ceil(multiple) * multiple
}

/// Cross-correlation volume `[C_in, L, T]` to logits `[L, T]`.
pub(crate) fn unet(g: &mut Graph<'_>, m: Var, cfg: &ModelConfig) -> Var {
    let s = g.value(m).shape().to_vec();
    let (l, t) = (s[1], s[2]);
    let x = g.permute3(m, [1, 2, 0]);
    let mult = cfg.pad_multiple();
    let mut x = g.reflect_pad2d(x, padded(l, mult), padded(t, mult));

    let depth = cfg.depth();
    let mut skips = Vec::with_capacity(depth);
    for i in 0..depth {
        if i > 0 {
            x = g.maxpool2d(x);
        }
        x = conv2d(g, x, &format!("unet.down.{i}.conv1"), 3);
        x = g.relu(x);
        x = conv2d(g, x, &format!("unet.down.{i}.conv2"), 3);
        x = g.relu(x);
        skips.push(x);
    }

    // Sequence model along time at the coarsest resolution, one row per token band.
    let r = bigru(g, x, "unet.gru");
    x = g.add(x, r);

    for i in (0..depth - 1).rev() {
        let w = g.param_named(&format!("unet.up.{i}.up.w"));
        let b = g.param_named(&format!("unet.up.{i}.up.b"));
        let up = g.upconv2x2(x, w, b);
        x = g.concat(&[up, skips[i]]);
        x = conv2d(g, x, &format!("unet.up.{i}.conv1"), 3);
        x = g.relu(x);
        x = conv2d(g, x, &format!("unet.up.{i}.conv2"), 3);
        x = g.relu(x);
    }
    let x = conv2d(g, x, "unet.out", 1);
    let x = g.crop2d(x, l, t);
    g.reshape(x, &[l, t])
}

/// Full forward pass: token ids and normalised frames to logits `[L, T]`.
pub(crate) fn forward(g: &mut Graph<'_>, tokens: &[usize], frames: Tensor, cfg: &ModelConfig) -> Var {
    let text = text_encoder(g, tokens, cfg);
    let audio = audio_encoder(g, frames, cfg);
    let m = g.cross_correlate(text, audio, cfg.c_in);
    unet(g, m, cfg)
}
