//! Parameter initialisation and the on-disk weights container.
//!
//! Layout: `LYAW` magic, `u32` version, `u64` header length, a JSON header
//! (config, feature statistics, parameter names and shapes), then every
//! parameter as little-endian `f64` in header order.

use super::config::ModelConfig;
use crate::audio::FeatureStats;
use crate::error::{Error, IoContext, Result};
use crate::nn::{glorot_bound, he_bound, uniform, ParamSet, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"LYAW";
const VERSION: u32 = 1;

/// A model's configuration, parameters and input normalisation.
#[derive(Clone, Debug)]
pub struct AlignerWeights {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub stats: FeatureStats,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    stats: FeatureStats,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

impl AlignerWeights {
    /// Freshly initialised weights, deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, &mut rng);
        let stats = FeatureStats::identity(config.n_mels_effective);
        Ok(Self {
            config,
            params,
            stats,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.numel()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            stats: self.stats.clone(),
            params: self
                .params
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + self.params.numel() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("weights file: {m}"));
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| fmt("truncated"))?;
        if body.len() < hlen {
            return Err(fmt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        header.config.validate()?;
        if header.stats.width() != header.config.n_mels_effective {
            return Err(fmt("feature statistics width does not match config"));
        }
        let expected = names_and_shapes(&init_params(
            &header.config,
            &mut ChaCha8Rng::seed_from_u64(0),
        ));
        let mut data = &body[hlen..];
        let mut params = ParamSet::new();
        for (i, entry) in header.params.iter().enumerate() {
            match expected.get(i) {
                Some((n, s)) if *n == entry.name && *s == entry.shape => {}
                _ => return Err(fmt(&format!("unexpected parameter {}", entry.name))),
            }
            let n: usize = entry.shape.iter().product();
            if data.len() < n * 8 {
                return Err(fmt("truncated parameter data"));
            }
            let values = data[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[n * 8..];
            params.insert(entry.name.clone(), Tensor::from_vec(&entry.shape, values));
        }
        if params.len() != expected.len() {
            return Err(fmt("missing parameters"));
        }
        if !data.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        Ok(Self {
            config: header.config,
            params,
            stats: header.stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).io_context(|| format!("create {}", tmp.display()))?;
        f.write_all(&bytes)
            .io_context(|| format!("write {}", tmp.display()))?;
        drop(f);
        fs::rename(&tmp, path).io_context(|| format!("rename to {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).io_context(|| format!("read {}", path.display()))?;
        Self::from_bytes(&bytes)
    }

    /// Short content hash identifying these weights in alignment outputs.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match self.to_bytes() {
            Ok(b) => h.update(&b),
            Err(_) => h.update(b"unserializable"),
        }
        hex::encode(&h.finalize()[..6])
    }
}

fn names_and_shapes(params: &ParamSet) -> Vec<(String, Vec<usize>)> {
    params
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect()
}

fn init_gru(p: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, input: usize, hidden: usize) {
    let k = 1.0 / (hidden as f64).sqrt();
    p.insert(format!("{prefix}.w_ih"), uniform(rng, &[input, 3 * hidden], k));
    p.insert(format!("{prefix}.w_hh"), uniform(rng, &[hidden, 3 * hidden], k));
    p.insert(format!("{prefix}.b_ih"), uniform(rng, &[3 * hidden], k));
    p.insert(format!("{prefix}.b_hh"), uniform(rng, &[3 * hidden], k));
}

fn init_dense(p: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, fan_in: usize, fan_out: usize, relu: bool) {
    let bound = if relu {
        he_bound(fan_in)
    } else {
        glorot_bound(fan_in, fan_out)
    };
    p.insert(format!("{prefix}.w"), uniform(rng, &[fan_in, fan_out], bound));
    p.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
}

fn init_cbhg(p: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, cfg: &ModelConfig) {
    let c = cfg.c_encoder;
    for k in 1..=cfg.bank_size {
        init_dense(p, rng, &format!("{prefix}.bank.{k}"), k * c, cfg.bank_channels, true);
    }
    let bank_out = cfg.bank_size * cfg.bank_channels;
    init_dense(p, rng, &format!("{prefix}.proj1"), 3 * bank_out, c, true);
    init_dense(p, rng, &format!("{prefix}.proj2"), 3 * c, c, false);
    for i in 0..cfg.highway_layers {
        init_dense(p, rng, &format!("{prefix}.hw.{i}.h"), c, c, true);
        init_dense(p, rng, &format!("{prefix}.hw.{i}.t"), c, c, false);
        // Start with the gates mostly closed so layers begin near identity.
        p.get_mut(p.id(&format!("{prefix}.hw.{i}.t.b")).unwrap())
            .data_mut()
            .fill(-1.0);
    }
    init_gru(p, rng, &format!("{prefix}.gru.fwd"), c, c / 2);
    init_gru(p, rng, &format!("{prefix}.gru.bwd"), c, c / 2);
    init_dense(p, rng, &format!("{prefix}.expand"), c, cfg.c_in * c, false);
}

pub(crate) fn init_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::new();
    let c = cfg.c_encoder;
    let bound = (3.0f64).sqrt() / (c as f64).sqrt();
    p.insert("text.embed", uniform(rng, &[cfg.vocab_size, c], bound));
    init_cbhg(&mut p, rng, "text.cbhg", cfg);
    init_dense(&mut p, rng, "audio.in", cfg.n_mels_effective, c, false);
    init_cbhg(&mut p, rng, "audio.cbhg", cfg);

    let ch = &cfg.unet_channels;
    let mut prev = cfg.c_in;
    for (i, &c) in ch.iter().enumerate() {
        init_dense(&mut p, rng, &format!("unet.down.{i}.conv1"), 9 * prev, c, true);
        init_dense(&mut p, rng, &format!("unet.down.{i}.conv2"), 9 * c, c, true);
        prev = c;
    }
    let deep = *ch.last().unwrap();
    init_gru(&mut p, rng, "unet.gru.fwd", deep, deep / 2);
    init_gru(&mut p, rng, "unet.gru.bwd", deep, deep / 2);
    for i in (0..ch.len() - 1).rev() {
        let (hi, lo) = (ch[i + 1], ch[i]);
        let ub = glorot_bound(hi, 4 * lo);
        p.insert(format!("unet.up.{i}.up.w"), uniform(rng, &[hi, 4 * lo], ub));
        p.insert(format!("unet.up.{i}.up.b"), Tensor::zeros(&[lo]));
        init_dense(&mut p, rng, &format!("unet.up.{i}.conv1"), 9 * 2 * lo, lo, true);
        init_dense(&mut p, rng, &format!("unet.up.{i}.conv2"), 9 * lo, lo, true);
    }
    init_dense(&mut p, rng, "unet.out", ch[0], 1, false);
    p
}
