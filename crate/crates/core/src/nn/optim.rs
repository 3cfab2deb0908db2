//! Adam with decoupled weight decay.

use super::{Gradients, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params
            .ids()
            .map(|id| Tensor::zeros(params.get(id).shape()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Binary snapshot: JSON header line (config, step, sizes) then both
    /// moment buffers as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes: Vec<usize> = self.m.iter().map(Tensor::len).collect();
        let header = serde_json::json!({ "config": self.config, "step": self.step, "sizes": sizes });
        let mut out = header.to_string().into_bytes();
        out.push(b'\n');
        for t in self.m.iter().chain(&self.v) {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Restores a snapshot taken for parameters shaped like `params`.
    pub fn from_bytes(bytes: &[u8], params: &ParamSet) -> Option<Self> {
        #[derive(Deserialize)]
        struct Header {
            config: AdamWConfig,
            step: u64,
            sizes: Vec<usize>,
        }
        let nl = bytes.iter().position(|b| *b == b'\n')?;
        let header: Header = serde_json::from_slice(&bytes[..nl]).ok()?;
        let shapes: Vec<Vec<usize>> = params.ids().map(|id| params.get(id).shape().to_vec()).collect();
        let expected: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
        if header.sizes != expected {
            return None;
        }
        let mut data = bytes[nl + 1..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut read = |shape: &Vec<usize>| -> Option<Tensor> {
            let n = shape.iter().product();
            let v: Vec<f64> = data.by_ref().take(n).collect();
            (v.len() == n).then(|| Tensor::from_vec(shape, v))
        };
        let m = shapes.iter().map(&mut read).collect::<Option<Vec<_>>>()?;
        let v = shapes.iter().map(&mut read).collect::<Option<Vec<_>>>()?;
        if bytes.len() != nl + 1 + 16 * expected.iter().sum::<usize>() {
            return None;
        }
        Some(Self {
            config: header.config,
            step: header.step,
            m,
            v,
        })
    }

    /// Applies one update. Parameters without a gradient are still decayed.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let p = params.get_mut(id).data_mut();
            let decay = 1.0 - c.learning_rate * c.weight_decay;
            let Some(g) = grads.get(id) else {
                p.iter_mut().for_each(|v| *v *= decay);
                continue;
            };
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                p[i] = p[i] * decay - c.learning_rate * update;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    #[test]
    fn minimises_a_quadratic() {
        let mut params = ParamSet::new();
        let id = params.insert("x", Tensor::from_vec(&[1, 2], vec![3.0, -2.0]));
        let mut opt = AdamW::new(
            AdamWConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
            &params,
        );
        for _ in 0..300 {
            let grads = {
                let mut g = Graph::new(&params);
                let x = g.param(id);
                let sq = g.mul(x, x);
                let ones = g.input(Tensor::full(&[2, 1], 1.0));
                let s = g.matmul(sq, ones);
                let s = g.reshape(s, &[1]);
                g.backward(s)
            };
            opt.step(&mut params, &grads);
        }
        assert!(params.get(id).data().iter().all(|v| v.abs() < 0.05));
    }
}
