//! General-purpose benchmark network: concatenated windows, one dense ELU
//! layer, one linear output neuron.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::WindowInput;
use crate::error::{Error, Result};
use crate::grad::{Differentiable, Graph, Layout, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub q: usize,
    pub n_neur: usize,
    /// Fixed per-channel input standardization `(x - shift) / scale` for the
    /// `(a_y, a_x, v_x)` channels. Not learnable.
    pub input_shift: [f64; 3],
    pub input_scale: [f64; 3],
}

impl GnnConfig {
    pub fn new(q: usize, n_neur: usize) -> Self {
        Self { q, n_neur, input_shift: [0.0; 3], input_scale: [1.0; 3] }
    }

    pub fn input_dim(&self) -> usize {
        3 * (self.q + 1)
    }

    pub fn param_count(&self) -> usize {
        (self.input_dim() + 1) * self.n_neur + self.n_neur + 1
    }

    pub fn layout(&self) -> Layout {
        Layout::from_sizes([
            ("w1", self.n_neur * self.input_dim()),
            ("b1", self.n_neur),
            ("w2", self.n_neur),
            ("b2", 1),
        ])
    }

    /// Standardize each channel with the mean and standard deviation of the
    /// given samples.
    pub fn standardize_from<'a>(&mut self, inputs: impl IntoIterator<Item = &'a WindowInput>) {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut n = 0usize;
        for w in inputs {
            for (c, ch) in [&w.a_y, &w.a_x, &w.v_x].into_iter().enumerate() {
                for &x in ch {
                    sum[c] += x;
                    sq[c] += x * x;
                }
            }
            n += w.len();
        }
        if n == 0 {
            return;
        }
        for c in 0..3 {
            let mean = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - mean * mean).max(0.0);
            self.input_shift[c] = mean;
            self.input_scale[c] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gnn {
    pub config: GnnConfig,
}

impl Gnn {
    pub fn new(config: GnnConfig) -> Result<Self> {
        if config.n_neur == 0 {
            return Err(Error::Argument("G-NN needs at least one hidden neuron".into()));
        }
        if config.input_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Argument("G-NN input scales must be positive".into()));
        }
        Ok(Self { config })
    }

    /// All weights and biases drawn from `N(0, std²)`.
    pub fn init_params(&self, seed: u64, std: f64) -> ParamVector {
        let mut params = ParamVector::zeros(self.config.layout());
        if std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, std).expect("finite positive std");
            for w in params.values.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        params
    }

    pub fn forward<G: Graph>(&self, g: &mut G, params: &[G::V], input: &WindowInput) -> Result<G::V> {
        let c = &self.config;
        if input.len() != c.q + 1 {
            return Err(Error::Argument(format!(
                "window has {} steps, model expects q + 1 = {}",
                input.len(),
                c.q + 1
            )));
        }
        let x: Vec<f64> = [&input.a_y, &input.a_x, &input.v_x]
            .into_iter()
            .enumerate()
            .flat_map(|(ch, xs)| xs.iter().map(move |&v| (v - c.input_shift[ch]) / c.input_scale[ch]))
            .collect();
        let d = c.input_dim();
        let (w1, rest) = params.split_at(c.n_neur * d);
        let (b1, rest) = rest.split_at(c.n_neur);
        let (w2, b2) = rest.split_at(c.n_neur);

        let mut out = b2[0];
        for n in 0..c.n_neur {
            let mut pre = b1[n];
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    let t = g.scale(w1[n * d + k], xk);
                    pre = g.add(pre, t);
                }
            }
            let h = g.elu(pre);
            let t = g.mul(w2[n], h);
            out = g.add(out, t);
        }
        Ok(out)
    }
}

impl Differentiable for Gnn {
    fn layout(&self) -> Layout {
        self.config.layout()
    }

    fn forward_batch<G: Graph>(&self, g: &mut G, params: &[G::V], inputs: &[&WindowInput]) -> Result<Vec<G::V>> {
        inputs.iter().map(|w| self.forward(g, params, w)).collect()
    }
}
