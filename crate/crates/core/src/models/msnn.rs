//! Model-structured steering network.
//!
//! `G` blends `n_y · n_x` physics-derived local models `g_il` with
//! membership weights on `(|a_y|, a_x)` and returns one quasi steady-state
//! steering angle per window step. The mixer then forms
//! `δ_k = Σ_j Σ_l (G ⊙ φ_jl(v_x, a_x)) · F_jl` over the window.
//!
//! The `Steer` variant replaces the constant gains `k_y1`, `k_y2` with
//! polynomials in the normalized speed `v_x / speed_scale`.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::membership::MembershipGrid;
use super::WindowInput;
use crate::error::{Error, Result};
use crate::grad::{sign_with_zero, Differentiable, Graph, Layout, ParamVector};

/// Initial value of `k_y3` and `k_x1`. Their product scales the whole coupled
/// term, so starting both at zero would leave it with a zero gradient forever.
pub const COUPLING_GAIN_INIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Steer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsNnConfig {
    pub variant: Variant,
    pub q: usize,
    /// Degree of the `k_y1(v_x)` polynomial (steer only).
    pub n_p1: usize,
    /// Degree of the `k_y2(v_x)` polynomial (steer only).
    pub n_p2: usize,
    /// Wheelbase [m].
    pub wheelbase: f64,
    /// Window sampling period [s].
    pub sample_time: f64,
    /// Speed normalization of the gain polynomials [m/s].
    pub speed_scale: f64,
    /// Smallest admissible speed [m/s].
    pub vx_min: f64,
    pub grid: MembershipGrid,
}

impl MsNnConfig {
    pub fn n_y(&self) -> usize {
        self.grid.ay.len()
    }
    pub fn n_x(&self) -> usize {
        self.grid.ax.len()
    }
    pub fn n_v(&self) -> usize {
        self.grid.vx.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::Argument("q must be at least 1".into()));
        }
        if !(self.sample_time > 0.0) || !(self.wheelbase > 0.0) {
            return Err(Error::Argument("sample time and wheelbase must be positive".into()));
        }
        if !(self.speed_scale > 0.0) || !(self.vx_min > 0.0) {
            return Err(Error::Argument("speed scale and vx_min must be positive".into()));
        }
        Ok(())
    }

    fn local_gains_per_y(&self) -> usize {
        match self.variant {
            Variant::Base => 6,
            Variant::Steer => 4,
        }
    }

    pub fn layout(&self) -> Layout {
        let ny = self.n_y();
        let mut sizes: Vec<(&str, usize)> = Vec::with_capacity(5);
        if self.variant == Variant::Steer {
            sizes.push(("c1", ny * (self.n_p1 + 1)));
            sizes.push(("c2", ny * (self.n_p2 + 1)));
        }
        sizes.push(("ky", ny * self.local_gains_per_y()));
        sizes.push(("kx", self.n_x() * 5));
        sizes.push(("mixer", self.n_v() * self.n_x() * (self.q + 1)));
        Layout::from_sizes(sizes)
    }

    pub fn param_count(&self) -> usize {
        param_count(self.variant, self.q, self.n_y(), self.n_x(), self.n_v(), self.n_p1, self.n_p2)
    }
}

/// Number of learnable parameters of an MS-NN with the given sizes.
pub fn param_count(variant: Variant, q: usize, n_y: usize, n_x: usize, n_v: usize, n_p1: usize, n_p2: usize) -> usize {
    let per_y = match variant {
        Variant::Base => 6,
        Variant::Steer => (n_p1 + 1) + (n_p2 + 1) + 4,
    };
    per_y * n_y + 5 * n_x + (q + 1) * n_x * n_v
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    c1: usize,
    c2: usize,
    ky: usize,
    kx: usize,
    mixer: usize,
}

/// Borrowed view of one local model's gains.
struct LocalGains<V> {
    ky1: V,
    ky2: V,
    ky3: V,
    ky4: V,
    ky5: V,
    ky6: V,
    kx: [V; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsNn {
    pub config: MsNnConfig,
}

impl MsNn {
    pub fn new(config: MsNnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    fn offsets(&self) -> Offsets {
        let layout = self.config.layout();
        let start = |name: &str| layout.segment(name).map_or(0, |s| s.start);
        Offsets { c1: start("c1"), c2: start("c2"), ky: start("ky"), kx: start("kx"), mixer: start("mixer") }
    }

    fn mixer_index(&self, off: &Offsets, j: usize, l: usize, t: usize) -> usize {
        let c = &self.config;
        off.mixer + (j * c.n_x() + l) * (c.q + 1) + t
    }

    fn gains<G: Graph>(&self, g: &mut G, p: &[G::V], off: &Offsets, i: usize, l: usize, v_x: f64) -> LocalGains<G::V> {
        let c = &self.config;
        let (ky1, ky2, rest) = match c.variant {
            Variant::Base => {
                let b = off.ky + 6 * i;
                (p[b], p[b + 1], b + 2)
            }
            Variant::Steer => {
                let v = g.constant(v_x / c.speed_scale);
                let b1 = off.c1 + (c.n_p1 + 1) * i;
                let b2 = off.c2 + (c.n_p2 + 1) * i;
                let k1 = g.poly(&p[b1..b1 + c.n_p1 + 1], v);
                let k2 = g.poly(&p[b2..b2 + c.n_p2 + 1], v);
                (k1, k2, off.ky + 4 * i)
            }
        };
        let x = off.kx + 5 * l;
        LocalGains {
            ky1,
            ky2,
            ky3: p[rest],
            ky4: p[rest + 1],
            ky5: p[rest + 2],
            ky6: p[rest + 3],
            kx: [p[x], p[x + 1], p[x + 2], p[x + 3], p[x + 4]],
        }
    }

    /// Local model `g_il(a_y, v_x, a_x)`; `sign(0) = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn local_model<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::V],
        i: usize,
        l: usize,
        a_y: f64,
        v_x: f64,
        a_x: f64,
    ) -> Result<G::V> {
        let c = &self.config;
        if !(v_x >= c.vx_min) {
            return Err(Error::Domain(format!("v_x = {v_x} m/s is below vx_min = {} m/s", c.vx_min)));
        }
        let off = self.offsets();
        Ok(self.local_model_at(g, params, &off, i, l, a_y, v_x, a_x))
    }

    #[allow(clippy::too_many_arguments)]
    fn local_model_at<G: Graph>(
        &self,
        g: &mut G,
        p: &[G::V],
        off: &Offsets,
        i: usize,
        l: usize,
        a_y: f64,
        v_x: f64,
        a_x: f64,
    ) -> G::V {
        let c = &self.config;
        let k = self.gains(g, p, off, i, l, v_x);
        let s = sign_with_zero(a_y);
        let ay0 = c.grid.ay.centers()[i];
        let ax0 = c.grid.ax.centers()[l];
        let kinematic = a_y * c.wheelbase / (v_x * v_x);
        let dy = a_y - ay0 * s;
        let dx = a_x - ax0;

        let t1 = g.scale(k.ky1, s);
        let t2 = g.scale(k.ky2, dy);

        // (a_y - (a_y0 + k_y4) sign(a_y))
        let shifted = g.scale(k.ky4, -s);
        let shifted = g.add_const(shifted, dy);
        // (k_x2 + a_x + a_x0)
        let ax_term = g.add_const(k.kx[1], a_x + ax0);
        // [1 + k_y5 dy + k_x3 dx + k_x4 dx^2 + k_y6 k_x5 dy dx]
        let b1 = g.scale(k.ky5, dy);
        let b2 = g.scale(k.kx[2], dx);
        let b3 = g.scale(k.kx[3], dx * dx);
        let b4 = g.mul(k.ky6, k.kx[4]);
        let b4 = g.scale(b4, dy * dx);
        let bracket = g.sum(&[b1, b2, b3, b4]);
        let bracket = g.add_const(bracket, 1.0);

        let gain = g.mul(k.ky3, k.kx[0]);
        let t3 = g.mul(gain, shifted);
        let t3 = g.mul(t3, ax_term);
        let t3 = g.mul(t3, bracket);

        let sum = g.sum(&[t1, t2, t3]);
        g.add_const(sum, kinematic)
    }

    /// One entry of `G`: the membership-weighted blend of local models at a
    /// single operating point.
    fn blend_at<G: Graph>(&self, g: &mut G, p: &[G::V], off: &Offsets, a_y: f64, a_x: f64, v_x: f64) -> Result<G::V> {
        let c = &self.config;
        let act_y = c.grid.ay.activation(a_y.abs())?;
        let act_x = c.grid.ax.activation(a_x)?;
        let mut acc = g.constant(0.0);
        for (i, wy) in act_y.iter() {
            for (l, wx) in act_x.iter() {
                let local = self.local_model_at(g, p, off, i, l, a_y, v_x, a_x);
                let weighted = g.scale(local, wy * wx);
                acc = g.add(acc, weighted);
            }
        }
        Ok(acc)
    }

    fn check_input(&self, input: &WindowInput) -> Result<()> {
        let c = &self.config;
        if input.len() != c.q + 1 {
            return Err(Error::Argument(format!(
                "window has {} steps, model expects q + 1 = {}",
                input.len(),
                c.q + 1
            )));
        }
        if let Some(t) = input.v_x.iter().position(|&v| !(v >= c.vx_min)) {
            return Err(Error::Domain(format!(
                "window step {t}: v_x = {} m/s is below vx_min = {} m/s",
                input.v_x[t], c.vx_min
            )));
        }
        Ok(())
    }

    /// The vector `G(a_y, v_x, a_x)` of `q + 1` steady-state steering angles.
    pub fn steady_state_vector<G: Graph>(&self, g: &mut G, params: &[G::V], input: &WindowInput) -> Result<Vec<G::V>> {
        self.check_input(input)?;
        let off = self.offsets();
        (0..input.len()).map(|t| self.blend_at(g, params, &off, input.a_y[t], input.a_x[t], input.v_x[t])).collect()
    }

    fn mix<G: Graph>(
        &self,
        g: &mut G,
        p: &[G::V],
        off: &Offsets,
        input: &WindowInput,
        steady: &[G::V],
    ) -> Result<G::V> {
        let c = &self.config;
        let mut acc = g.constant(0.0);
        for t in 0..=c.q {
            let act_v = c.grid.vx.activation(input.v_x[t])?;
            let act_x = c.grid.ax.activation(input.a_x[t])?;
            let mut weight = g.constant(0.0);
            for (j, wv) in act_v.iter() {
                for (l, wx) in act_x.iter() {
                    let f = p[self.mixer_index(off, j, l, t)];
                    let term = g.scale(f, wv * wx);
                    weight = g.add(weight, term);
                }
            }
            let term = g.mul(steady[t], weight);
            acc = g.add(acc, term);
        }
        Ok(acc)
    }

    /// Steering angle `δ_k` for one window.
    pub fn forward<G: Graph>(&self, g: &mut G, params: &[G::V], input: &WindowInput) -> Result<G::V> {
        let steady = self.steady_state_vector(g, params, input)?;
        let off = self.offsets();
        self.mix(g, params, &off, input, &steady)
    }

    /// Gaussian mixer weights `N(0, std²)`; local gains start at zero except
    /// the coupled pair `k_y3`, `k_x1`.
    pub fn init_params(&self, seed: u64, std: f64) -> ParamVector {
        let layout = self.config.layout();
        let mut params = ParamVector::zeros(layout);
        let off = self.offsets();
        let per_y = self.config.local_gains_per_y();
        let ky3 = if self.config.variant == Variant::Base { 2 } else { 0 };
        for i in 0..self.config.n_y() {
            params.values[off.ky + per_y * i + ky3] = COUPLING_GAIN_INIT;
        }
        for l in 0..self.config.n_x() {
            params.values[off.kx + 5 * l] = COUPLING_GAIN_INIT;
        }
        if std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, std).expect("finite positive std");
            for w in params.segment_mut("mixer").expect("mixer segment") {
                *w = normal.sample(&mut rng);
            }
        }
        params
    }

    /// Adds `1/(q+1)` to every mixer weight, so the model starts out as the
    /// window average of `G`.
    pub fn apply_warm_start(&self, params: &mut ParamVector) {
        let offset = 1.0 / (self.config.q + 1) as f64;
        if let Some(mixer) = params.segment_mut("mixer") {
            for w in mixer {
                *w += offset;
            }
        }
    }
}

impl Differentiable for MsNn {
    fn layout(&self) -> Layout {
        self.config.layout()
    }

    fn forward_batch<G: Graph>(&self, g: &mut G, params: &[G::V], inputs: &[&WindowInput]) -> Result<Vec<G::V>> {
        // Overlapping windows share operating points; evaluate `G` once per point.
        let off = self.offsets();
        let mut cache: HashMap<[u64; 3], G::V> = HashMap::new();
        let mut out = Vec::with_capacity(inputs.len());
        let mut steady = Vec::with_capacity(self.config.q + 1);
        for input in inputs {
            self.check_input(input)?;
            steady.clear();
            for t in 0..input.len() {
                let (ay, ax, vx) = (input.a_y[t], input.a_x[t], input.v_x[t]);
                let key = [ay.to_bits(), ax.to_bits(), vx.to_bits()];
                let v = match cache.get(&key) {
                    Some(&v) => v,
                    None => {
                        let v = self.blend_at(g, params, &off, ay, ax, vx)?;
                        cache.insert(key, v);
                        v
                    }
                };
                steady.push(v);
            }
            out.push(self.mix(g, params, &off, input, &steady)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Eval;
    use crate::models::membership::MembershipAxis;

    fn grid(ny: usize, nx: usize, nv: usize) -> MembershipGrid {
        MembershipGrid::from_ranges(ny, nx, nv, 20.0, (-10.0, 10.0), (20.0, 60.0)).unwrap()
    }

    fn config(variant: Variant, q: usize, ny: usize, nx: usize, nv: usize) -> MsNnConfig {
        MsNnConfig {
            variant,
            q,
            n_p1: 3,
            n_p2: 1,
            wheelbase: 3.0,
            sample_time: 0.05,
            speed_scale: 50.0,
            vx_min: 5.0,
            grid: grid(ny, nx, nv),
        }
    }

    #[test]
    fn parameter_counts() {
        let base = MsNn::new(config(Variant::Base, 9, 5, 3, 3)).unwrap();
        assert_eq!(base.config.param_count(), 135);
        assert_eq!(base.config.layout().len(), 135);
        let steer = MsNn::new(config(Variant::Steer, 9, 5, 3, 3)).unwrap();
        assert_eq!(steer.config.param_count(), 155);
        assert_eq!(steer.config.layout().len(), 155);
        // degree-0 polynomials plus four constant gains match the base count
        assert_eq!(param_count(Variant::Steer, 9, 5, 3, 3, 0, 0), 135);
    }

    #[test]
    fn zero_gains_give_kinematic_steering() {
        let m = MsNn::new(config(Variant::Base, 1, 3, 3, 3)).unwrap();
        let p = ParamVector::zeros(m.config.layout());
        let d = m.local_model(&mut Eval, &p.values, 1, 1, 10.0, 50.0, 0.0).unwrap();
        assert!((d - 0.012).abs() < 1e-15);
    }

    #[test]
    fn zero_lateral_acceleration_gives_zero() {
        let m = MsNn::new(config(Variant::Steer, 1, 3, 3, 3)).unwrap();
        let p: Vec<f64> = (0..m.config.param_count()).map(|k| 0.3 + 0.01 * k as f64).collect();
        for i in 0..3 {
            for l in 0..3 {
                let d = m.local_model(&mut Eval, &p, i, l, 0.0, 33.0, 4.0).unwrap();
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn constant_polynomial_term() {
        let mut cfg = config(Variant::Steer, 1, 3, 3, 3);
        cfg.grid = MembershipGrid::new(
            MembershipAxis::new(vec![0.0, 10.0, 20.0]).unwrap(),
            MembershipAxis::new(vec![-5.0, 0.0, 5.0]).unwrap(),
            MembershipAxis::new(vec![10.0, 30.0, 50.0]).unwrap(),
        )
        .unwrap();
        let m = MsNn::new(cfg).unwrap();
        let mut p = ParamVector::zeros(m.config.layout());
        p.segment_mut("c1").unwrap()[0] = 0.001;
        let d = m.local_model(&mut Eval, &p.values, 0, 1, 1.0, 20.0, 0.0).unwrap();
        assert!((d - 0.0085).abs() < 1e-15, "{d}");
    }

    #[test]
    fn speed_below_minimum_is_a_domain_error() {
        let m = MsNn::new(config(Variant::Base, 1, 3, 3, 3)).unwrap();
        let p = ParamVector::zeros(m.config.layout());
        assert!(matches!(m.local_model(&mut Eval, &p.values, 0, 0, 1.0, 4.0, 0.0), Err(Error::Domain(_))));
        let w = WindowInput::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![20.0, 2.0]).unwrap();
        assert!(m.forward(&mut Eval, &p.values, &w).is_err());
    }

    #[test]
    fn init_is_deterministic_and_std_zero_gives_zero_mixer() {
        let m = MsNn::new(config(Variant::Steer, 9, 5, 3, 3)).unwrap();
        let a = m.init_params(7, 1e-4);
        let b = m.init_params(7, 1e-4);
        assert_eq!(a, b);
        let z = m.init_params(7, 0.0);
        assert!(z.segment("mixer").unwrap().iter().all(|&w| w == 0.0));
        let draws: Vec<Vec<f64>> = (0..10).map(|s| m.init_params(s, 1e-4).segment("mixer").unwrap().to_vec()).collect();
        for i in 0..draws.len() {
            for j in i + 1..draws.len() {
                assert_ne!(draws[i], draws[j]);
            }
        }
    }

    #[test]
    fn batch_forward_matches_single_forward() {
        let m = MsNn::new(config(Variant::Steer, 3, 3, 3, 3)).unwrap();
        let mut p = m.init_params(1, 0.1);
        for (k, v) in p.values.iter_mut().enumerate() {
            *v += 0.01 * ((k * 7 % 11) as f64 - 5.0);
        }
        let w1 = WindowInput::new(vec![3.0, -4.0, 8.0, 12.0], vec![1.0, 0.0, -2.0, 3.0], vec![30.0, 31.0, 32.0, 33.0])
            .unwrap();
        let w2 = WindowInput::new(vec![-4.0, 8.0, 12.0, 15.0], vec![0.0, -2.0, 3.0, 4.0], vec![31.0, 32.0, 33.0, 34.0])
            .unwrap();
        let batch = m.forward_batch(&mut Eval, &p.values, &[&w1, &w2]).unwrap();
        assert_eq!(batch[0], m.forward(&mut Eval, &p.values, &w1).unwrap());
        assert_eq!(batch[1], m.forward(&mut Eval, &p.values, &w2).unwrap());
    }
}
