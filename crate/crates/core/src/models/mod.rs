//! Steering controllers: the two model-structured networks, the general-purpose
//! network, and the baseline feedforward law.

pub mod a2rl;
pub mod gnn;
pub mod membership;
pub mod msnn;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use a2rl::{a2rl_sequence, a2rl_step, A2rlParams, A2rlState};
pub use gnn::{Gnn, GnnConfig};
pub use membership::{MembershipAxis, MembershipGrid};
pub use msnn::{param_count, MsNn, MsNnConfig, Variant};

use crate::error::{Error, Result};
use crate::grad::{Differentiable, Graph, Layout, ParamVector, Segment};
use crate::telemetry::WindowedSample;

/// Smallest speed the controllers accept [m/s].
pub const VX_MIN: f64 = 5.0;
pub const DEFAULT_WHEELBASE: f64 = 3.0;
pub const DEFAULT_SAMPLE_TIME: f64 = 0.05;

/// Future windows `a_y[k..=k+q]`, `a_x[k..=k+q]`, `v_x[k..=k+q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInput {
    pub a_y: Vec<f64>,
    pub a_x: Vec<f64>,
    pub v_x: Vec<f64>,
}

impl WindowInput {
    pub fn new(a_y: Vec<f64>, a_x: Vec<f64>, v_x: Vec<f64>) -> Result<Self> {
        if a_y.is_empty() || a_y.len() != a_x.len() || a_y.len() != v_x.len() {
            return Err(Error::Argument(format!(
                "window lengths must be equal and non-zero (a_y {}, a_x {}, v_x {})",
                a_y.len(),
                a_x.len(),
                v_x.len()
            )));
        }
        Ok(Self { a_y, a_x, v_x })
    }

    /// Constant signals over `len` steps.
    pub fn constant(len: usize, a_y: f64, a_x: f64, v_x: f64) -> Self {
        Self { a_y: vec![a_y; len], a_x: vec![a_x; len], v_x: vec![v_x; len] }
    }

    /// Number of window steps, `q + 1`.
    pub fn len(&self) -> usize {
        self.a_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "msnn-steer")]
    MsNnSteer,
    #[serde(rename = "msnn-base")]
    MsNnBase,
    #[serde(rename = "gnn")]
    Gnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::MsNnSteer, ModelKind::MsNnBase, ModelKind::Gnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MsNnSteer => "msnn-steer",
            ModelKind::MsNnBase => "msnn-base",
            ModelKind::Gnn => "gnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msnn-steer" => Ok(ModelKind::MsNnSteer),
            "msnn-base" => Ok(ModelKind::MsNnBase),
            "gnn" => Ok(ModelKind::Gnn),
            other => Err(Error::Argument(format!("unknown model `{other}` (expected msnn-steer, msnn-base or gnn)"))),
        }
    }
}

/// Architecture hyperparameters. Membership centers and input standardization
/// are fitted to the training data by [`ModelSpec::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub q: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub n_p1: usize,
    pub n_p2: usize,
    pub n_neur: usize,
    pub wheelbase: f64,
    pub sample_time: f64,
    pub speed_scale: f64,
    pub vx_min: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::MsNnSteer,
            q: 9,
            n_y: 5,
            n_x: 3,
            n_v: 3,
            n_p1: 3,
            n_p2: 1,
            n_neur: 5,
            wheelbase: DEFAULT_WHEELBASE,
            sample_time: DEFAULT_SAMPLE_TIME,
            speed_scale: 50.0,
            vx_min: VX_MIN,
        }
    }
}

impl ModelSpec {
    pub fn with_kind(kind: ModelKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::MsNnSteer => {
                param_count(Variant::Steer, self.q, self.n_y, self.n_x, self.n_v, self.n_p1, self.n_p2)
            }
            ModelKind::MsNnBase => {
                param_count(Variant::Base, self.q, self.n_y, self.n_x, self.n_v, self.n_p1, self.n_p2)
            }
            ModelKind::Gnn => GnnConfig::new(self.q, self.n_neur).param_count(),
        }
    }

    /// Instantiates the model for the given training samples.
    pub fn build(&self, train: &[WindowedSample]) -> Result<Network> {
        if train.is_empty() {
            return Err(Error::Argument("cannot fit model structure to an empty training set".into()));
        }
        if let Some(s) = train.iter().find(|s| s.input.len() != self.q + 1) {
            return Err(Error::Argument(format!(
                "sample {} has window length {}, spec expects q + 1 = {}",
                s.index,
                s.input.len(),
                self.q + 1
            )));
        }
        match self.kind {
            ModelKind::MsNnSteer | ModelKind::MsNnBase => {
                let variant = if self.kind == ModelKind::MsNnSteer { Variant::Steer } else { Variant::Base };
                let grid = MembershipGrid::from_signals(
                    self.n_y,
                    self.n_x,
                    self.n_v,
                    train.iter().flat_map(|s| s.input.a_y.iter().copied()),
                    train.iter().flat_map(|s| s.input.a_x.iter().copied()),
                    train.iter().flat_map(|s| s.input.v_x.iter().copied()),
                )?;
                let config = MsNnConfig {
                    variant,
                    q: self.q,
                    n_p1: self.n_p1,
                    n_p2: self.n_p2,
                    wheelbase: self.wheelbase,
                    sample_time: self.sample_time,
                    speed_scale: self.speed_scale,
                    vx_min: self.vx_min,
                    grid,
                };
                Ok(Network::MsNn(MsNn::new(config)?))
            }
            ModelKind::Gnn => {
                let mut config = GnnConfig::new(self.q, self.n_neur);
                config.standardize_from(train.iter().map(|s| &s.input));
                Ok(Network::Gnn(Gnn::new(config)?))
            }
        }
    }
}

/// A constructed neural controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Network {
    MsNn(MsNn),
    Gnn(Gnn),
}

impl Network {
    pub fn kind(&self) -> ModelKind {
        match self {
            Network::MsNn(m) => match m.config.variant {
                Variant::Steer => ModelKind::MsNnSteer,
                Variant::Base => ModelKind::MsNnBase,
            },
            Network::Gnn(_) => ModelKind::Gnn,
        }
    }

    pub fn q(&self) -> usize {
        match self {
            Network::MsNn(m) => m.config.q,
            Network::Gnn(m) => m.config.q,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    /// Seeded initialization with Gaussian dense-layer weights of standard
    /// deviation `std`. `warm_start` additionally biases the MS-NN mixer
    /// towards the window average.
    pub fn init_params(&self, seed: u64, std: f64, warm_start: bool) -> ParamVector {
        match self {
            Network::MsNn(m) => {
                let mut p = m.init_params(seed, std);
                if warm_start {
                    m.apply_warm_start(&mut p);
                }
                p
            }
            Network::Gnn(m) => m.init_params(seed, std),
        }
    }
}

impl Differentiable for Network {
    fn layout(&self) -> Layout {
        match self {
            Network::MsNn(m) => m.layout(),
            Network::Gnn(m) => m.layout(),
        }
    }

    fn forward_batch<G: Graph>(&self, g: &mut G, params: &[G::V], inputs: &[&WindowInput]) -> Result<Vec<G::V>> {
        match self {
            Network::MsNn(m) => m.forward_batch(g, params, inputs),
            Network::Gnn(m) => m.forward_batch(g, params, inputs),
        }
    }
}

/// On-disk form of a trained model: configuration, flat parameters and the
/// names of the layout segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kind: ModelKind,
    pub network: Network,
    pub param_count: usize,
    pub layout: Vec<Segment>,
    pub params: Vec<f64>,
}

impl ModelDocument {
    pub fn new(network: Network, params: &ParamVector) -> Result<Self> {
        if params.layout != network.layout() {
            return Err(Error::Layout("parameters do not match the network layout".into()));
        }
        Ok(Self {
            kind: network.kind(),
            param_count: params.len(),
            layout: params.layout.segments().to_vec(),
            params: params.values.clone(),
            network,
        })
    }

    /// Checks internal consistency and returns the model with its parameters.
    pub fn into_parts(self) -> Result<(Network, ParamVector)> {
        let layout = Layout::from_segments(self.layout, self.params.len())?;
        if layout != self.network.layout() {
            return Err(Error::Layout("stored layout does not match the network configuration".into()));
        }
        if self.param_count != self.params.len() || self.kind != self.network.kind() {
            return Err(Error::Layout("model document header is inconsistent with its body".into()));
        }
        let params = ParamVector::new(self.params, layout)?;
        Ok((self.network, params))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::predict;

    fn samples(q: usize) -> Vec<WindowedSample> {
        (0..20)
            .map(|k| {
                let x = k as f64;
                WindowedSample {
                    input: WindowInput::new(
                        (0..=q).map(|t| (x + t as f64 * 0.3).sin() * 12.0).collect(),
                        (0..=q).map(|t| (x * 0.7 + t as f64).cos() * 4.0).collect(),
                        (0..=q).map(|t| 30.0 + x + t as f64 * 0.1).collect(),
                    )
                    .unwrap(),
                    target: 0.0,
                    index: k,
                }
            })
            .collect()
    }

    #[test]
    fn window_lengths_must_match() {
        assert!(WindowInput::new(vec![1.0], vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(WindowInput::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn spec_param_counts_match_built_networks() {
        let train = samples(9);
        for kind in ModelKind::ALL {
            let spec = ModelSpec::with_kind(kind);
            let net = spec.build(&train).unwrap();
            assert_eq!(net.param_count(), spec.param_count());
            assert_eq!(net.kind(), kind);
        }
        assert_eq!(ModelSpec::with_kind(ModelKind::MsNnSteer).param_count(), 155);
        assert_eq!(ModelSpec::with_kind(ModelKind::MsNnBase).param_count(), 135);
        assert_eq!(ModelSpec::with_kind(ModelKind::Gnn).param_count(), 161);
    }

    #[test]
    fn document_round_trip() {
        let train = samples(4);
        let spec = ModelSpec { q: 4, ..ModelSpec::default() };
        let net = spec.build(&train).unwrap();
        let params = net.init_params(3, 1e-2, true);
        let doc = ModelDocument::new(net.clone(), &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        doc.save(&path).unwrap();
        let (net2, params2) = ModelDocument::load(&path).unwrap().into_parts().unwrap();
        assert_eq!(net2, net);
        assert_eq!(params2, params);
        let inputs: Vec<&WindowInput> = train.iter().map(|s| &s.input).collect();
        assert_eq!(predict(&net, &params, &inputs).unwrap(), predict(&net2, &params2, &inputs).unwrap());
    }

    #[test]
    fn tampered_document_is_rejected() {
        let train = samples(4);
        let net = ModelSpec { q: 4, ..ModelSpec::default() }.build(&train).unwrap();
        let params = net.init_params(3, 1e-2, false);
        let mut doc = ModelDocument::new(net, &params).unwrap();
        doc.params.pop();
        assert!(doc.into_parts().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("msnn-base".parse::<ModelKind>().unwrap(), ModelKind::MsNnBase);
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
