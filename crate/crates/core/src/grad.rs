//! Reverse-mode differentiation over a flat parameter vector.
//!
//! Model forward passes are written once against the [`Graph`] trait. Running
//! them on [`Eval`] computes plain `f64` values; running them on a [`Tape`]
//! records every parameter-dependent operation so that a single backward sweep
//! yields the gradient with respect to all parameters. Operations whose
//! operands are all constants are folded and never recorded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::WindowInput;
use crate::telemetry::WindowedSample;

/// Scalar operations a forward pass may use.
pub trait Graph {
    type V: Copy;

    fn constant(&mut self, x: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn scale(&mut self, a: Self::V, c: f64) -> Self::V;
    fn add_const(&mut self, a: Self::V, c: f64) -> Self::V;
    fn powi(&mut self, a: Self::V, n: i32) -> Self::V;
    /// `sign(x)` with `sign(0) = 0`. Piecewise constant, so it never carries gradient.
    fn sign(&mut self, a: Self::V) -> Self::V;
    /// Exponential linear unit with alpha = 1.
    fn elu(&mut self, a: Self::V) -> Self::V;

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        let mut acc = self.constant(0.0);
        for &x in xs {
            acc = self.add(acc, x);
        }
        acc
    }

    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Self::V {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = self.constant(0.0);
        for (&x, &y) in a.iter().zip(b) {
            let p = self.mul(x, y);
            acc = self.add(acc, p);
        }
        acc
    }

    fn hadamard(&mut self, a: &[Self::V], b: &[Self::V]) -> Vec<Self::V> {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| self.mul(x, y)).collect()
    }

    /// `Σ_s coeffs[s] · x^s`, evaluated by Horner's rule.
    fn poly(&mut self, coeffs: &[Self::V], x: Self::V) -> Self::V {
        let mut acc = match coeffs.last() {
            Some(&c) => c,
            None => return self.constant(0.0),
        };
        for &c in coeffs.iter().rev().skip(1) {
            let p = self.mul(acc, x);
            acc = self.add(p, c);
        }
        acc
    }
}

pub(crate) fn sign_with_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elu_value(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Plain floating-point evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Graph for Eval {
    type V = f64;

    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        a * c
    }
    fn add_const(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn powi(&mut self, a: f64, n: i32) -> f64 {
        a.powi(n)
    }
    fn sign(&mut self, a: f64) -> f64 {
        sign_with_zero(a)
    }
    fn elu(&mut self, a: f64) -> f64 {
        elu_value(a)
    }
}

const CONST: u32 = u32::MAX;

/// A value on a [`Tape`]. Constants carry no node index.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    value: f64,
    index: u32,
}

impl Var {
    pub fn value(self) -> f64 {
        self.value
    }

    fn is_const(self) -> bool {
        self.index == CONST
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Wengert list of recorded operations. Each node keeps the local partial
/// derivatives with respect to at most two parents.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers independent variables. Call on an empty tape so the leaves
    /// occupy node indices `0..values.len()`.
    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.push(v, [CONST, CONST], [0.0, 0.0])).collect()
    }

    fn push(&mut self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node { parents, partials });
        Var { value, index }
    }

    fn unary(&mut self, value: f64, a: Var, da: f64) -> Var {
        if a.is_const() {
            return Var { value, index: CONST };
        }
        self.push(value, [a.index, CONST], [da, 0.0])
    }

    fn binary(&mut self, value: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        match (a.is_const(), b.is_const()) {
            (true, true) => Var { value, index: CONST },
            (false, true) => self.push(value, [a.index, CONST], [da, 0.0]),
            (true, false) => self.push(value, [b.index, CONST], [db, 0.0]),
            (false, false) => self.push(value, [a.index, b.index], [da, db]),
        }
    }

    /// Backward sweep from `output`; returns the adjoints of the first
    /// `n_leaves` nodes.
    pub fn gradient(&mut self, output: Var, n_leaves: usize) -> Vec<f64> {
        let n = self.nodes.len();
        self.adjoints.clear();
        self.adjoints.resize(n, 0.0);
        if !output.is_const() {
            self.adjoints[output.index as usize] = 1.0;
            let end = output.index as usize + 1;
            for i in (0..end).rev() {
                let adj = self.adjoints[i];
                if adj == 0.0 {
                    continue;
                }
                let node = self.nodes[i];
                for k in 0..2 {
                    let p = node.parents[k];
                    if p != CONST {
                        self.adjoints[p as usize] += node.partials[k] * adj;
                    }
                }
            }
        }
        self.adjoints[..n_leaves.min(n)].to_vec()
    }
}

impl Graph for Tape {
    type V = Var;

    fn constant(&mut self, x: f64) -> Var {
        Var { value: x, index: CONST }
    }
    fn value(&self, v: Var) -> f64 {
        v.value
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a.value + b.value, a, 1.0, b, 1.0)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a.value - b.value, a, 1.0, b, -1.0)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a.value * b.value, a, b.value, b, a.value)
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a.value * c, a, c)
    }
    fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a.value + c, a, 1.0)
    }
    fn powi(&mut self, a: Var, n: i32) -> Var {
        let d = if n == 0 { 0.0 } else { n as f64 * a.value.powi(n - 1) };
        self.unary(a.value.powi(n), a, d)
    }
    fn sign(&mut self, a: Var) -> Var {
        Var { value: sign_with_zero(a.value), index: CONST }
    }
    fn elu(&mut self, a: Var) -> Var {
        let d = if a.value > 0.0 { 1.0 } else { a.value.exp() };
        self.unary(elu_value(a.value), a, d)
    }
}

/// Named contiguous slice of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Ordered, gap-free partition of a flat parameter vector into named segments.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    /// Builds a layout from `(name, len)` pairs laid out back to back.
    pub fn from_sizes<S: Into<String>>(sizes: impl IntoIterator<Item = (S, usize)>) -> Self {
        let mut start = 0;
        let segments = sizes
            .into_iter()
            .map(|(name, len)| {
                let seg = Segment { name: name.into(), start, len };
                start += len;
                seg
            })
            .collect();
        Self { segments }
    }

    /// Accepts explicit segments, checking that they are disjoint and cover `0..total`.
    pub fn from_segments(mut segments: Vec<Segment>, total: usize) -> Result<Self> {
        segments.sort_by_key(|s| s.start);
        let mut cursor = 0;
        for s in &segments {
            if s.start != cursor {
                return Err(Error::Layout(format!(
                    "segment `{}` starts at {} but previous segment ends at {}",
                    s.name, s.start, cursor
                )));
            }
            cursor += s.len;
        }
        if cursor != total {
            return Err(Error::Layout(format!("segments cover {cursor} entries, vector has {total}")));
        }
        Ok(Self { segments })
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.start + s.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.segment(name).map(|s| s.start..s.start + s.len)
    }
}

/// Flat learnable parameters together with their layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Layout(format!(
                "parameter vector has {} entries, layout declares {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self { values: vec![0.0; layout.len()], layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.layout.range(name).map(move |r| &mut self.values[r])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// A model whose forward pass can run on any [`Graph`].
pub trait Differentiable {
    fn layout(&self) -> Layout;

    /// One prediction per input, in order.
    fn forward_batch<G: Graph>(&self, g: &mut G, params: &[G::V], inputs: &[&WindowInput]) -> Result<Vec<G::V>>;
}

fn check_layout<M: Differentiable>(model: &M, params: &ParamVector) -> Result<()> {
    let expected = model.layout();
    if params.layout != expected || params.values.len() != expected.len() {
        return Err(Error::Layout(format!(
            "parameters ({} entries) do not match the model layout ({} entries)",
            params.values.len(),
            expected.len()
        )));
    }
    Ok(())
}

fn check_batch(batch: &[WindowedSample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    Ok(())
}

fn mse_on_graph<G: Graph, M: Differentiable>(
    g: &mut G,
    model: &M,
    params: &[G::V],
    batch: &[WindowedSample],
) -> Result<G::V> {
    let inputs: Vec<&WindowInput> = batch.iter().map(|s| &s.input).collect();
    let preds = model.forward_batch(g, params, &inputs)?;
    let mut acc = g.constant(0.0);
    for (i, (p, s)) in preds.into_iter().zip(batch).enumerate() {
        let pv = g.value(p);
        if !pv.is_finite() {
            return Err(Error::Numeric { sample: i, detail: format!("prediction {pv}") });
        }
        let r = g.add_const(p, -s.target);
        let sq = g.mul(r, r);
        acc = g.add(acc, sq);
    }
    Ok(g.scale(acc, 1.0 / batch.len() as f64))
}

/// Mean squared error over `batch` and its gradient with respect to `params`.
pub fn eval_loss_and_grad<M: Differentiable>(
    model: &M,
    params: &ParamVector,
    batch: &[WindowedSample],
) -> Result<GradResult> {
    let mut tape = Tape::new();
    eval_loss_and_grad_with(&mut tape, model, params, batch)
}

/// As [`eval_loss_and_grad`], reusing the allocations of `tape`.
pub fn eval_loss_and_grad_with<M: Differentiable>(
    tape: &mut Tape,
    model: &M,
    params: &ParamVector,
    batch: &[WindowedSample],
) -> Result<GradResult> {
    check_layout(model, params)?;
    check_batch(batch)?;
    tape.clear();
    let leaves = tape.leaves(&params.values);
    let loss = mse_on_graph(tape, model, &leaves, batch)?;
    let gradient = tape.gradient(loss, leaves.len());
    if let Some(k) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric { sample: 0, detail: format!("gradient entry {k} is not finite") });
    }
    Ok(GradResult { loss: loss.value(), gradient })
}

/// Mean squared error without derivatives.
pub fn eval_loss<M: Differentiable>(model: &M, params: &ParamVector, batch: &[WindowedSample]) -> Result<f64> {
    check_layout(model, params)?;
    check_batch(batch)?;
    mse_on_graph(&mut Eval, model, &params.values, batch)
}

/// Central-difference gradient of the batch MSE.
pub fn finite_diff_grad<M: Differentiable>(
    model: &M,
    params: &ParamVector,
    batch: &[WindowedSample],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {step}")));
    }
    check_layout(model, params)?;
    check_batch(batch)?;
    let mut probe = params.values.clone();
    let mut grad = Vec::with_capacity(probe.len());
    for k in 0..probe.len() {
        let orig = probe[k];
        probe[k] = orig + step;
        let up = mse_on_graph(&mut Eval, model, &probe, batch)?;
        probe[k] = orig - step;
        let down = mse_on_graph(&mut Eval, model, &probe, batch)?;
        probe[k] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Model predictions for every sample, without derivatives.
pub fn predict<M: Differentiable>(model: &M, params: &ParamVector, inputs: &[&WindowInput]) -> Result<Vec<f64>> {
    check_layout(model, params)?;
    model.forward_batch(&mut Eval, &params.values, inputs)
}
