//! Normalized triangular membership functions.
//!
//! Each axis holds strictly increasing centers. Between two adjacent centers
//! the two neighbouring activations interpolate linearly; outside the outer
//! centers the nearest one saturates at 1. The activations therefore form a
//! partition of unity and at most two of them are non-zero at any point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipAxis {
    centers: Vec<f64>,
}

/// Sparse activation: up to two `(index, weight)` pairs. Weights sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub first: (usize, f64),
    pub second: Option<(usize, f64)>,
}

impl Activation {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> {
        std::iter::once(self.first).chain(self.second)
    }
}

impl MembershipAxis {
    pub fn new(centers: Vec<f64>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::Argument(format!("a membership axis needs at least 2 centers, got {}", centers.len())));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument("membership centers must be finite".into()));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("membership centers must be strictly increasing".into()));
        }
        Ok(Self { centers })
    }

    /// `n` centers evenly spaced over `[lo, hi]`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Argument(format!("need at least 2 centers, got {n}")));
        }
        if !(hi > lo) {
            return Err(Error::Argument(format!("empty axis range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Self::new((0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect())
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Half-width of the triangle around center `i` on the side facing `x`
    /// equals the spacing to the neighbouring center.
    pub fn activation(&self, x: f64) -> Result<Activation> {
        if x.is_nan() {
            return Err(Error::Domain("membership evaluated at NaN".into()));
        }
        let c = &self.centers;
        let last = c.len() - 1;
        if x <= c[0] {
            return Ok(Activation { first: (0, 1.0), second: None });
        }
        if x >= c[last] {
            return Ok(Activation { first: (last, 1.0), second: None });
        }
        // first m with c[m] <= x < c[m + 1]
        let m = c.partition_point(|&ci| ci <= x) - 1;
        let w = (c[m + 1] - x) / (c[m + 1] - c[m]);
        if w == 1.0 {
            return Ok(Activation { first: (m, 1.0), second: None });
        }
        Ok(Activation { first: (m, w), second: Some((m + 1, 1.0 - w)) })
    }

    /// Dense activation vector.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.centers.len()];
        for (i, w) in self.activation(x)?.iter() {
            out[i] = w;
        }
        Ok(out)
    }
}

/// Local-model centers on the three operating-point axes. The lateral axis is
/// evaluated on `|a_y|`, so its centers are non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipGrid {
    pub ay: MembershipAxis,
    pub ax: MembershipAxis,
    pub vx: MembershipAxis,
}

impl MembershipGrid {
    pub fn new(ay: MembershipAxis, ax: MembershipAxis, vx: MembershipAxis) -> Result<Self> {
        if ay.centers()[0] < 0.0 {
            return Err(Error::Argument("lateral-acceleration centers must be non-negative".into()));
        }
        Ok(Self { ay, ax, vx })
    }

    /// Uniform centers over the ranges spanned by the given signals:
    /// `[0, max|a_y|]`, `[min a_x, max a_x]`, `[min v_x, max v_x]`.
    pub fn from_ranges(
        n_y: usize,
        n_x: usize,
        n_v: usize,
        ay_abs_max: f64,
        ax_range: (f64, f64),
        vx_range: (f64, f64),
    ) -> Result<Self> {
        Self::new(
            MembershipAxis::uniform(n_y, 0.0, ay_abs_max)?,
            MembershipAxis::uniform(n_x, ax_range.0, ax_range.1)?,
            MembershipAxis::uniform(n_v, vx_range.0, vx_range.1)?,
        )
    }

    pub fn from_signals(
        n_y: usize,
        n_x: usize,
        n_v: usize,
        ay: impl IntoIterator<Item = f64>,
        ax: impl IntoIterator<Item = f64>,
        vx: impl IntoIterator<Item = f64>,
    ) -> Result<Self> {
        let ay_max = ay.into_iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let range = |xs: &mut dyn Iterator<Item = f64>| {
            xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let ax_range = range(&mut ax.into_iter());
        let vx_range = range(&mut vx.into_iter());
        Self::from_ranges(n_y, n_x, n_v, ay_max, ax_range, vx_range)
    }
}
