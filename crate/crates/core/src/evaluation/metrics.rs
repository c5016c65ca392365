//! Accuracy and complexity metrics on steering predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Argument(format!(
            "prediction and target lengths differ ({} vs {})",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Argument("metrics need at least one sample".into()));
    }
    Ok(())
}

/// Mean squared error [rad²].
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Root-mean-square error of radian inputs, reported in degrees.
pub fn rmse_deg(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(mse(pred, target)?.sqrt().to_degrees())
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Fraction of variance unexplained, `mse / var(target)`.
pub fn fvu(pred: &[f64], target: &[f64]) -> Result<f64> {
    let m = mse(pred, target)?;
    let var = variance(target);
    if !(var > 0.0) {
        return Err(Error::Argument("FVU is undefined for a constant target".into()));
    }
    Ok(m / var)
}

/// `n ln(mse) + 2k`.
pub fn aic(n_samples: usize, mse: f64, n_params: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Argument("AIC needs at least one sample".into()));
    }
    if !(mse > 0.0) {
        return Err(Error::Argument(format!("AIC needs a positive MSE, got {mse}")));
    }
    Ok(n_samples as f64 * mse.ln() + 2.0 * n_params as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// [deg]
    pub rmse: f64,
    pub fvu: f64,
    pub n_samples: usize,
}

impl Metrics {
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self> {
        Ok(Self { rmse: rmse_deg(pred, target)?, fvu: fvu(pred, target)?, n_samples: pred.len() })
    }
}

/// Box-plot statistics of the steering errors [deg].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme errors within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
    /// Largest absolute error.
    pub max_abs: f64,
    pub n: usize,
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn error_stats(pred: &[f64], target: &[f64]) -> Result<ErrorStats> {
    check_lengths(pred, target)?;
    if pred.len() < 5 {
        return Err(Error::Argument(format!("error statistics need at least 5 samples, got {}", pred.len())));
    }
    let mut e: Vec<f64> = pred.iter().zip(target).map(|(p, t)| (p - t).to_degrees()).collect();
    e.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&e, 0.25);
    let median = quantile_sorted(&e, 0.5);
    let q3 = quantile_sorted(&e, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = e.iter().copied().filter(|x| (lo..=hi).contains(x));
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
    Ok(ErrorStats {
        mean: e.iter().sum::<f64>() / e.len() as f64,
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers: e.iter().filter(|x| !(lo..=hi).contains(*x)).count(),
        max_abs: e.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        n: e.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_in_degrees() {
        assert!((rmse_deg(&[1.0, 2.0], &[0.0, 0.0]).unwrap() - 2.5f64.sqrt().to_degrees()).abs() < 1e-12);
        assert!((rmse_deg(&[1.0, 2.0], &[0.0, 0.0]).unwrap() - 90.592_581_788).abs() < 1e-8);
        assert!(rmse_deg(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fvu_of_mean_predictor_is_one() {
        assert_eq!(fvu(&[0.0, 0.0], &[-1.0, 1.0]).unwrap(), 1.0);
        assert!(fvu(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic(100, 1.0, 10).unwrap(), 20.0);
        assert!((aic(1000, (-2.0f64).exp(), 50).unwrap() + 1900.0).abs() < 1e-9);
        assert!(aic(10, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn fvu_is_mse_over_variance(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..50)
        ) {
            let (pred, target): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(variance(&target) > 1e-9);
            let m = mse(&pred, &target).unwrap();
            prop_assert_eq!(fvu(&pred, &target).unwrap(), m / variance(&target));
            let r = rmse_deg(&pred, &target).unwrap().to_radians();
            prop_assert!((r * r - m).abs() <= 1e-12 * m.max(1.0));
        }
    }
}
