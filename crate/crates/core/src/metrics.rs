//! Error metrics between predicted and reference fields.

use crate::error::{Error, Result};
use crate::fields::{check_same, ScalarGrid};

/// Mean absolute error.
pub fn mae(pred: &ScalarGrid, truth: &ScalarGrid) -> Result<f64> {
    check_same("mae", pred, truth)?;
    Ok((pred.values() - truth.values()).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// Mean relative error in percent. Needs `truth > 0` everywhere.
pub fn mre(pred: &ScalarGrid, truth: &ScalarGrid) -> Result<f64> {
    check_same("mre", pred, truth)?;
    if let Some(v) = truth.values().iter().find(|v| **v <= 0.0) {
        return Err(Error::Invalid(format!("relative error needs a positive reference, found {v}")));
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t).abs() / t)
        .sum();
    Ok(100.0 * sum / truth.len() as f64)
}

/// Pointwise `|pred - truth|`.
pub fn error_map(pred: &ScalarGrid, truth: &ScalarGrid) -> Result<ScalarGrid> {
    check_same("error map", pred, truth)?;
    pred.with_values((pred.values() - truth.values()).mapv(f64::abs))
}

/// Spatially constant grid at the mean of `truth`; the trivial reference predictor.
pub fn mean_baseline(truth: &ScalarGrid) -> Result<ScalarGrid> {
    truth.map(|_| truth.mean())
}
