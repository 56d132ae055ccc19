//! Per-stratum moments of a target variable, from a register or from a
//! prior weighted survey.

use crate::error::{Error, Result};

/// Mean and variance of one variable in one stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarMoments {
    pub mean: f64,
    /// Population variance (divisor N for a register, weighted analogue
    /// for survey data).
    pub var: f64,
}

impl VarMoments {
    pub fn sd(&self) -> f64 {
        self.var.max(0.0).sqrt()
    }
}

/// Moments from a register: every unit observed, equal weight.
///
/// The variance uses divisor N — it estimates the population variance of
/// the finite stratum itself, not of a hypothetical superpopulation.
pub fn stratum_stats_register(values: &[f64]) -> Result<VarMoments> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarise an empty stratum"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(VarMoments { mean, var })
}

/// Moments from prior survey data: each observation carries a design
/// weight, and both moments are weight-normalised:
///
/// mean = Σ w·y / Σ w,   var = Σ w·y² / Σ w − mean².
pub fn stratum_stats_survey(values: &[f64], weights: &[f64]) -> Result<VarMoments> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarise an empty stratum"));
    }
    if values.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("survey weights must be positive"));
    }
    let wsum: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let msq = values.iter().zip(weights).map(|(y, w)| y * y * w).sum::<f64>() / wsum;
    Ok(VarMoments { mean, var: (msq - mean * mean).max(0.0) })
}
