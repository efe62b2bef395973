//! Correlation and least-squares regression over metric batches.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("rank deficient design: {0}")]
    RankDeficiency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation with a two-sided p-value from Student's t with
/// `n - 2` degrees of freedom.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateSample(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::DegenerateSample(format!("need at least 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateSample("non-finite value".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::DegenerateSample(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p_value, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

/// Least squares with an intercept. `features` is row-major, one row per
/// observation.
pub fn ols_fit(features: &[Vec<f64>], target: &[f64]) -> Result<OlsFit, StatsError> {
    let n = features.len();
    if n != target.len() {
        return Err(StatsError::DegenerateSample(format!("{n} rows but {} targets", target.len())));
    }
    let p = features.first().map_or(0, Vec::len);
    if features.iter().any(|row| row.len() != p) {
        return Err(StatsError::DegenerateSample("ragged feature rows".into()));
    }
    if n < p + 1 || n == 0 {
        return Err(StatsError::RankDeficiency(format!("{n} rows for {} columns", p + 1)));
    }
    if features.iter().flatten().chain(target).any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateSample("non-finite value".into()));
    }
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
    let y = DVector::from_column_slice(target);
    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * (n.max(p + 1) as f64) * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < p + 1 {
        return Err(StatsError::RankDeficiency(format!("rank {rank} < {} columns", p + 1)));
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| StatsError::RankDeficiency(e.to_string()))?;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let residuals = &y - &x * &beta;
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let constant = target.iter().all(|v| *v == target[0]);
    let r_squared = if constant || ss_tot == 0.0 { 0.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(OlsFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        r_squared,
    })
}
