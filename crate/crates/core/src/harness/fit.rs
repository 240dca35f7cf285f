//! Least-squares fits used for the scaling analyses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    Linear,
    LogLog,
    ResolutionVsNu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r2: f64,
    pub model: FitModel,
    pub points: usize,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidParams(format!("{} abscissae for {} ordinates", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientStatistics(format!("{n} points; a line needs 2")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("non-finite fit data".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult { slope, intercept, r2, model: FitModel::Linear, points: n })
}

/// Mean-field oscillation frequency `ν = (γ0/2π)√(λ²-1)`.
pub fn tc_frequency(gamma0: f64, lambda: f64) -> f64 {
    gamma0 / (2.0 * PI) * (lambda * lambda - 1.0).max(0.0).sqrt()
}

/// `R = a_R ν(λ) + b_R` over points with `λ ≥ 1.1`.
pub fn fit_resolution(gamma0: f64, lambdas: &[f64], resolutions: &[f64]) -> Result<FitResult> {
    let (nu, r): (Vec<f64>, Vec<f64>) =
        lambdas.iter().zip(resolutions).filter(|(l, _)| **l >= 1.1).map(|(l, r)| (tc_frequency(gamma0, *l), *r)).unzip();
    if nu.len() < 3 {
        return Err(Error::InsufficientStatistics(format!("{} points with λ ≥ 1.1; need 3", nu.len())));
    }
    Ok(FitResult { model: FitModel::ResolutionVsNu, ..fit_linear(&nu, &r)? })
}

/// `ln y = m ln x + b`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParams("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(FitResult { model: FitModel::LogLog, ..fit_linear(&lx, &ly)? })
}

/// `M*/S = a_M λ + b_M` over points with `λ ≥ 1.3`. Points flagged as
/// having no accuracy peak are rejected.
pub fn fit_threshold_scaling(spin: f64, lambdas: &[f64], m_star: &[f64], has_peak: &[bool]) -> Result<FitResult> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for ((l, m), p) in lambdas.iter().zip(m_star).zip(has_peak) {
        if *l < 1.3 {
            continue;
        }
        if !p {
            return Err(Error::InsufficientStatistics(format!("no accuracy peak at λ = {l}")));
        }
        x.push(*l);
        y.push(m / spin);
    }
    if x.len() < 3 {
        return Err(Error::InsufficientStatistics(format!("{} points with λ ≥ 1.3; need 3", x.len())));
    }
    fit_linear(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = fit_linear(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_line_r2_matches_correlation() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let f = fit_linear(&x, &y).unwrap();
        let n = 5.0;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        assert!((f.r2 - cov * cov / (vx * vy)).abs() < 1e-12);
    }

    #[test]
    fn resolution_equal_to_frequency() {
        let g = 1e-3;
        let l = [1.0, 1.3, 1.5, 1.7, 2.0];
        let r: Vec<f64> = l.iter().map(|&x| tc_frequency(g, x)).collect();
        let f = fit_resolution(g, &l, &r).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-15);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(f.points, 4);
        assert!(fit_resolution(g, &l[..3], &r[..3]).is_err());
    }

    #[test]
    fn squares() {
        let x = [1.0, 2.0, 5.0, 10.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.intercept.abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&[1.0, -2.0], &[1.0, 4.0]).is_err());
    }

    #[test]
    fn threshold_line_and_rejections() {
        let s = 25.0;
        let l = [1.1, 1.3, 1.5, 2.0];
        let m: Vec<f64> = l.iter().map(|x| s * (7.31 * x - 0.435)).collect();
        let f = fit_threshold_scaling(s, &l, &m, &[true; 4]).unwrap();
        assert!((f.slope - 7.31).abs() < 1e-12 && (f.intercept + 0.435).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_threshold_scaling(s, &l, &m, &[true, true, false, true]).is_err());
    }
}
