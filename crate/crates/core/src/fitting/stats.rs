//! Goodness-of-fit statistics.

use crate::error::{Error, Result};

fn ss_parts(y: &[f64], y_hat: &[f64]) -> Result<(f64, f64)> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::InvalidProblem("y and y_hat must be equal-length and non-empty".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss_res, ss_tot))
}

pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    let (ss_res, ss_tot) = ss_parts(y, y_hat)?;
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("constant data has no variance".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `1 − (SS_res/SS_tot)·(n−1)/(n−k−1)` for a model with `k` free parameters.
pub fn adjusted_r_squared(y: &[f64], y_hat: &[f64], k_params: usize) -> Result<f64> {
    let n = y.len();
    if n <= k_params + 1 {
        return Err(Error::InvalidProblem(format!("adjusted R² needs n > k + 1 (n = {n}, k = {k_params})")));
    }
    let (ss_res, ss_tot) = ss_parts(y, y_hat)?;
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("constant data has no variance".into()));
    }
    Ok(1.0 - (ss_res / ss_tot) * (n - 1) as f64 / (n - k_params - 1) as f64)
}

/// Durbin-Watson statistic of a residual sequence: ≈2 for white residuals,
/// well below 2 when neighbouring residuals are correlated (lack of fit).
pub fn durbin_watson(residuals: &[f64]) -> f64 {
    let den: f64 = residuals.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return 2.0;
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    num / den
}

pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_is_one() {
        let y = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(adjusted_r_squared(&y, &y, 1).unwrap(), 1.0);
    }

    #[test]
    fn mean_predictor_hand_value() {
        // SS_res = SS_tot, n = 100, k = 1: 1 − 99/98 = −1/98.
        let y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mean = y.iter().sum::<f64>() / 100.0;
        let y_hat = vec![mean; 100];
        let v = adjusted_r_squared(&y, &y_hat, 1).unwrap();
        assert!((v + 1.0 / 98.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn constant_data_is_degenerate() {
        let y = [2.0; 10];
        assert!(matches!(adjusted_r_squared(&y, &y, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_points() {
        let y = [1.0, 2.0, 3.0];
        assert!(adjusted_r_squared(&y, &y, 2).is_err());
    }

    #[test]
    fn durbin_watson_detects_structure() {
        let smooth: Vec<f64> = (0..100).map(|i| (i as f64 * 0.05).sin()).collect();
        assert!(durbin_watson(&smooth) < 0.1);
        let alternating: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(durbin_watson(&alternating) > 3.5);
    }
}
