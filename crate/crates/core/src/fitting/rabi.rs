//! Rabi oscillation fit: ½·(1 + exp(−(t/T₀)²)·cos(2πft)).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fitting::lm::{nlls_fit, Bound, FitProblem, FitResult};
use crate::fitting::spectral::dominant_frequencies;
use crate::trace::{SignalView, Trace, XKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// MHz
    pub f: f64,
    /// μs
    pub t0: f64,
    pub f_err: Option<f64>,
    pub t0_err: Option<f64>,
    pub fit: FitResult,
}

fn rabi_model(p: &[f64], t: f64) -> f64 {
    0.5 * (1.0 + (-(t / p[1]).powi(2)).exp() * (2.0 * PI * p[0] * t).cos())
}

pub fn fit_rabi(trace: &Trace) -> Result<RabiFit> {
    if trace.x_kind() != XKind::PulseLength {
        return Err(Error::InvalidTrace(format!(
            "Rabi fit needs a pulse-length sweep, got {}",
            trace.x_kind().as_str()
        )));
    }
    let x = trace.x();
    let y = trace.signal(SignalView::Population)?;
    let n = x.len();
    if n < 8 {
        return Err(Error::InvalidTrace("Rabi fit needs at least 8 points".into()));
    }
    let span = trace.span();
    let dt = span / (n - 1) as f64;
    let f_bound = Bound::new(0.0, 0.5 / dt);
    let t0_bound = Bound::new(dt, 1e3 * span);

    let mut seeds = dominant_frequencies(x, &y, 3);
    if seeds.is_empty() {
        seeds.push(1.0 / span);
    }
    let mut best: Option<FitResult> = None;
    for f0 in seeds {
        for t0 in [span / 8.0, span / 3.0, span] {
            let init = vec![f_bound.clamp(f0), t0_bound.clamp(t0)];
            let problem = FitProblem::new(rabi_model, x, &y, init)
                .with_bounds(vec![f_bound, t0_bound])
                .with_tol(1e-15)
                .with_max_iter(300);
            let fit = nlls_fit(&problem)?;
            if best.as_ref().is_none_or(|b| fit.ss_res < b.ss_res) {
                best = Some(fit);
            }
        }
    }
    let fit = best.expect("at least one start");
    let errs = fit.param_errors.clone();
    Ok(RabiFit {
        f: fit.params[0],
        t0: fit.params[1],
        f_err: errs.as_ref().map(|e| e[0]),
        t0_err: errs.as_ref().map(|e| e[1]),
        fit,
    })
}
