//! T₂ fit of a CPMG echo with known ESEEM and bath modulation.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::eseem::{cpmg_echo_model, BathModel, EseemNucleus};
use crate::fitting::lm::{nlls_fit, Bound, FitProblem, FitResult};
use crate::trace::{SignalView, Trace, XKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2Fit {
    /// μs
    pub t2: f64,
    pub t2_err: Option<f64>,
    pub fit: FitResult,
}

/// Fit `½·(1 + exp(−t/T₂)·C(τ)·Π V_i(τ))` for T₂, with the nuclear and bath
/// factors held fixed.
pub fn fit_cpmg_t2(
    trace: &Trace,
    nuclei: &[EseemNucleus],
    bath: &BathModel,
    consts: &PhysicalConstants,
) -> Result<T2Fit> {
    if trace.x_kind() != XKind::EvolutionTime {
        return Err(Error::InvalidTrace(format!(
            "T2 fit needs an evolution-time sweep, got {}",
            trace.x_kind().as_str()
        )));
    }
    let t = trace.x();
    let y = trace.signal(SignalView::Population)?;
    // Modulation without decay: the model evaluated with T₂ → ∞.
    let factor = cpmg_echo_model(t, nuclei, bath, f64::INFINITY, consts)?;
    let index: Vec<f64> = (0..t.len()).map(|i| i as f64).collect();
    let model = |p: &[f64], i: f64| {
        let i = i as usize;
        0.5 * (1.0 + (-t[i] / p[0]).exp() * factor[i])
    };
    let span = trace.span();
    let bound = Bound::new(trace.step().max(1e-6), 1e3 * span.max(1e-6));
    let mut best: Option<FitResult> = None;
    for init in [span / 10.0, span / 3.0, span] {
        let problem =
            FitProblem::new(model, &index, &y, vec![bound.clamp(init)]).with_bounds(vec![bound]).with_tol(1e-15);
        let fit = nlls_fit(&problem)?;
        if best.as_ref().is_none_or(|b| fit.ss_res < b.ss_res) {
            best = Some(fit);
        }
    }
    let fit = best.expect("at least one start");
    Ok(T2Fit { t2: fit.params[0], t2_err: fit.param_errors.as_ref().map(|e| e[0]), fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{cpmg_reference, synthesize, DetectorModel, PhysicsTruth};

    #[test]
    fn recovers_t2() {
        let c = PhysicalConstants::default();
        let (spec, truth) = cpmg_reference(&c);
        let PhysicsTruth::Cpmg { nuclei, bath, .. } = truth.clone() else { unreachable!() };
        let clean = synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 0).noiseless(), &c).unwrap();
        let fit = fit_cpmg_t2(&clean, &nuclei, &bath, &c).unwrap();
        assert!((fit.t2 / 38.0 - 1.0).abs() < 1e-8, "{}", fit.t2);

        let noisy = synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 12), &c).unwrap();
        let fit = fit_cpmg_t2(&noisy, &nuclei, &bath, &c).unwrap();
        assert!((fit.t2 - 38.0).abs() < 3.0, "{}", fit.t2);
    }
}
