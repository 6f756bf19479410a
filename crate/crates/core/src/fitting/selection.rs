//! Spin-count model selection by adjusted R².

use serde::{Deserialize, Serialize};

use crate::deer::MAX_TARGET_SPINS;
use crate::error::{Error, Result};
use crate::fitting::deer_rabi::{fit_deer_rabi_xy, fitted_curve, DeerRabiFit, DeerRabiOptions};
use crate::fitting::stats::{adjusted_r_squared, r_squared};
use crate::trace::{SignalView, Trace, XKind};

/// Parameter count used in the adjusted-R² penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMode {
    /// k = n couplings + 1 decay constant.
    PerModel,
    /// The same k for every model.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub k_mode: KMode,
    /// Rescale the signal to span [0, 1] before fitting.
    pub normalize_unit_range: bool,
    pub fit: DeerRabiOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self { k_mode: KMode::PerModel, normalize_unit_range: false, fit: DeerRabiOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSelection {
    pub best_n: usize,
    /// Fits for n = 1..=max_n.
    pub fits: Vec<DeerRabiFit>,
    pub r2: Vec<f64>,
    pub adj_r2: Vec<f64>,
    /// No model explains any variance (best adjusted R² ≤ 0).
    pub no_signal: bool,
}

pub fn select_spin_count(trace: &Trace, max_n: usize) -> Result<SpinSelection> {
    select_spin_count_with(trace, max_n, &SelectionOptions::default())
}

pub fn select_spin_count_with(trace: &Trace, max_n: usize, opts: &SelectionOptions) -> Result<SpinSelection> {
    if max_n == 0 || max_n > MAX_TARGET_SPINS {
        return Err(Error::TooManySpins { count: max_n, cap: MAX_TARGET_SPINS });
    }
    if trace.x_kind() != XKind::PulseLength {
        return Err(Error::InvalidTrace("spin-count selection needs a pulse-length sweep".into()));
    }
    let x = trace.x();
    let mut y = trace.signal(SignalView::Population)?;
    if opts.normalize_unit_range {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::Degenerate("constant trace cannot be rescaled".into()));
        }
        y.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }

    let mut fits = Vec::with_capacity(max_n);
    let mut r2 = Vec::with_capacity(max_n);
    let mut adj = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let fit = fit_deer_rabi_xy(x, &y, trace.n_avg(), n, &opts.fit, fits.last().map(|f: &DeerRabiFit| &f.model))?;
        let y_hat = fitted_curve(&fit.model, x);
        let k = match opts.k_mode {
            KMode::PerModel => n + 1,
            KMode::Fixed(k) => k,
        };
        r2.push(r_squared(&y, &y_hat)?);
        adj.push(adjusted_r_squared(&y, &y_hat, k)?);
        fits.push(fit);
    }
    // Strict improvement required, so ties resolve to the smaller model.
    let mut best = 0;
    for i in 1..adj.len() {
        if adj[i] > adj[best] {
            best = i;
        }
    }
    Ok(SpinSelection { best_n: best + 1, no_signal: adj[best] <= 0.0, fits, r2, adj_r2: adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::PhysicalConstants;
    use crate::deer::TargetSpinModel;
    use crate::synth::{deer_rabi_reference, synthesize, DetectorModel, PhysicsTruth, DEER_RABI_REPETITIONS};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn noiseless_single_spin_picks_one() {
        let (spec, _) = deer_rabi_reference();
        let truth = PhysicsTruth::DeerRabi { model: TargetSpinModel::new(vec![2.0 * PI * 1.3], 0.4).unwrap() };
        let t = synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 0).noiseless(), &PhysicalConstants::default())
            .unwrap();
        let sel = select_spin_count(&t, 3).unwrap();
        assert_eq!(sel.best_n, 1, "{:?}", sel.adj_r2);
        assert!(!sel.no_signal);
    }

    #[test]
    fn unadjusted_r2_non_decreasing_for_nested_models() {
        let c = PhysicalConstants::default();
        let (spec, truth) = deer_rabi_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(DEER_RABI_REPETITIONS, 21), &c).unwrap();
        let nested = SelectionOptions {
            fit: DeerRabiOptions { min_oscillations: 0.0, ..DeerRabiOptions::default() },
            ..SelectionOptions::default()
        };
        let sel = select_spin_count_with(&t, 3, &nested).unwrap();
        assert!(sel.r2.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{:?}", sel.r2);
        assert_eq!(sel.best_n, 2, "{:?}", sel.adj_r2);
        let bounded = select_spin_count(&t, 3).unwrap();
        assert_eq!(bounded.best_n, 2, "{:?}", bounded.adj_r2);
    }

    #[test]
    fn pure_noise_has_no_signal() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.5, 0.03).unwrap();
        let (spec, _) = deer_rabi_reference();
        let y: Vec<f64> = spec.grid.iter().map(|_| noise.sample(&mut rng)).collect();
        let t = Trace::normalized(spec.grid.clone(), XKind::PulseLength, y, 1).unwrap();
        let sel = select_spin_count(&t, 3).unwrap();
        assert!(sel.adj_r2.iter().all(|v| *v <= 0.0), "{:?}", sel.adj_r2);
        assert!(sel.no_signal);
    }

    #[test]
    fn fixed_k_changes_penalty_only() {
        let c = PhysicalConstants::default();
        let (spec, truth) = deer_rabi_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(DEER_RABI_REPETITIONS, 4), &c).unwrap();
        let a = select_spin_count(&t, 2).unwrap();
        let opts = SelectionOptions { k_mode: KMode::Fixed(3), ..SelectionOptions::default() };
        let b = select_spin_count_with(&t, 2, &opts).unwrap();
        assert_eq!(a.r2, b.r2);
        assert!(a.adj_r2[0] > b.adj_r2[0]);
        assert!((a.adj_r2[1] - b.adj_r2[1]).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn choice_invariant_under_affine_rescaling(seed in 0u64..500, a in 0.2f64..5.0, b in -2.0f64..2.0) {
            let c = PhysicalConstants::default();
            let (spec, truth) = deer_rabi_reference();
            let t = synthesize(&spec, &truth, &DetectorModel::new(DEER_RABI_REPETITIONS, seed), &c).unwrap();
            let y = t.signal(SignalView::Population).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let t2 = Trace::normalized(t.x().to_vec(), XKind::PulseLength, scaled, t.n_avg()).unwrap();
            let opts = SelectionOptions { normalize_unit_range: true, ..SelectionOptions::default() };
            let s1 = select_spin_count_with(&t, 3, &opts).unwrap();
            let s2 = select_spin_count_with(&t2, 3, &opts).unwrap();
            prop_assert_eq!(s1.best_n, s2.best_n);
        }
    }
}
