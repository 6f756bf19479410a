//! Multi-spin DEER-Rabi fits: I(t) = ½ + ½·exp(−(t/T₀)²)·Π cos(ω_j t).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::deer::{nv_epr_signal, TargetSpinModel, MAX_TARGET_SPINS};
use crate::error::{Error, Result};
use crate::fitting::lm::{nlls_fit, Bound, FitProblem, FitResult};
use crate::fitting::spectral::dominant_frequencies;
use crate::trace::{SignalView, Trace, XKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeerRabiOptions {
    /// Weight points by the inverse binomial variance of the population.
    pub poisson_weights: bool,
    /// Number of seeded candidates refined by the optimizer.
    pub refine: usize,
    /// Lower coupling bound in oscillations per record. Below 1 the n-spin
    /// model contains the (n−1)-spin one as ω → 0.
    pub min_oscillations: f64,
}

impl Default for DeerRabiOptions {
    fn default() -> Self {
        Self { poisson_weights: false, refine: 6, min_oscillations: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerRabiFit {
    /// Couplings sorted ascending.
    pub model: TargetSpinModel,
    /// One-sigma errors for the sorted couplings then T₀.
    pub errors: Option<Vec<f64>>,
    /// Some parameter finished on its bound.
    pub bound_saturated: bool,
    pub fit: FitResult,
}

/// Coupling bounds [2π/T_span, π/Δt] rad/μs: one oscillation over the record,
/// at most the Nyquist rate of the grid.
pub fn omega_bounds(x: &[f64]) -> Result<Bound> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidTrace("DEER-Rabi fit needs at least 3 points".into()));
    }
    let span = x[n - 1] - x[0];
    let dt = span / (n - 1) as f64;
    Ok(Bound::new(2.0 * PI / span, PI / dt))
}

fn model_fn(n: usize) -> impl Fn(&[f64], f64) -> f64 {
    move |p: &[f64], t: f64| {
        let decay = (-(t / p[n]).powi(2)).exp();
        let prod: f64 = p[..n].iter().map(|w| (w * t).cos()).product();
        0.5 + 0.5 * decay * prod
    }
}

/// Non-decreasing index tuples of length `n` over `0..m`.
fn multisets(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    loop {
        out.push(cur.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < m {
                let v = cur[i] + 1;
                for c in &mut cur[i..] {
                    *c = v;
                }
                break;
            }
        }
    }
}

fn seed_omegas(x: &[f64], y: &[f64], bound: Bound, n: usize) -> Vec<f64> {
    let span = x[x.len() - 1] - x[0];
    let grid_lo = bound.lo.max(2.0 * PI / span);
    let count = match n {
        1 | 2 => 24,
        3 => 18,
        _ => 12,
    };
    let ratio = (bound.hi / grid_lo).ln();
    let mut seeds: Vec<f64> = (0..count).map(|i| grid_lo * (ratio * i as f64 / (count - 1) as f64).exp()).collect();
    seeds.extend(dominant_frequencies(x, y, 4).into_iter().map(|f| 2.0 * PI * f).filter(|w| bound.contains(*w)));
    seeds.iter_mut().for_each(|w| *w = bound.clamp(*w));
    seeds.sort_by(f64::total_cmp);
    seeds.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    seeds
}

pub fn fit_deer_rabi(trace: &Trace, n_spins: usize) -> Result<DeerRabiFit> {
    fit_deer_rabi_with(trace, n_spins, &DeerRabiOptions::default())
}

pub fn fit_deer_rabi_with(trace: &Trace, n_spins: usize, opts: &DeerRabiOptions) -> Result<DeerRabiFit> {
    if trace.x_kind() != XKind::PulseLength {
        return Err(Error::InvalidTrace(format!(
            "DEER-Rabi fit needs a pulse-length sweep, got {}",
            trace.x_kind().as_str()
        )));
    }
    let y = trace.signal(SignalView::Population)?;
    fit_deer_rabi_xy(trace.x(), &y, trace.n_avg(), n_spins, opts, None)
}

pub(crate) fn fit_deer_rabi_xy(
    x: &[f64],
    y: &[f64],
    n_avg: u64,
    n_spins: usize,
    opts: &DeerRabiOptions,
    warm: Option<&TargetSpinModel>,
) -> Result<DeerRabiFit> {
    if n_spins == 0 || n_spins > MAX_TARGET_SPINS {
        return Err(Error::TooManySpins { count: n_spins, cap: MAX_TARGET_SPINS });
    }
    let full = omega_bounds(x)?;
    if !(opts.min_oscillations >= 0.0) {
        return Err(Error::InvalidProblem("min_oscillations must be non-negative".into()));
    }
    let wb = Bound::new(full.lo * opts.min_oscillations, full.hi);
    let span = x[x.len() - 1] - x[0];
    let dt = span / (x.len() - 1) as f64;
    let t0b = Bound::new(dt, 1e3 * span);
    let mut bounds = vec![wb; n_spins];
    bounds.push(t0b);

    let weights: Option<Vec<f64>> = opts.poisson_weights.then(|| {
        y.iter()
            .map(|p| {
                let p = p.clamp(0.01, 0.99);
                n_avg as f64 / (p * (1.0 - p))
            })
            .collect()
    });

    let model = model_fn(n_spins);
    let cost = |p: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&t, &v))| weights.as_ref().map_or(1.0, |w| w[i]) * (v - model(p, t)).powi(2))
            .sum()
    };

    let omegas = seed_omegas(x, y, wb, n_spins);
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    for combo in multisets(omegas.len(), n_spins) {
        for t0 in [span / 8.0, span / 3.0, span] {
            let mut p: Vec<f64> = combo.iter().map(|&i| omegas[i]).collect();
            p.push(t0b.clamp(t0));
            starts.push((cost(&p), p));
        }
    }
    // Stable sort keeps generation order among equal costs.
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(opts.refine.max(1));
    // A smaller model's solution plus one extra coupling keeps the larger
    // model from settling in a worse basin than its predecessor.
    if let Some(prev) = warm.filter(|m| m.omegas.len() + 1 == n_spins) {
        let mut extra = omegas.clone();
        extra.push(wb.lo);
        let mut extended: Vec<(f64, Vec<f64>)> = extra
            .iter()
            .map(|&w| {
                let mut p: Vec<f64> = prev.omegas.iter().map(|v| wb.clamp(*v)).collect();
                p.push(w);
                p.push(t0b.clamp(prev.t0));
                (cost(&p), p)
            })
            .collect();
        extended.sort_by(|a, b| a.0.total_cmp(&b.0));
        starts.extend(extended.into_iter().take(3));
    }

    let refine = |init: &Vec<f64>| -> Result<FitResult> {
        let mut problem =
            FitProblem::new(&model, x, y, init.clone()).with_bounds(bounds.clone()).with_tol(1e-13).with_max_iter(300);
        if let Some(w) = &weights {
            problem = problem.with_weights(w);
        }
        nlls_fit(&problem)
    };
    #[cfg(feature = "parallel")]
    let fits: Vec<Result<FitResult>> = {
        use rayon::prelude::*;
        starts.par_iter().map(|(_, p)| refine(p)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<Result<FitResult>> = starts.iter().map(|(_, p)| refine(p)).collect();

    let mut best: Option<FitResult> = None;
    for fit in fits {
        let fit = fit?;
        let better = best.as_ref().is_none_or(|b| {
            fit.cost_history.last().unwrap_or(&f64::INFINITY) < b.cost_history.last().unwrap_or(&f64::INFINITY)
        });
        if better {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("at least one start");

    let mut order: Vec<usize> = (0..n_spins).collect();
    order.sort_by(|&a, &b| fit.params[a].total_cmp(&fit.params[b]).then(a.cmp(&b)));
    fit.params = permute_couplings(&fit.params, &order);
    fit.param_errors = fit.param_errors.as_deref().map(|e| permute_couplings(e, &order));
    let mut at_bound: Vec<bool> = order.iter().map(|&i| fit.at_bound[i]).collect();
    at_bound.push(fit.at_bound[n_spins]);
    fit.at_bound = at_bound;

    let model = TargetSpinModel { omegas: fit.params[..n_spins].to_vec(), t0: fit.params[n_spins] };
    Ok(DeerRabiFit { errors: fit.param_errors.clone(), bound_saturated: fit.any_at_bound(), model, fit })
}

/// Reorder the coupling entries of `v` by `order`, keeping the trailing T₀.
fn permute_couplings(v: &[f64], order: &[usize]) -> Vec<f64> {
    let mut out: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    out.push(v[order.len()]);
    out
}

/// Model curve of a fitted DEER-Rabi model on `t`.
pub(crate) fn fitted_curve(model: &TargetSpinModel, t: &[f64]) -> Vec<f64> {
    t.iter().map(|&x| nv_epr_signal(model, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::PhysicalConstants;
    use crate::synth::{deer_rabi_reference, synthesize, DetectorModel, PhysicsTruth, DEER_RABI_REPETITIONS};
    use proptest::prelude::*;

    fn noiseless(omegas: Vec<f64>, t0: f64) -> Trace {
        let (spec, _) = deer_rabi_reference();
        let truth = PhysicsTruth::DeerRabi { model: TargetSpinModel::new(omegas, t0).unwrap() };
        synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 0).noiseless(), &PhysicalConstants::default()).unwrap()
    }

    #[test]
    fn multiset_counts() {
        assert_eq!(multisets(4, 1).len(), 4);
        assert_eq!(multisets(4, 2).len(), 10);
        assert_eq!(multisets(5, 3).len(), 35);
        assert!(multisets(4, 3).iter().all(|c| c.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn bounds_from_grid() {
        let x: Vec<f64> = (0..=150).map(|i| 0.01 * i as f64).collect();
        let b = omega_bounds(&x).unwrap();
        assert!((b.lo - 2.0 * PI / 1.5).abs() < 1e-12);
        assert!((b.hi - PI / 0.01).abs() < 1e-9);
    }

    #[test]
    fn noiseless_single_spin_exact() {
        let w = 2.0 * PI * 1.7;
        let fit = fit_deer_rabi(&noiseless(vec![w], 0.4), 1).unwrap();
        assert!((fit.model.omegas[0] / w - 1.0).abs() < 1e-6, "{:?}", fit.model);
        assert!((fit.model.t0 / 0.4 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noiseless_two_spin_reference() {
        let (_, truth) = deer_rabi_reference();
        let PhysicsTruth::DeerRabi { model } = truth else { unreachable!() };
        let fit = fit_deer_rabi(&noiseless(model.omegas.clone(), model.t0), 2).unwrap();
        for (a, b) in fit.model.omegas.iter().zip(&model.omegas) {
            assert!((a / b - 1.0).abs() < 1e-6, "{:?}", fit.model);
        }
    }

    #[test]
    fn equal_couplings() {
        let w = 2.0 * PI * 1.5;
        let fit = fit_deer_rabi(&noiseless(vec![w, w], 0.5), 2).unwrap();
        let [a, b] = [fit.model.omegas[0], fit.model.omegas[1]];
        assert!(a <= b);
        assert!((a - w).abs() < 1e-4 * w && (b - w).abs() < 1e-4 * w, "{a} {b}");
    }

    #[test]
    fn noisy_reference_within_tolerance() {
        let c = PhysicalConstants::default();
        let (spec, truth) = deer_rabi_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(DEER_RABI_REPETITIONS, 3), &c).unwrap();
        let fit = fit_deer_rabi(&t, 2).unwrap();
        let mhz = fit.model.couplings_mhz();
        assert!((mhz[0] - 1.12).abs() < 0.2 && (mhz[1] - 2.24).abs() < 0.2, "{mhz:?}");
    }

    #[test]
    fn rejects_bad_spin_count() {
        let t = noiseless(vec![5.0], 0.4);
        assert!(fit_deer_rabi(&t, 0).is_err());
        assert!(fit_deer_rabi(&t, 6).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn output_sorted(seed in 0u64..1000, n in 1usize..=3) {
            let c = PhysicalConstants::default();
            let (spec, truth) = deer_rabi_reference();
            let t = synthesize(&spec, &truth, &DetectorModel::new(200_000, seed), &c).unwrap();
            let fit = fit_deer_rabi(&t, n).unwrap();
            prop_assert!(fit.model.omegas.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
