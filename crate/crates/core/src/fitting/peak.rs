//! Gaussian peak fits for DEER spectra and pulsed-ODMR lines.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::deer::{deer_spectrum, DeerSpectrumModel};
use crate::error::{Error, Result};
use crate::fitting::lm::{nlls_fit, Bound, FitProblem, FitResult};
use crate::fitting::stats::{durbin_watson, median};
use crate::hamiltonian::TransitionPair;
use crate::trace::{SignalView, Trace, XKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// Lower width bound in grid steps.
    pub min_width_steps: f64,
    pub view: SignalViewOption,
    /// Durbin-Watson value below which residuals are flagged as structured.
    pub lack_of_fit_dw: f64,
}

/// Serializable mirror of [`SignalView`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalViewOption {
    Population,
    Difference,
}

impl From<SignalViewOption> for SignalView {
    fn from(v: SignalViewOption) -> Self {
        match v {
            SignalViewOption::Population => SignalView::Population,
            SignalViewOption::Difference => SignalView::Difference,
        }
    }
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { min_width_steps: 4.0, view: SignalViewOption::Difference, lack_of_fit_dw: 1.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub model: DeerSpectrumModel,
    /// One-sigma errors in (center, width, amplitude, baseline) order.
    pub errors: Option<[f64; 4]>,
    pub residual_sd: f64,
    pub durbin_watson: f64,
    pub lack_of_fit: bool,
    pub fit: FitResult,
}

impl PeakFit {
    pub fn fwhm(&self) -> f64 {
        self.model.fwhm()
    }
}

fn gaussian_model(p: &[f64], f: f64) -> f64 {
    deer_spectrum(f, &DeerSpectrumModel { center: p[0], width: p[1], amplitude: p[2], baseline: p[3] })
}

/// (center, sigma, amplitude) starting guess from the largest excursion of `y` from `baseline`.
fn peak_seed(x: &[f64], y: &[f64], baseline: f64, step: f64) -> (f64, f64, f64) {
    let n = y.len();
    let (imax, amp) = y
        .iter()
        .map(|v| v - baseline)
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        .unwrap();
    let half = amp.abs() / 2.0;
    let above = |i: usize| (y[i] - baseline) * amp.signum() >= half;
    let mut lo = imax;
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && above(hi + 1) {
        hi += 1;
    }
    (x[imax], (x[hi] - x[lo]).max(step) / (8.0 * 2f64.ln()).sqrt(), amp)
}

/// Single-Gaussian fit to arbitrary `(x, y)` data without the peak-presence check.
pub fn gaussian_peak_xy(x: &[f64], y: &[f64], opts: &PeakOptions) -> Result<PeakFit> {
    let n = x.len();
    if n < 8 || y.len() != n {
        return Err(Error::InvalidTrace(format!("peak fit needs at least 8 points, got {n}")));
    }
    let span = x[n - 1] - x[0];
    let step = span / (n - 1) as f64;
    let edge = (n / 10).max(2);
    let edges: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    let baseline = median(&edges);
    let min_width = opts.min_width_steps * step;
    let width_bound = Bound::new(min_width, span.max(min_width));
    let bounds = vec![Bound::new(x[0], x[n - 1]), width_bound, Bound::FREE, Bound::FREE];

    // Seeds from the raw extremum and from a boxcar-smoothed copy, which is
    // not pulled onto single noise spikes.
    let half_window = (opts.min_width_steps.round() as usize).max(1);
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(half_window), (i + half_window).min(n - 1));
            y[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect();
    let mut best: Option<FitResult> = None;
    for curve in [y, &smoothed[..]] {
        let start = peak_seed(x, curve, baseline, step);
        let p0 = vec![start.0, width_bound.clamp(start.1), start.2, baseline];
        let problem =
            FitProblem::new(gaussian_model, x, y, p0).with_bounds(bounds.clone()).with_tol(1e-14).with_max_iter(400);
        let fit = nlls_fit(&problem)?;
        if best.as_ref().is_none_or(|b| fit.ss_res < b.ss_res) {
            best = Some(fit);
        }
    }
    let fit = best.expect("at least one start");
    let p = &fit.params;
    let model = DeerSpectrumModel { center: p[0], width: p[1], amplitude: p[2], baseline: p[3] };
    let residuals: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - deer_spectrum(xi, &model)).collect();
    let residual_sd = (fit.ss_res / (n - 4) as f64).sqrt();
    let dw = durbin_watson(&residuals);
    let errors = fit.param_errors.as_ref().map(|e| [e[0], e[1], e[2], e[3]]);
    Ok(PeakFit { model, errors, residual_sd, durbin_watson: dw, lack_of_fit: dw < opts.lack_of_fit_dw, fit })
}

/// Single-Gaussian fit of a frequency trace without the peak-presence check.
pub fn gaussian_peak_raw(trace: &Trace, opts: &PeakOptions) -> Result<PeakFit> {
    if trace.x_kind() != XKind::Frequency {
        return Err(Error::InvalidTrace(format!("peak fit needs a frequency sweep, got {}", trace.x_kind().as_str())));
    }
    let y = trace.signal(opts.view.into())?;
    gaussian_peak_xy(trace.x(), &y, opts)
}

pub fn fit_gaussian_peak_with(trace: &Trace, opts: &PeakOptions) -> Result<PeakFit> {
    let fit = gaussian_peak_raw(trace, opts)?;
    if !(fit.model.amplitude.abs() >= 2.0 * fit.residual_sd) {
        return Err(Error::NoPeak { amplitude: fit.model.amplitude, residual_sd: fit.residual_sd });
    }
    Ok(fit)
}

/// Gaussian fit of the reference-normalized SIG2 − SIG1 difference.
pub fn fit_gaussian_peak(trace: &Trace) -> Result<PeakFit> {
    fit_gaussian_peak_with(trace, &PeakOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrFit {
    pub pair: TransitionPair,
    /// One-sigma center errors, MHz.
    pub errors: (f64, f64),
    pub lower: PeakFit,
    pub upper: PeakFit,
}

/// Fit one Gaussian dip on each side of the zero-field splitting.
pub fn fit_odmr_pair(trace: &Trace, consts: &PhysicalConstants) -> Result<OdmrFit> {
    if trace.x_kind() != XKind::Frequency {
        return Err(Error::InvalidTrace("ODMR fit needs a frequency sweep".into()));
    }
    let y = trace.signal(SignalView::Population)?;
    let split = trace.x().partition_point(|&f| f < consts.zero_field_d);
    let opts = PeakOptions { view: SignalViewOption::Population, ..PeakOptions::default() };
    let side = |r: std::ops::Range<usize>| -> Result<PeakFit> {
        let fit = gaussian_peak_xy(&trace.x()[r.clone()], &y[r], &opts)?;
        if !(fit.model.amplitude.abs() >= 2.0 * fit.residual_sd) {
            return Err(Error::NoPeak { amplitude: fit.model.amplitude, residual_sd: fit.residual_sd });
        }
        Ok(fit)
    };
    let lower = side(0..split)?;
    let upper = side(split..trace.len())?;
    let pair = TransitionPair::new(lower.model.center, upper.model.center)?;
    let err = |f: &PeakFit| f.errors.map_or(f64::NAN, |e| e[0]);
    Ok(OdmrFit { pair, errors: (err(&lower), err(&upper)), lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{deer_spectrum_reference, odmr_reference, synthesize, DetectorModel, PhysicsTruth};

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn noiseless_spectrum_recovered() {
        let c = consts();
        let (spec, truth) = deer_spectrum_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 0).noiseless(), &c).unwrap();
        let fit = fit_gaussian_peak(&t).unwrap();
        let PhysicsTruth::CpmgDeer { spectrum } = truth else { unreachable!() };
        assert!((fit.model.center - spectrum.center).abs() < 1e-6);
        assert!((fit.model.width - spectrum.width).abs() < 1e-6);
        // Difference view: D = 1 − 2·population.
        assert!((fit.model.amplitude + 2.0 * spectrum.amplitude).abs() < 1e-8);
        assert!((fit.model.baseline - (1.0 - 2.0 * spectrum.baseline)).abs() < 1e-8);
    }

    #[test]
    fn flat_noise_has_no_peak() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.3, 0.05).unwrap();
        let x: Vec<f64> = (0..141).map(|i| 880.0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|_| noise.sample(&mut rng)).collect();
        let t = Trace::normalized(x, XKind::Frequency, y, 1).unwrap();
        assert!(matches!(fit_gaussian_peak(&t), Err(Error::NoPeak { .. })));
    }

    #[test]
    fn satellites_flag_lack_of_fit() {
        let x: Vec<f64> = (0..281).map(|i| 880.0 + 0.25 * i as f64).collect();
        let line = |c: f64, a: f64| DeerSpectrumModel { center: c, width: 2.0, amplitude: a, baseline: 0.0 };
        let y: Vec<f64> = x
            .iter()
            .map(|&f| {
                0.3 + deer_spectrum(f, &line(914.7, 0.1))
                    + deer_spectrum(f, &line(904.7, 0.05))
                    + deer_spectrum(f, &line(924.7, 0.05))
            })
            .collect();
        let t = Trace::normalized(x.clone(), XKind::Frequency, y, 1).unwrap();
        let fit = fit_gaussian_peak(&t).unwrap();
        assert!(fit.lack_of_fit, "DW = {}", fit.durbin_watson);

        let single: Vec<f64> = x.iter().map(|&f| 0.3 + deer_spectrum(f, &line(914.7, 0.1))).collect();
        let clean = fit_gaussian_peak(&Trace::normalized(x, XKind::Frequency, single, 1).unwrap()).unwrap();
        assert!(clean.residual_sd < 1e-9);
    }

    #[test]
    fn odmr_pair_recovered_without_noise() {
        let c = consts();
        let (spec, truth) = odmr_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(1_000_000, 0).noiseless(), &c).unwrap();
        let fit = fit_odmr_pair(&t, &c).unwrap();
        let PhysicsTruth::PulsedOdmr { b0, theta, .. } = truth else { unreachable!() };
        let want = crate::hamiltonian::transition_frequencies(b0, theta, &c).unwrap();
        assert!((fit.pair.f_minus - want.f_minus).abs() < 1e-4);
        assert!((fit.pair.f_plus - want.f_plus).abs() < 1e-4);
    }

    #[test]
    fn wrong_axis_rejected() {
        let t = Trace::normalized((0..20).map(f64::from).collect(), XKind::PulseLength, vec![0.5; 20], 1).unwrap();
        assert!(matches!(fit_gaussian_peak(&t), Err(Error::InvalidTrace(_))));
    }
}
