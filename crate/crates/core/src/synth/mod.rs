//! Photon-counting Monte-Carlo synthesis of pulsed NV experiments.
//!
//! Every grid point and channel draws from its own ChaCha stream derived from
//! `(seed, point, channel)`, so output is identical regardless of evaluation
//! order or thread count.

mod presets;

pub use presets::*;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::deer::{deer_spectrum, nv_epr_curve, DeerSpectrumModel, TargetSpinModel};
use crate::error::{domain, Error, Result};
use crate::eseem::{coherence_to_population, cpmg_echo_model, BathModel, EseemNucleus};
use crate::hamiltonian::transition_frequencies;
use crate::trace::{Trace, XKind};

/// Fluorescence contrast between |0⟩ and |±1⟩ used for the default detector.
pub const DEFAULT_CONTRAST: f64 = 0.166;
/// Mean photons per readout from |0⟩ for the default detector.
pub const DEFAULT_BRIGHT_COUNTS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// `n_avg` repetitions at every grid point and channel.
    PerPoint,
    /// `n_avg` repetitions shared evenly across the grid.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub counts_bright: f64,
    pub counts_dark: f64,
    pub n_avg: u64,
    pub seed: u64,
    pub averaging: Averaging,
    /// Emit the expected counts instead of sampling them.
    pub noiseless: bool,
}

impl DetectorModel {
    pub fn new(n_avg: u64, seed: u64) -> Self {
        Self {
            counts_bright: DEFAULT_BRIGHT_COUNTS,
            counts_dark: DEFAULT_BRIGHT_COUNTS * (1.0 - DEFAULT_CONTRAST),
            n_avg,
            seed,
            averaging: Averaging::PerPoint,
            noiseless: false,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn contrast(&self) -> f64 {
        (self.counts_bright - self.counts_dark) / self.counts_bright
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.counts_dark >= 0.0 && self.counts_bright > self.counts_dark && self.counts_bright.is_finite()) {
            return domain("detector needs counts_bright > counts_dark >= 0");
        }
        if self.n_avg == 0 {
            return domain("n_avg must be at least 1");
        }
        Ok(())
    }

    fn repetitions_per_point(&self, points: usize) -> Result<u64> {
        match self.averaging {
            Averaging::PerPoint => Ok(self.n_avg),
            Averaging::Total => {
                let per = self.n_avg / points as u64;
                if per == 0 {
                    return domain(format!("{} repetitions cannot cover {points} grid points", self.n_avg));
                }
                Ok(per)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    PulsedOdmr,
    Rabi,
    Cpmg8,
    CpmgDeer,
    DeerRabi,
}

impl SequenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceKind::PulsedOdmr => "pulsed-odmr",
            SequenceKind::Rabi => "rabi",
            SequenceKind::Cpmg8 => "cpmg8",
            SequenceKind::CpmgDeer => "cpmg-deer",
            SequenceKind::DeerRabi => "deer-rabi",
        }
    }

    pub fn x_kind(self) -> XKind {
        match self {
            SequenceKind::PulsedOdmr | SequenceKind::CpmgDeer => XKind::Frequency,
            SequenceKind::Rabi | SequenceKind::DeerRabi => XKind::PulseLength,
            SequenceKind::Cpmg8 => XKind::EvolutionTime,
        }
    }

    /// Echo sequences read out both projections (SIG1 with π/2, SIG2 with 3π/2).
    pub fn dual_projection(self) -> bool {
        matches!(self, SequenceKind::Cpmg8 | SequenceKind::CpmgDeer)
    }
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SequenceKind::PulsedOdmr,
            SequenceKind::Rabi,
            SequenceKind::Cpmg8,
            SequenceKind::CpmgDeer,
            SequenceKind::DeerRabi,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::InvalidProblem(format!("unknown sequence kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    /// Swept values: MHz, or μs for pulse lengths and evolution times.
    pub grid: Vec<f64>,
    /// Half inter-pulse spacing τ, μs (echo sequences).
    pub tau: f64,
    pub n_pulses: u32,
    /// MW1 π-pulse length, ns.
    pub pi_pulse_ns: f64,
}

impl SequenceSpec {
    pub const DEFAULT_PI_PULSE_NS: f64 = 92.0;

    pub fn new(kind: SequenceKind, grid: Vec<f64>) -> Self {
        Self { kind, grid, tau: 1.28, n_pulses: 8, pi_pulse_ns: Self::DEFAULT_PI_PULSE_NS }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidGrid("empty sweep grid".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sweep value".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("sweep grid must be strictly increasing".into()));
        }
        if !(self.tau > 0.0 && self.pi_pulse_ns > 0.0) {
            return domain("tau and pulse lengths must be positive");
        }
        match self.kind {
            SequenceKind::Cpmg8 | SequenceKind::CpmgDeer if self.n_pulses != 8 => {
                domain(format!("{} uses 8 refocusing pulses, got {}", self.kind.as_str(), self.n_pulses))
            }
            SequenceKind::Rabi | SequenceKind::DeerRabi | SequenceKind::Cpmg8 if self.grid[0] < 0.0 => {
                Err(Error::InvalidGrid("times must be non-negative".into()))
            }
            SequenceKind::DeerRabi if self.grid[self.grid.len() - 1] > 2.0 * self.tau => {
                Err(Error::InvalidGrid(format!(
                    "MW2 pulses up to {} μs do not fit in a 2τ = {} μs window",
                    self.grid[self.grid.len() - 1],
                    2.0 * self.tau
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth for one experiment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhysicsTruth {
    PulsedOdmr {
        /// mT
        b0: f64,
        /// rad
        theta: f64,
        /// Fraction of population transferred at line center.
        depth: f64,
        /// Line FWHM in MHz; defaults to the π-pulse Fourier width.
        linewidth: Option<f64>,
    },
    Rabi {
        /// MHz
        f: f64,
        /// μs
        t0: f64,
    },
    #[serde(rename = "cpmg8")]
    Cpmg {
        nuclei: Vec<EseemNucleus>,
        bath: BathModel,
        /// μs
        t2: f64,
    },
    CpmgDeer {
        /// Bright-state population versus MW2 frequency.
        spectrum: DeerSpectrumModel,
    },
    DeerRabi {
        model: TargetSpinModel,
    },
}

impl PhysicsTruth {
    pub fn kind(&self) -> SequenceKind {
        match self {
            PhysicsTruth::PulsedOdmr { .. } => SequenceKind::PulsedOdmr,
            PhysicsTruth::Rabi { .. } => SequenceKind::Rabi,
            PhysicsTruth::Cpmg { .. } => SequenceKind::Cpmg8,
            PhysicsTruth::CpmgDeer { .. } => SequenceKind::CpmgDeer,
            PhysicsTruth::DeerRabi { .. } => SequenceKind::DeerRabi,
        }
    }
}

fn gaussian(x: f64, center: f64, sigma: f64) -> f64 {
    (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp()
}

/// Noise-free bright-state population at each grid point.
pub fn model_values(spec: &SequenceSpec, truth: &PhysicsTruth, consts: &PhysicalConstants) -> Result<Vec<f64>> {
    spec.validate()?;
    if truth.kind() != spec.kind {
        return Err(Error::KindMismatch { sequence: spec.kind.as_str().into(), truth: truth.kind().as_str().into() });
    }
    let g = &spec.grid;
    let values = match truth {
        PhysicsTruth::PulsedOdmr { b0, theta, depth, linewidth } => {
            if !(0.0..=1.0).contains(depth) {
                return domain("ODMR depth must lie in [0, 1]");
            }
            let pair = transition_frequencies(*b0, *theta, consts)?;
            let fwhm = linewidth.unwrap_or_else(|| pulse_limited_fwhm(spec.pi_pulse_ns));
            if !(fwhm > 0.0) {
                return domain("ODMR linewidth must be positive");
            }
            let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
            g.iter()
                .map(|&f| {
                    let dip = gaussian(f, pair.f_minus, sigma) + gaussian(f, pair.f_plus, sigma);
                    1.0 - depth * dip.min(1.0)
                })
                .collect()
        }
        PhysicsTruth::Rabi { f, t0 } => {
            if !(*t0 > 0.0 && f.is_finite()) {
                return domain("Rabi truth needs finite f and T0 > 0");
            }
            g.iter().map(|&t| 0.5 * (1.0 + (-(t / t0).powi(2)).exp() * (2.0 * PI * f * t).cos())).collect()
        }
        PhysicsTruth::Cpmg { nuclei, bath, t2 } => {
            if bath.n_pulses != spec.n_pulses {
                return domain("bath filter and sequence disagree on the pulse count");
            }
            cpmg_echo_model(g, nuclei, bath, *t2, consts)?.into_iter().map(coherence_to_population).collect()
        }
        PhysicsTruth::CpmgDeer { spectrum } => {
            spectrum.validate()?;
            g.iter().map(|&f| deer_spectrum(f, spectrum)).collect()
        }
        PhysicsTruth::DeerRabi { model } => nv_epr_curve(model, g)?,
    };
    if let Some(i) = values.iter().position(|v: &f64| !(-1e-12..=1.0 + 1e-12).contains(v)) {
        return domain(format!("population {} at grid index {i} is outside [0, 1]", values[i]));
    }
    Ok(values)
}

/// Independent RNG for one (grid point, channel) cell.
pub fn cell_rng(seed: u64, point: usize, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((point as u64) << 4 | channel as u64);
    rng
}

fn sample_mean_counts(mean: f64, reps: u64, rng: &mut ChaCha8Rng) -> f64 {
    let lambda = mean * reps as f64;
    if lambda <= 0.0 {
        return 0.0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive finite rate").sample(rng);
    draw / reps as f64
}

/// Synthesize averaged photon counts per readout for every channel.
pub fn synthesize(
    spec: &SequenceSpec,
    truth: &PhysicsTruth,
    det: &DetectorModel,
    consts: &PhysicalConstants,
) -> Result<Trace> {
    det.validate()?;
    let m = model_values(spec, truth, consts)?;
    let reps = det.repetitions_per_point(m.len())?;
    let (bright, dark) = (det.counts_bright, det.counts_dark);
    let names: &[&str] =
        if spec.kind.dual_projection() { &["SIG1", "SIG2", "REF1", "REF2"] } else { &["SIG", "REF1", "REF2"] };
    let expected = |name: &str, v: f64| match name {
        "SIG" | "SIG1" => dark + (bright - dark) * v,
        "SIG2" => dark + (bright - dark) * (1.0 - v),
        "REF1" => bright,
        _ => dark,
    };
    let point = |i: usize| -> Vec<f64> {
        names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let mean = expected(name, m[i].clamp(0.0, 1.0));
                if det.noiseless {
                    mean
                } else {
                    sample_mean_counts(mean, reps, &mut cell_rng(det.seed, i, c))
                }
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..m.len()).into_par_iter().map(point).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..m.len()).map(point).collect();

    let mut channels = BTreeMap::new();
    for (c, name) in names.iter().enumerate() {
        channels.insert(name.to_string(), rows.iter().map(|r| r[c]).collect());
    }
    Trace::new(spec.grid.clone(), spec.kind.x_kind(), channels, reps)
}

/// One-sigma shot noise of `REF1 − REF2` for counts averaged over `n_avg` readouts.
pub fn reference_noise_floor(ref1: &[f64], ref2: &[f64], n_avg: u64) -> f64 {
    if ref1.is_empty() || n_avg == 0 {
        return 0.0;
    }
    let n = ref1.len().min(ref2.len()).max(1) as f64;
    let mean_sum = ref1.iter().zip(ref2).map(|(a, b)| (a + b).max(0.0)).sum::<f64>() / n;
    (mean_sum / n_avg as f64).sqrt()
}

/// (sig − ref2)/(ref1 − ref2) elementwise, rejecting gaps at or below `floor`.
pub fn normalize_channels_with_floor(sig: &[f64], ref1: &[f64], ref2: &[f64], floor: f64) -> Result<Vec<f64>> {
    if sig.len() != ref1.len() || sig.len() != ref2.len() {
        return Err(Error::InvalidTrace(format!(
            "channel lengths differ: {} / {} / {}",
            sig.len(),
            ref1.len(),
            ref2.len()
        )));
    }
    sig.iter()
        .zip(ref1.iter().zip(ref2))
        .enumerate()
        .map(|(index, (s, (r1, r2)))| {
            let gap = r1 - r2;
            if !(gap.abs() > floor) || gap == 0.0 {
                return Err(Error::DegenerateReference { index, gap });
            }
            Ok((s - r2) / gap)
        })
        .collect()
}

/// (sig − ref2)/(ref1 − ref2) elementwise.
pub fn normalize_channels(sig: &[f64], ref1: &[f64], ref2: &[f64]) -> Result<Vec<f64>> {
    let scale = ref1.iter().chain(ref2).fold(0.0f64, |m, v| m.max(v.abs()));
    normalize_channels_with_floor(sig, ref1, ref2, 1e-12 * scale)
}

/// FWHM of the excitation profile of a rectangular π pulse, MHz.
pub fn pulse_limited_fwhm(pi_pulse_ns: f64) -> f64 {
    0.8e3 / pi_pulse_ns
}

/// Peak amplitude over residual scatter of a single-Gaussian fit to the
/// normalized difference signal, with the line no narrower than the
/// excitation profile of the default π pulse. Infinite for a noise-free peak.
pub fn snr_estimate(trace: &Trace) -> Result<f64> {
    snr_estimate_with(trace, SequenceSpec::DEFAULT_PI_PULSE_NS)
}

pub fn snr_estimate_with(trace: &Trace, pi_pulse_ns: f64) -> Result<f64> {
    if !(pi_pulse_ns > 0.0) {
        return Err(Error::Domain(format!("pi pulse length must be positive, got {pi_pulse_ns}")));
    }
    let x = trace.x();
    let step = if x.len() > 1 { (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64 } else { 1.0 };
    let sigma = pulse_limited_fwhm(pi_pulse_ns) / (8.0 * 2f64.ln()).sqrt();
    let opts = crate::fitting::PeakOptions { min_width_steps: sigma / step, ..Default::default() };
    let peak = crate::fitting::gaussian_peak_raw(trace, &opts)?;
    let amp = peak.model.amplitude.abs();
    if peak.residual_sd == 0.0 {
        return Ok(if amp > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(amp / peak.residual_sd)
}
