//! NV-EPR forward models: dipolar couplings, DEER phase accumulation, the
//! configuration-averaged DEER-Rabi signal and the Gaussian DEER spectrum.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::PhysicalConstants;
use crate::error::{domain, Error, Result};

/// Largest spin count the brute-force configuration average will enumerate.
pub const BRUTEFORCE_CAP: usize = 20;
/// Largest number of coupled spins a [`TargetSpinModel`] may carry.
pub const MAX_TARGET_SPINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpin {
    /// NV–target distance, nm.
    pub r: f64,
    /// Angle between the NV axis and the NV–target vector, rad.
    pub theta_d: f64,
    /// Spin state label, ±1.
    pub sigma: i8,
}

impl TargetSpin {
    pub fn new(r: f64, theta_d: f64, sigma: i8) -> Result<Self> {
        let s = Self { r, theta_d, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return domain(format!("distance must be positive, got {}", self.r));
        }
        if !self.theta_d.is_finite() {
            return domain("angle must be finite");
        }
        if self.sigma != 1 && self.sigma != -1 {
            return domain(format!("spin label must be ±1, got {}", self.sigma));
        }
        Ok(())
    }
}

/// Couplings ω_j (rad/μs) sharing one Gaussian decay constant `t0` (μs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpinModel {
    pub omegas: Vec<f64>,
    pub t0: f64,
}

impl TargetSpinModel {
    pub fn new(omegas: Vec<f64>, t0: f64) -> Result<Self> {
        let m = Self { omegas, t0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omegas.len();
        if n == 0 || n > MAX_TARGET_SPINS {
            return Err(Error::TooManySpins { count: n, cap: MAX_TARGET_SPINS });
        }
        if self.omegas.iter().any(|w| !w.is_finite()) {
            return domain("couplings must be finite");
        }
        if !(self.t0 > 0.0) {
            return domain(format!("T0 must be positive, got {}", self.t0));
        }
        Ok(())
    }

    pub fn n_spins(&self) -> usize {
        self.omegas.len()
    }

    /// Couplings in ordinary MHz.
    pub fn couplings_mhz(&self) -> Vec<f64> {
        self.omegas.iter().map(|w| w / (2.0 * PI)).collect()
    }
}

/// Gaussian DEER line; `width` is the Gaussian sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeerSpectrumModel {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

impl DeerSpectrumModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return domain(format!("width must be positive, got {}", self.width));
        }
        if ![self.center, self.amplitude, self.baseline].iter().all(|v| v.is_finite()) {
            return domain("spectrum parameters must be finite");
        }
        Ok(())
    }

    pub fn fwhm(&self) -> f64 {
        self.width * (8.0 * 2f64.ln()).sqrt()
    }
}

/// Dipolar coupling ω (rad/μs) of an NV to a target spin.
pub fn coupling_from_geometry(spin: &TargetSpin, consts: &PhysicalConstants) -> Result<f64> {
    spin.validate()?;
    let c = spin.theta_d.cos();
    Ok(consts.dipolar_prefactor() * 2.0 * PI * (3.0 * c * c - 1.0) / spin.r.powi(3))
}

/// Phase picked up by the NV while the targets are flipped (resonant) or not.
pub fn deer_phase(omegas: &[f64], sigmas: &[i8], t_mw2: f64, resonant: bool) -> Result<f64> {
    if omegas.len() != sigmas.len() {
        return domain(format!("{} couplings but {} spin labels", omegas.len(), sigmas.len()));
    }
    if !resonant {
        return Ok(0.0);
    }
    Ok(omegas.iter().zip(sigmas).map(|(w, &s)| w * s as f64).sum::<f64>() * t_mw2)
}

/// Mean of cos(Σ ω_j σ_j t) over all 2^N spin configurations.
pub fn statistical_average_bruteforce(omegas: &[f64], t: f64) -> Result<f64> {
    let n = omegas.len();
    if n > BRUTEFORCE_CAP {
        return Err(Error::TooManySpins { count: n, cap: BRUTEFORCE_CAP });
    }
    let configs = 1u64 << n;
    let phase = |mask: u64| -> f64 {
        omegas.iter().enumerate().map(|(j, w)| if mask >> j & 1 == 1 { -w } else { *w }).sum::<f64>() * t
    };
    #[cfg(feature = "parallel")]
    let total: f64 = {
        use rayon::prelude::*;
        // Fixed-size blocks summed in order keep the result independent of scheduling.
        const BLOCK: u64 = 4096;
        let blocks = configs.div_ceil(BLOCK);
        let partial: Vec<f64> = (0..blocks)
            .into_par_iter()
            .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(configs)).map(|m| phase(m).cos()).sum())
            .collect();
        partial.iter().sum()
    };
    #[cfg(not(feature = "parallel"))]
    let total: f64 = (0..configs).map(|m| phase(m).cos()).sum();
    Ok(total / configs as f64)
}

/// DEER-Rabi intensity ½ + ½·exp(−(t/T₀)²)·Π cos(ω_j t).
pub fn nv_epr_signal(model: &TargetSpinModel, t_mw2: f64) -> f64 {
    let decay = (-(t_mw2 / model.t0).powi(2)).exp();
    let product: f64 = model.omegas.iter().map(|w| (w * t_mw2).cos()).product();
    0.5 + 0.5 * decay * product
}

pub fn nv_epr_curve(model: &TargetSpinModel, t: &[f64]) -> Result<Vec<f64>> {
    model.validate()?;
    if t.iter().any(|x| !(*x >= 0.0)) {
        return domain("pulse lengths must be non-negative");
    }
    Ok(t.iter().map(|&x| nv_epr_signal(model, x)).collect())
}

pub fn deer_spectrum(f: f64, m: &DeerSpectrumModel) -> f64 {
    m.baseline + m.amplitude * (-(f - m.center).powi(2) / (2.0 * m.width * m.width)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn magic_angle_zero() {
        let magic = (1.0f64 / 3.0).sqrt().acos();
        let w = coupling_from_geometry(&TargetSpin::new(3.0, magic, 1).unwrap(), &consts()).unwrap();
        assert!(w.abs() < 1e-12);
        let below = coupling_from_geometry(&TargetSpin::new(3.0, magic - 1e-3, 1).unwrap(), &consts()).unwrap();
        let above = coupling_from_geometry(&TargetSpin::new(3.0, magic + 1e-3, 1).unwrap(), &consts()).unwrap();
        assert!(below > 0.0 && above < 0.0);
    }

    #[test]
    fn on_axis_coupling_at_5nm() {
        let w = coupling_from_geometry(&TargetSpin::new(5.0, 0.0, 1).unwrap(), &consts()).unwrap();
        // μ0 μB² g² / (4π h) with g = 2.0049, h = 6.62607015e-34 J s,
        // μB/h = 13.9962 GHz/T, in MHz nm³.
        let h = 6.62607015e-34;
        let mu_b = 13.9962e9 * h;
        let g = 28.024 / 13.9962;
        let prefactor = 1e-7 * mu_b * mu_b * g * g / h * 1e27 / 1e6;
        let want = 2.0 * prefactor * 2.0 * PI / 125.0;
        assert!((prefactor - 52.04).abs() < 0.05, "{prefactor}");
        assert!((w - want).abs() < 1e-3 * want, "{w} vs {want}");
    }

    #[test]
    fn cubic_distance_law() {
        let c = consts();
        let a = coupling_from_geometry(&TargetSpin::new(2.0, 0.3, 1).unwrap(), &c).unwrap();
        let b = coupling_from_geometry(&TargetSpin::new(4.0, 0.3, 1).unwrap(), &c).unwrap();
        assert!((a / b - 8.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(TargetSpin::new(0.0, 0.0, 1).is_err());
        assert!(TargetSpin::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn phase_examples() {
        assert_eq!(deer_phase(&[3.0, 4.0], &[1, 1], 2.0, false).unwrap(), 0.0);
        assert_eq!(deer_phase(&[3.0], &[1], 2.0, true).unwrap(), 6.0);
        assert_eq!(deer_phase(&[3.0, 3.0], &[1, -1], 2.0, true).unwrap(), 0.0);
        assert!(deer_phase(&[3.0], &[1, 1], 2.0, true).is_err());
    }

    #[test]
    fn bruteforce_small_cases() {
        let (w1, w2, t) = (1.3, 0.4, 0.77);
        assert!((statistical_average_bruteforce(&[w1], t).unwrap() - (w1 * t).cos()).abs() < 1e-15);
        let two = statistical_average_bruteforce(&[w1, w2], t).unwrap();
        assert!((two - (w1 * t).cos() * (w2 * t).cos()).abs() < 1e-15);
        assert_eq!(statistical_average_bruteforce(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(statistical_average_bruteforce(&[], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn bruteforce_cap() {
        let w = vec![0.1; BRUTEFORCE_CAP + 1];
        assert!(matches!(statistical_average_bruteforce(&w, 1.0), Err(Error::TooManySpins { .. })));
    }

    #[test]
    fn bruteforce_at_cap_matches_product() {
        let w: Vec<f64> = (0..BRUTEFORCE_CAP).map(|i| 0.05 * (i + 1) as f64).collect();
        let t = 0.9;
        let got = statistical_average_bruteforce(&w, t).unwrap();
        let want: f64 = w.iter().map(|x| (x * t).cos()).product();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn signal_examples() {
        let m = TargetSpinModel::new(vec![2.0 * PI * 1.12, 2.0 * PI * 2.24], 0.34).unwrap();
        assert_eq!(nv_epr_signal(&m, 0.0), 1.0);
        let slow = TargetSpinModel::new(vec![PI], 1e12).unwrap();
        assert!(nv_epr_signal(&slow, 1.0).abs() < 1e-15);
        let curve = nv_epr_curve(&m, &[0.0, 0.1, 0.2, 0.5]).unwrap();
        assert!(curve.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(curve[3] < curve[0]);
    }

    #[test]
    fn model_spin_count_limits() {
        assert!(TargetSpinModel::new(vec![], 1.0).is_err());
        assert!(TargetSpinModel::new(vec![1.0; 6], 1.0).is_err());
        assert!(TargetSpinModel::new(vec![1.0; 5], 1.0).is_ok());
        assert!(TargetSpinModel::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn spectrum_peak_and_tail() {
        let m = DeerSpectrumModel { center: 914.7, width: 9.0, amplitude: 0.08, baseline: 0.3 };
        assert!((deer_spectrum(914.7, &m) - 0.38).abs() < 1e-15);
        for f in [914.7 - 45.0, 914.7 + 45.0] {
            assert!((deer_spectrum(f, &m) - 0.3).abs() < 1e-5 * 0.08);
        }
        assert!((m.fwhm() - 9.0 * 2.354820045).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn product_identity(w in prop::collection::vec(-20.0f64..20.0, 1..=10), t in 0.0f64..3.0) {
            let got = statistical_average_bruteforce(&w, t).unwrap();
            let want: f64 = w.iter().map(|x| (x * t).cos()).product();
            prop_assert!((got - want).abs() < 1e-12);
        }

        #[test]
        fn signal_in_unit_interval(w in prop::collection::vec(-20.0f64..20.0, 1..=5), t0 in 0.01f64..10.0, t in 0.0f64..5.0) {
            let m = TargetSpinModel::new(w, t0).unwrap();
            let v = nv_epr_signal(&m, t);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn phase_linear_in_time(w in prop::collection::vec(-20.0f64..20.0, 1..=5), a in 0.0f64..10.0, t in 0.0f64..5.0) {
            let s: Vec<i8> = (0..w.len()).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let lhs = deer_phase(&w, &s, a * t, true).unwrap();
            let rhs = a * deer_phase(&w, &s, t, true).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
