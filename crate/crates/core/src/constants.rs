//! Physical constants and unit conversions.
//!
//! Canonical units throughout the crate: mT, MHz, μs, nm and radians.
//! Model evaluation uses angular frequency in rad/μs; files and the CLI use
//! ordinary MHz.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Vacuum permeability over 4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;
/// Planck constant, J·s.
pub const PLANCK_H: f64 = 6.626_070_15e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// NV gyromagnetic ratio, MHz/mT.
    pub gamma_nv: f64,
    /// NV zero-field splitting D, MHz.
    pub zero_field_d: f64,
    /// ¹³C nuclear gyromagnetic ratio, MHz/mT.
    pub gamma_c13: f64,
    /// ¹⁴N nuclear gyromagnetic ratio, MHz/mT.
    pub gamma_n14: f64,
    /// Bohr magneton over Planck constant, MHz/mT.
    pub mu_b_over_h: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_nv: 28.024,
            zero_field_d: 2870.0,
            gamma_c13: 0.010_708,
            gamma_n14: 0.003_077,
            mu_b_over_h: 13.9962,
        }
    }
}

impl PhysicalConstants {
    /// Effective electron g-factor implied by `gamma_nv`.
    pub fn g_nv(&self) -> f64 {
        self.gamma_nv / self.mu_b_over_h
    }

    /// μ₀ μ_B² g₁ g₂ / (4π h) in MHz·nm³.
    pub fn dipolar_prefactor_for(&self, g1: f64, g2: f64) -> f64 {
        // μ_B/h in Hz/T, then μ_B = (μ_B/h)·h in J/T.
        let mu_b_over_h_hz_per_t = self.mu_b_over_h * 1e9;
        let mu_b = mu_b_over_h_hz_per_t * PLANCK_H;
        // Hz·m³ -> MHz·nm³
        MU0_OVER_4PI * mu_b * mu_b_over_h_hz_per_t * g1 * g2 * 1e27 * 1e-6
    }

    /// Dipolar prefactor for two electrons with the NV g-factor, MHz·nm³.
    pub fn dipolar_prefactor(&self) -> f64 {
        let g = self.g_nv();
        self.dipolar_prefactor_for(g, g)
    }

    /// NV gyromagnetic ratio in rad/(μs·μT), the unit used by the bath filter model.
    pub fn gamma_nv_angular_per_ut(&self) -> f64 {
        mhz_to_angular(self.gamma_nv) * 1e-3
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = [self.gamma_nv, self.zero_field_d, self.gamma_c13, self.gamma_n14, self.mu_b_over_h];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return crate::error::domain("physical constants must be finite and positive");
        }
        let g = self.g_nv();
        if !(2.000..=2.005).contains(&g) {
            return crate::error::domain(format!("gamma_nv/mu_b_over_h = {g} is not an electron g-factor"));
        }
        Ok(())
    }
}

/// Ordinary frequency (MHz) to angular frequency (rad/μs).
#[inline]
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz
}

/// Angular frequency (rad/μs) to ordinary frequency (MHz).
#[inline]
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}
