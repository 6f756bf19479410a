//! Electron spin echo envelope modulation under N-pulse CPMG decoupling.
//!
//! Closed-form modulation for a single I = ½ nucleus, the ¹³C bath filter
//! decoherence, the composed CPMG echo model, and an independent
//! density-matrix propagation used to validate the closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{mhz_to_angular, PhysicalConstants};
use crate::error::{domain, Error, Result};

/// Hyperfine tensor principal values (rad/μs) and the angle between the
/// electron-nuclear axis and the static field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineTensor {
    pub a_par: f64,
    pub a_perp: f64,
    pub theta_hf: f64,
}

/// Secular `A` and pseudo-secular `B` couplings in the lab frame.
pub fn project_hyperfine(t: &HyperfineTensor) -> (f64, f64) {
    let (s, c) = t.theta_hf.sin_cos();
    let a = t.a_par * c * c + t.a_perp * s * s;
    let b = (t.a_par - t.a_perp) * s * c;
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EseemNucleus {
    /// Secular coupling, rad/μs.
    pub a: f64,
    /// Pseudo-secular coupling, rad/μs.
    pub b: f64,
    /// Nuclear Larmor angular frequency, rad/μs.
    pub omega_i: f64,
    pub ms_alpha: f64,
    pub ms_beta: f64,
}

impl EseemNucleus {
    /// Nucleus probed on the m_S = 0 ↔ +1 transition.
    pub fn new(a: f64, b: f64, omega_i: f64) -> Self {
        Self { a, b, omega_i, ms_alpha: 0.0, ms_beta: 1.0 }
    }

    /// From couplings in ordinary MHz, a gyromagnetic ratio in MHz/mT and a field in mT.
    pub fn from_mhz(a_mhz: f64, b_mhz: f64, gamma_n: f64, b0: f64) -> Self {
        Self::new(mhz_to_angular(a_mhz), mhz_to_angular(b_mhz), mhz_to_angular(gamma_n * b0))
    }

    fn is_reduced(&self) -> bool {
        self.ms_alpha == 0.0 && self.ms_beta == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.omega_i, self.ms_alpha, self.ms_beta].iter().all(|v| v.is_finite()) {
            return domain("nucleus parameters must be finite");
        }
        if self.omega_i < 0.0 {
            return domain("nuclear Larmor frequency must be non-negative");
        }
        if self.ms_alpha == self.ms_beta {
            return domain("probed transition needs distinct m_S values");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EseemSpectrum {
    pub omega_alpha: f64,
    pub omega_beta: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub mu: f64,
    pub lambda: f64,
    pub k: f64,
}

fn branch_frequency(n: &EseemNucleus, ms: f64) -> f64 {
    (n.omega_i + ms * n.a).hypot(ms * n.b)
}

fn branch_angle(n: &EseemNucleus, ms: f64) -> f64 {
    // Quadrant-aware: the quantization axis may point below the equator when
    // ω_I + m_S·A < 0.
    (-ms * n.b).atan2(n.omega_i + ms * n.a)
}

pub fn eseem_spectrum(n: &EseemNucleus) -> Result<EseemSpectrum> {
    n.validate()?;
    let omega_alpha = branch_frequency(n, n.ms_alpha);
    let omega_beta = branch_frequency(n, n.ms_beta);
    let half = 0.5 * (branch_angle(n, n.ms_alpha) - branch_angle(n, n.ms_beta));
    let (mu, lambda) = (half.cos().powi(2), half.sin().powi(2));

    let k = if n.is_reduced() {
        if n.omega_i == 0.0 && n.a == 0.0 {
            return Err(Error::Degenerate("ω_I = 0 and A = 0".into()));
        }
        if omega_beta == 0.0 {
            return Err(Error::Degenerate("ω_β = 0".into()));
        }
        (n.b / omega_beta).powi(2)
    } else {
        let den = omega_alpha * omega_beta;
        if den == 0.0 {
            return Err(Error::Degenerate("ω_α·ω_β = 0".into()));
        }
        (n.b * n.omega_i * (n.ms_alpha - n.ms_beta) / den).powi(2)
    };

    Ok(EseemSpectrum {
        omega_alpha,
        omega_beta,
        omega_plus: omega_alpha + omega_beta,
        omega_minus: omega_alpha - omega_beta,
        mu,
        lambda,
        k,
    })
}

fn check_pulses(n_pulses: u32) -> Result<()> {
    if n_pulses == 0 || n_pulses % 2 == 1 {
        return domain(format!("CPMG needs an even, non-zero pulse count, got {n_pulses}"));
    }
    Ok(())
}

impl EseemSpectrum {
    /// Echo modulation V(τ) after an N-pulse CPMG train with inter-pulse spacing 2τ.
    pub fn modulation(&self, tau: f64, n_pulses: u32) -> f64 {
        let &EseemSpectrum { omega_alpha: wa, omega_beta: wb, omega_plus: wp, omega_minus: wm, mu, lambda, k } = self;
        if k == 0.0 {
            return 1.0;
        }
        let cos = |w: f64| (w * tau).cos();
        let c = (mu * cos(wp) + lambda * cos(wm)).clamp(-1.0, 1.0);
        let envelope = pulse_train_envelope(c, n_pulses);
        let bracket = -0.75 * k
            + 0.5 * k * (cos(wa) + cos(wb))
            + 0.25 * k * (cos(2.0 * wa) + cos(2.0 * wb))
            + 0.5 * k * (mu - lambda) * (cos(wp) - cos(wm))
            + 0.25 * k * mu * cos(2.0 * wp)
            + 0.25 * k * lambda * cos(2.0 * wm)
            - 0.5 * k * mu * (cos(wp + wa) + cos(wp + wb))
            - 0.5 * k * lambda * (cos(wm + wa) + cos(wm - wb));
        1.0 + envelope * bracket
    }
}

/// sin²(Nφ/4)/sin²(φ/2) with φ = 2·arccos(c), continued by its N²/4 limit
/// where sin(φ/2) vanishes.
fn pulse_train_envelope(c: f64, n_pulses: u32) -> f64 {
    let n = n_pulses as f64;
    let sin_half_sq = (1.0 - c * c).max(0.0);
    if sin_half_sq.sqrt() < 1e-6 {
        return n * n / 4.0;
    }
    let phi = 2.0 * c.acos();
    (n * phi / 4.0).sin().powi(2) / sin_half_sq
}

pub fn eseem_modulation(tau: f64, n_pulses: u32, nucleus: &EseemNucleus) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("τ must be non-negative, got {tau}"));
    }
    check_pulses(n_pulses)?;
    Ok(eseem_spectrum(nucleus)?.modulation(tau, n_pulses))
}

/// 2×2 complex matrix stored row-major.
type M2 = [[Complex64; 2]; 2];

fn m2_mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn m2_identity() -> M2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [[one, zero], [zero, one]]
}

/// exp(−i·t·(hx·Ix + hz·Iz)) for a spin ½.
fn nuclear_propagator(hx: f64, hz: f64, t: f64) -> M2 {
    let w = hx.hypot(hz);
    if w == 0.0 {
        return m2_identity();
    }
    let (s, c) = (0.5 * w * t).sin_cos();
    let (nx, nz) = (hx / w, hz / w);
    let i = Complex64::new(0.0, 1.0);
    [[Complex64::new(c, 0.0) - i * s * nz, -i * s * nx], [-i * s * nx, Complex64::new(c, 0.0) + i * s * nz]]
}

/// Echo modulation by explicit propagation of the nuclear state through the
/// ideal-π-pulse CPMG pattern τ–2τ–…–2τ–τ.
///
/// The two electron coherence branches see the branch Hamiltonians
/// H_m = (ω_I + m·A)·I_z + m·B·I_x, swapped at every π pulse; the echo is
/// Re Tr[U_a·U_b†]/2 for an unpolarized nucleus.
pub fn density_matrix_eseem_oracle(taus: &[f64], n_pulses: u32, n: &EseemNucleus) -> Result<Vec<f64>> {
    n.validate()?;
    check_pulses(n_pulses)?;
    let h = |ms: f64| (ms * n.b, n.omega_i + ms * n.a);
    let (ha, hb) = (h(n.ms_alpha), h(n.ms_beta));
    taus.iter()
        .map(|&tau| {
            if !(tau >= 0.0) {
                return domain(format!("τ must be non-negative, got {tau}"));
            }
            let mut ua = m2_identity();
            let mut ub = m2_identity();
            for seg in 0..=n_pulses {
                let dt = if seg == 0 || seg == n_pulses { tau } else { 2.0 * tau };
                let (first, second) = if seg % 2 == 0 { (ha, hb) } else { (hb, ha) };
                ua = m2_mul(&nuclear_propagator(first.0, first.1, dt), &ua);
                ub = m2_mul(&nuclear_propagator(second.0, second.1, dt), &ub);
            }
            // Tr[U_a U_b†]
            let mut tr = Complex64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    tr += ua[i][j] * ub[i][j].conj();
                }
            }
            Ok(0.5 * tr.re)
        })
        .collect()
}

/// Bath of weakly coupled nuclei seen through the pulse-sequence filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathModel {
    /// RMS bath field, μT.
    pub b_rms: f64,
    /// Bath nuclear Larmor angular frequency, rad/μs.
    pub omega_i: f64,
    pub n_pulses: u32,
}

impl BathModel {
    /// Natural-abundance ¹³C bath at field `b0` (mT).
    pub fn c13(b_rms: f64, b0: f64, n_pulses: u32, consts: &PhysicalConstants) -> Self {
        Self { b_rms, omega_i: mhz_to_angular(consts.gamma_c13 * b0), n_pulses }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_rms >= 0.0 && self.b_rms.is_finite()) {
            return domain("b_rms must be non-negative");
        }
        if !(self.omega_i >= 0.0 && self.omega_i.is_finite()) {
            return domain("bath Larmor frequency must be non-negative");
        }
        if self.n_pulses < 1 {
            return domain("bath filter needs at least one pulse");
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Filter functional K(Nτ) = (Nτ)²·sinc²((Nτ/2)(ω_I − π/τ)).
pub fn filter_functional(tau: f64, bath: &BathModel) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let t = bath.n_pulses as f64 * tau;
    t * t * sinc(0.5 * t * (bath.omega_i - PI / tau)).powi(2)
}

/// C(τ) = exp(−(2/π²)·γ_e²·B_RMS²·K(Nτ)); `gamma_e` in rad/(μs·μT).
pub fn bath_decoherence(tau: f64, bath: &BathModel, gamma_e: f64) -> Result<f64> {
    bath.validate()?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("τ must be non-negative, got {tau}"));
    }
    let k = filter_functional(tau, bath);
    Ok((-(2.0 / (PI * PI)) * gamma_e * gamma_e * bath.b_rms * bath.b_rms * k).exp())
}

/// Coherence of the CPMG echo at total evolution times `t_total` (μs):
/// exp(−t/T₂)·C(τ)·Π_i V_i(τ) with τ = t/(2N).
pub fn cpmg_echo_model(
    t_total: &[f64],
    nuclei: &[EseemNucleus],
    bath: &BathModel,
    t2: f64,
    consts: &PhysicalConstants,
) -> Result<Vec<f64>> {
    bath.validate()?;
    check_pulses(bath.n_pulses)?;
    if !(t2 > 0.0) {
        return domain(format!("T2 must be positive, got {t2}"));
    }
    if t_total.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidGrid("evolution times must be finite and non-negative".into()));
    }
    if t_total.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("evolution times must be strictly increasing".into()));
    }
    let spectra = nuclei.iter().map(eseem_spectrum).collect::<Result<Vec<_>>>()?;
    let gamma_e = consts.gamma_nv_angular_per_ut();
    let two_n = 2.0 * bath.n_pulses as f64;
    t_total
        .iter()
        .map(|&t| {
            let tau = t / two_n;
            let v: f64 = spectra.iter().map(|s| s.modulation(tau, bath.n_pulses)).product();
            Ok((-t / t2).exp() * bath_decoherence(tau, bath, gamma_e)? * v)
        })
        .collect()
}

/// Bright-state population 0.5·(1 + coherence).
pub fn coherence_to_population(coherence: f64) -> f64 {
    0.5 * (1.0 + coherence)
}

/// One row of the hyperfine fixture table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineEntry {
    pub label: String,
    /// Secular coupling, ordinary MHz.
    pub a_mhz: f64,
    /// Pseudo-secular coupling, ordinary MHz.
    pub b_mhz: f64,
    pub source: String,
}

impl HyperfineEntry {
    /// Nuclear gyromagnetic ratio for the entry's species, from its label prefix.
    pub fn gamma_n(&self, consts: &PhysicalConstants) -> Result<f64> {
        if self.label.starts_with("c13") {
            Ok(consts.gamma_c13)
        } else if self.label.starts_with("n14") {
            Ok(consts.gamma_n14)
        } else {
            domain(format!("unknown nuclear species in label `{}`", self.label))
        }
    }

    pub fn nucleus(&self, b0: f64, consts: &PhysicalConstants) -> Result<EseemNucleus> {
        Ok(EseemNucleus::from_mhz(self.a_mhz, self.b_mhz, self.gamma_n(consts)?, b0))
    }
}

pub const HYPERFINE_TABLE: &str = include_str!("../data/hyperfine_table.csv");

pub fn parse_hyperfine_table(text: &str) -> Result<Vec<HyperfineEntry>> {
    let mut rows = Vec::new();
    let mut header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header {
            header = true;
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.splitn(4, ',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err("expected label,a,b,source".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        rows.push(HyperfineEntry {
            label: f[0].to_string(),
            a_mhz: num(f[1])?,
            b_mhz: num(f[2])?,
            source: f[3].to_string(),
        });
    }
    Ok(rows)
}

/// The bundled hyperfine fixture table.
pub fn hyperfine_table() -> Vec<HyperfineEntry> {
    parse_hyperfine_table(HYPERFINE_TABLE).expect("bundled hyperfine table parses")
}

pub fn hyperfine_entry(label: &str) -> Option<HyperfineEntry> {
    hyperfine_table().into_iter().find(|e| e.label == label)
}
