//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function returning
//! `Result<_, String>`, so the logic is testable without a JS host.

use wasm_bindgen::prelude::*;

use nvepr::constants::{mhz_to_angular, PhysicalConstants};
use nvepr::deer::{nv_epr_curve, TargetSpinModel};
use nvepr::eseem::{bath_decoherence, eseem_spectrum, BathModel, EseemNucleus};
use nvepr::hamiltonian::{invert_field, transition_frequencies, TransitionPair};

fn grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(2..=100_000).contains(&points) {
        return Err(format!("points must be in 2..=100000, got {points}"));
    }
    if !(start.is_finite() && stop.is_finite() && stop > start) {
        return Err(format!("need a finite range with stop > start, got [{start}, {stop}]"));
    }
    Ok((0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect())
}

/// Flat `[b, f_minus, f_plus, ...]` triples over a field sweep.
pub fn transition_table(theta_deg: f64, b_min: f64, b_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let c = PhysicalConstants::default();
    let mut out = Vec::with_capacity(3 * points);
    for b in grid(b_min, b_max, points)? {
        let p = transition_frequencies(b, theta_deg.to_radians(), &c).map_err(|e| e.to_string())?;
        out.extend([b, p.f_minus, p.f_plus]);
    }
    Ok(out)
}

/// `[b0_mt, theta_deg, b0_err_mt, theta_err_deg]`.
pub fn field_from_transitions(f_minus: f64, f_plus: f64, err_minus: f64, err_plus: f64) -> Result<Vec<f64>, String> {
    let c = PhysicalConstants::default();
    let pair = TransitionPair::new(f_minus, f_plus).map_err(|e| e.to_string())?;
    let est = invert_field(pair, (err_minus, err_plus), &c).map_err(|e| e.to_string())?;
    Ok(vec![est.b0, est.theta.to_degrees(), est.b0_err, est.theta_err.to_degrees()])
}

/// DEER-Rabi population on `points` pulse lengths in `[0, t_max]` μs.
pub fn deer_rabi_values(couplings_mhz: &[f64], t0: f64, t_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let model = TargetSpinModel::new(couplings_mhz.iter().map(|f| mhz_to_angular(*f)).collect(), t0)
        .map_err(|e| e.to_string())?;
    nv_epr_curve(&model, &grid(0.0, t_max, points)?).map_err(|e| e.to_string())
}

/// Flat `[tau, modulation, bath, ...]` triples for one ¹³C nucleus (A, B in MHz).
pub fn eseem_values(
    a_mhz: f64,
    b_mhz: f64,
    b0: f64,
    b_rms: f64,
    n_pulses: u32,
    tau_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let c = PhysicalConstants::default();
    let nucleus = EseemNucleus::from_mhz(a_mhz, b_mhz, c.gamma_c13, b0);
    let spectrum = eseem_spectrum(&nucleus).map_err(|e| e.to_string())?;
    let bath = BathModel::c13(b_rms, b0, n_pulses, &c);
    if n_pulses == 0 || n_pulses % 2 == 1 {
        return Err(format!("pulse count must be even and non-zero, got {n_pulses}"));
    }
    let mut out = Vec::with_capacity(3 * points);
    for tau in grid(0.0, tau_max, points)? {
        let bath_c = bath_decoherence(tau, &bath, c.gamma_nv_angular_per_ut()).map_err(|e| e.to_string())?;
        out.extend([tau, spectrum.modulation(tau, n_pulses), bath_c]);
    }
    Ok(out)
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = transitionTable)]
pub fn transition_table_js(theta_deg: f64, b_min: f64, b_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(transition_table(theta_deg, b_min, b_max, points))
}

#[wasm_bindgen(js_name = invertField)]
pub fn invert_field_js(f_minus: f64, f_plus: f64, err_minus: f64, err_plus: f64) -> Result<Vec<f64>, JsError> {
    js(field_from_transitions(f_minus, f_plus, err_minus, err_plus))
}

#[wasm_bindgen(js_name = deerRabiCurve)]
pub fn deer_rabi_curve_js(couplings_mhz: Vec<f64>, t0: f64, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(deer_rabi_values(&couplings_mhz, t0, t_max, points))
}

#[wasm_bindgen(js_name = eseemCurve)]
pub fn eseem_curve_js(
    a_mhz: f64,
    b_mhz: f64,
    b0: f64,
    b_rms: f64,
    n_pulses: u32,
    tau_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    js(eseem_values(a_mhz, b_mhz, b0, b_rms, n_pulses, tau_max, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tilt_table_is_linear() {
        let t = transition_table(0.0, 10.0, 20.0, 3).unwrap();
        assert_eq!(t.len(), 9);
        assert!((t[4] - (2870.0 - 28.024 * 15.0)).abs() < 1e-9);
        assert!((t[5] - (2870.0 + 28.024 * 15.0)).abs() < 1e-9);
    }

    #[test]
    fn invert_reference_pair() {
        let v = field_from_transitions(1960.0, 3783.39, 6.78, 3.39).unwrap();
        assert!((v[0] - 32.59).abs() < 0.05);
        assert!((v[1] - 3.5).abs() < 1.0);
        assert!(field_from_transitions(3000.0, 2000.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn deer_rabi_starts_at_one() {
        let v = deer_rabi_values(&[1.12, 2.24], 0.34, 1.5, 151).unwrap();
        assert_eq!(v.len(), 151);
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(deer_rabi_values(&[], 0.34, 1.5, 10).is_err());
        assert!(deer_rabi_values(&[1.0], 0.34, 1.5, 1).is_err());
    }

    #[test]
    fn eseem_has_unit_start() {
        let v = eseem_values(0.314, 2.827, 32.59, 4.0, 8, 5.0, 11).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12, "{:?}", &v[..3]);
        assert!(eseem_values(0.314, 2.827, 32.59, 4.0, 3, 5.0, 11).is_err());
    }
}
