//! Reference experiments: sweep grids, ground truths and repetition counts
//! for a shallow NV at 32.59 mT with a few nearby electron spins.

use std::f64::consts::PI;

use crate::constants::{mhz_to_angular, PhysicalConstants};
use crate::deer::{DeerSpectrumModel, TargetSpinModel};
use crate::eseem::{hyperfine_entry, BathModel};

use super::{PhysicsTruth, SequenceKind, SequenceSpec};

/// mT
pub const REFERENCE_B0: f64 = 32.59;
/// rad
pub const REFERENCE_THETA: f64 = 3.5 * PI / 180.0;
pub const DEER_RABI_REPETITIONS: u64 = 1_260_000;
pub const DEER_SPECTRUM_REPETITIONS: u64 = 1_325_000;
pub const NULL_SPECTRUM_REPETITIONS: u64 = 1_330_000;
/// Reported DEER line FWHM, MHz.
pub const REFERENCE_DEER_FWHM: f64 = 9.0;
pub const REFERENCE_DEER_CENTER: f64 = 914.7;

/// Evenly spaced grid `start, start + step, …` up to and including `stop`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

pub fn odmr_reference() -> (SequenceSpec, PhysicsTruth) {
    let mut grid = linear_grid(1930.0, 1990.0, 0.5);
    grid.extend(linear_grid(3750.0, 3815.0, 0.5));
    let truth = PhysicsTruth::PulsedOdmr { b0: REFERENCE_B0, theta: REFERENCE_THETA, depth: 1.0, linewidth: None };
    (SequenceSpec::new(SequenceKind::PulsedOdmr, grid), truth)
}

pub fn rabi_reference() -> (SequenceSpec, PhysicsTruth) {
    let spec = SequenceSpec::new(SequenceKind::Rabi, linear_grid(0.0, 1.5, 0.004));
    (spec, PhysicsTruth::Rabi { f: 5.50, t0: 0.67 })
}

/// CPMG-8 echo with the near-site ¹³C, a 4 μT ¹³C bath and T₂ = 38 μs.
pub fn cpmg_reference(consts: &PhysicalConstants) -> (SequenceSpec, PhysicsTruth) {
    let near = hyperfine_entry("c13-near")
        .and_then(|e| e.nucleus(REFERENCE_B0, consts).ok())
        .expect("bundled table has the near-site carbon");
    let truth = PhysicsTruth::Cpmg { nuclei: vec![near], bath: BathModel::c13(4.0, REFERENCE_B0, 8, consts), t2: 38.0 };
    (SequenceSpec::new(SequenceKind::Cpmg8, linear_grid(0.5, 60.0, 0.1)), truth)
}

fn deer_spectrum_spec() -> SequenceSpec {
    SequenceSpec::new(SequenceKind::CpmgDeer, linear_grid(880.0, 950.0, 0.5))
}

/// Bright-state population dip at the target resonance; the SIG2 − SIG1
/// difference shows it as a peak of height 0.12 on a 0.3 baseline.
pub fn deer_spectrum_reference() -> (SequenceSpec, PhysicsTruth) {
    let spectrum = DeerSpectrumModel {
        center: REFERENCE_DEER_CENTER,
        width: REFERENCE_DEER_FWHM / (8.0 * 2f64.ln()).sqrt(),
        amplitude: -0.06,
        baseline: 0.35,
    };
    (deer_spectrum_spec(), PhysicsTruth::CpmgDeer { spectrum })
}

/// A CPMG-DEER sweep over an NV with no resonant targets.
pub fn null_spectrum_reference() -> (SequenceSpec, PhysicsTruth) {
    let spectrum = DeerSpectrumModel { center: REFERENCE_DEER_CENTER, width: 1.0, amplitude: 0.0, baseline: 0.35 };
    (deer_spectrum_spec(), PhysicsTruth::CpmgDeer { spectrum })
}

/// Two coupled electrons at 2π×(1.12, 2.24) MHz with T₀ = 0.34 μs.
pub fn deer_rabi_reference() -> (SequenceSpec, PhysicsTruth) {
    let model = TargetSpinModel { omegas: vec![mhz_to_angular(1.12), mhz_to_angular(2.24)], t0: 0.34 };
    let spec = SequenceSpec::new(SequenceKind::DeerRabi, linear_grid(0.0, 1.5, 0.01));
    (spec, PhysicsTruth::DeerRabi { model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = linear_grid(880.0, 950.0, 0.5);
        assert_eq!(g.len(), 141);
        assert_eq!(g[0], 880.0);
        assert!((g[140] - 950.0).abs() < 1e-9);
        assert_eq!(linear_grid(0.0, 1.5, 0.01).len(), 151);
    }

    #[test]
    fn presets_validate() {
        let c = PhysicalConstants::default();
        for (spec, truth) in [
            odmr_reference(),
            rabi_reference(),
            cpmg_reference(&c),
            deer_spectrum_reference(),
            null_spectrum_reference(),
            deer_rabi_reference(),
        ] {
            spec.validate().unwrap();
            assert_eq!(spec.kind, truth.kind());
        }
    }
}
