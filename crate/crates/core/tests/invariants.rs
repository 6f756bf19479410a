use proptest::prelude::*;

use nvepr::constants::{mhz_to_angular, PhysicalConstants};
use nvepr::deer::{nv_epr_signal, TargetSpinModel};
use nvepr::hamiltonian::{invert_field, transition_frequencies};
use nvepr::synth::{deer_rabi_reference, synthesize, DetectorModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_inversion_round_trips(b0 in 5.0f64..80.0, theta_deg in 0.5f64..30.0) {
        let c = PhysicalConstants::default();
        let pair = transition_frequencies(b0, theta_deg.to_radians(), &c).unwrap();
        let est = invert_field(pair, (1.0, 1.0), &c).unwrap();
        prop_assert!((est.b0 - b0).abs() < 1e-4 * b0);
        prop_assert!((est.theta.to_degrees() - theta_deg).abs() < 1e-2);
    }

    #[test]
    fn deer_signal_stays_in_unit_interval(
        f in prop::collection::vec(0.1f64..5.0, 1..=5),
        t0 in 0.05f64..2.0,
        t in 0.0f64..3.0,
    ) {
        let m = TargetSpinModel::new(f.iter().map(|v| mhz_to_angular(*v)).collect(), t0).unwrap();
        let s = nv_epr_signal(&m, t);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn channels_non_negative(seed in any::<u64>()) {
        let (spec, truth) = deer_rabi_reference();
        let t = synthesize(&spec, &truth, &DetectorModel::new(10_000, seed), &PhysicalConstants::default()).unwrap();
        for values in t.channels().values() {
            prop_assert!(values.iter().all(|v| *v >= 0.0));
        }
    }
}
