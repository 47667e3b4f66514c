//! Monte Carlo properties of the measured mismatch intervals.

use afdm::experiments::SimScenario;
use afdm::phasefn::{PhaseFunction, SearchAxis, DEFAULT_KAPPA};
use afdm::security::{measure_mismatch_interval, system_bound, CrossingStatus, MismatchSweepSpec};

fn log_grid() -> Vec<f64> {
    (0..=60).map(|i| 10f64.powf(-9.0 + i as f64 / 10.0)).collect()
}

fn delta_star(n: usize, phase: PhaseFunction, axis: SearchAxis) -> f64 {
    let scenario = SimScenario::four_tap(n, phase).unwrap().with_seed(99);
    let spec = MismatchSweepSpec {
        trials: 4000,
        ..MismatchSweepSpec::new(axis, log_grid())
    };
    let m = measure_mismatch_interval(&scenario, &spec).unwrap();
    assert_eq!(m.crossing.status, CrossingStatus::Interpolated);
    m.delta_star()
}

#[test]
fn kappa_interval_scales_like_conventional_c2() {
    let phase = PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 1.0);
    let ratio = delta_star(32, phase, SearchAxis::Kappa) / delta_star(64, phase, SearchAxis::Kappa);
    assert!((1.0..=16.0).contains(&ratio), "kappa interval ratio {ratio}");
}

#[test]
fn measured_interval_within_a_decade_of_bound() {
    for phase in [
        PhaseFunction::conventional_scaled(0.2, DEFAULT_KAPPA),
        PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 1.0),
    ] {
        let measured = delta_star(64, phase, SearchAxis::C2);
        let bound = system_bound(&phase, SearchAxis::C2, 64, 0.1).unwrap().delta_max;
        let ratio = measured / bound;
        assert!((0.1..=10.0).contains(&ratio), "{phase:?}: measured {measured:e}, bound {bound:e}");
    }
}

#[test]
fn steep_law_crosses_below_grid() {
    let scenario = SimScenario::four_tap(64, PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 10.0)).unwrap();
    let spec = MismatchSweepSpec {
        trials: 500,
        ..MismatchSweepSpec::new(SearchAxis::C2, log_grid())
    };
    let m = measure_mismatch_interval(&scenario, &spec).unwrap();
    assert_eq!(m.crossing.status, CrossingStatus::BelowGrid);
    assert!(m.curve.iter().all(|p| p.ber > 0.1));
}
