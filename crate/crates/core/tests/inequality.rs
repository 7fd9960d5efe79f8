use std::f64::consts::FRAC_PI_4;

use cdbound_core::bath::{BathFunctionals, SpectralDensity};
use cdbound_core::bounds::{l_bd_lz, DEFAULT_GRID};
use cdbound_core::dynamics::{run_heom, run_pseudomode, HeomConfig, PseudomodeConfig, STATE_TOL};
use cdbound_core::protocol::{CouplingAngle, ProtocolSpec};
use proptest::prelude::*;

fn bound(spec: &ProtocolSpec, angle: CouplingAngle, j: &SpectralDensity, beta: f64) -> f64 {
    let bath = BathFunctionals::compute(j, beta, spec.tau, 400).unwrap();
    l_bd_lz(spec, angle, &bath, DEFAULT_GRID)
        .unwrap()
        .fidelity_lower_bound
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn converged_fidelity_respects_the_bound(
        delta in 0.2f64..2.0,
        a in 1.0f64..10.0,
        lambda in 0.02f64..0.12,
        phi in 0.2f64..1.3,
        beta in 0.5f64..5.0,
    ) {
        let spec = ProtocolSpec::sinh(delta, 2.0, -1.0, 1.0, a).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, lambda).unwrap();
        let angle = CouplingAngle::fixed(phi).unwrap();
        let r = run_heom(&spec, angle, &j, beta, &HeomConfig::default()).unwrap();
        let b = bound(&spec, angle, &j, beta);
        prop_assert!(r.final_fidelity >= b - 1e-3, "F = {} < cos²l = {}", r.final_fidelity, b);
    }
}

#[test]
fn reduced_states_stay_physical() {
    let spec = ProtocolSpec::sinh(0.7, 2.0, -1.0, 1.0, 3.0).unwrap();
    let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
    let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
    let runs = [
        run_heom(&spec, angle, &j, 1.0, &HeomConfig::default()).unwrap(),
        run_pseudomode(&spec, angle, &j, 1.0, &PseudomodeConfig::default()).unwrap(),
        run_pseudomode(
            &spec,
            CouplingAngle::Sta,
            &j,
            1.0,
            &PseudomodeConfig::default(),
        )
        .unwrap(),
    ];
    for r in &runs {
        assert_eq!(r.times.len(), r.states.len());
        for rho in &r.states {
            assert!((rho.trace().re - 1.0).abs() < STATE_TOL);
            assert!(rho.hermiticity_defect() < STATE_TOL);
            rho.validate_density(STATE_TOL).unwrap();
        }
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
    let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
    let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
    let cfg = HeomConfig {
        check_convergence: false,
        ..HeomConfig::default()
    };
    let a = run_heom(&spec, angle, &j, 1.0, &cfg).unwrap();
    let b = run_heom(&spec, angle, &j, 1.0, &cfg).unwrap();
    assert_eq!(a.final_fidelity.to_bits(), b.final_fidelity.to_bits());
    assert_eq!(a.states, b.states);
}

#[test]
fn fidelity_improves_with_steepness() {
    let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
    let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
    let f: Vec<f64> = [1.0, 3.0, 10.0]
        .iter()
        .map(|&a| {
            let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, a).unwrap();
            run_heom(&spec, angle, &j, 1.0, &HeomConfig::default())
                .unwrap()
                .final_fidelity
        })
        .collect();
    assert!(f[0] <= f[1] && f[1] <= f[2], "{f:?}");
}
