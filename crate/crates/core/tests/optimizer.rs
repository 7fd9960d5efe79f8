use std::f64::consts::FRAC_PI_4;

use cdbound_core::bath::{BathFunctionals, SpectralDensity};
use cdbound_core::optimizer::{optimize_multi, OptimizationProblem, ProtocolFamily};
use cdbound_core::protocol::CouplingAngle;

fn fig_problem() -> OptimizationProblem {
    let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
    let bath = BathFunctionals::compute(&j, 1.0, 2.0, 200).unwrap();
    let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
    OptimizationProblem::sinh(1.0, 2.0, -1.0, 1.0, angle, bath, (0.5, 50.0))
}

#[test]
fn four_control_points_match_or_beat_steep_sinh() {
    let p = fig_problem();
    let sinh10 = p.evaluate(&[10.0]).unwrap();
    let cdbound_core::optimizer::Evaluation::Scored(reference) = sinh10 else {
        panic!("sinh(a = 10) rejected");
    };
    let mut spline = p.clone();
    // Knots bunched towards the ends, where a steep drive does its work.
    spline.family = ProtocolFamily::ControlPoints {
        times: vec![0.05, 0.2, 1.8, 1.95],
    };
    spline.bounds = vec![(-1.0, 1.0); 4];
    spline.initial = Some(vec![-0.3, 0.0, 0.0, 0.3]);
    let r = optimize_multi(&spline).unwrap();
    assert!(
        r.l_bd <= reference,
        "spline {} > sinh {}",
        r.l_bd,
        reference
    );
    // The reported optimum is what re-evaluation gives.
    let again = spline.evaluate(&r.params).unwrap();
    assert_eq!(again, cdbound_core::optimizer::Evaluation::Scored(r.l_bd));
    assert_eq!(r.protocol.q(0.0).unwrap(), -1.0);
    assert_eq!(r.protocol.q(2.0).unwrap(), 1.0);
}
