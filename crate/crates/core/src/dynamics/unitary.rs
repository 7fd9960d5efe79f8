//! Schrödinger propagation of the isolated spin under `H_cd(t)` (or `H₀(t)`
//! alone, to see what the CD term buys).

use alloc::vec;

use num_complex::Complex64;
#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use super::{
    accuracy_cap, advance, ConvergenceInfo, Grid, Recorder, Rk4, SimulationResult, Solver,
};
use crate::error::Result;
use crate::operators::{Operator2, PureState2};
use crate::protocol::ProtocolSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolatedConfig {
    pub dt: f64,
    /// Include the counter-diabatic `θ̇σ_y` term.
    pub counterdiabatic: bool,
    pub output_points: usize,
}

impl Default for IsolatedConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            counterdiabatic: true,
            output_points: 200,
        }
    }
}

fn hamiltonian(spec: &ProtocolSpec, t: f64, cd: bool) -> Result<Operator2> {
    if cd {
        spec.hamiltonian_cd(t)
    } else {
        spec.hamiltonian_bare(t)
    }
}

fn gap_scale(spec: &ProtocolSpec) -> Result<f64> {
    let mut e: f64 = spec.delta;
    for k in 0..=200 {
        let q = spec.q(spec.tau * k as f64 / 200.0)?;
        e = e.max((q * q + spec.delta * spec.delta).sqrt());
    }
    Ok(e)
}

fn grid_for(spec: &ProtocolSpec, cfg: &IsolatedConfig) -> Result<Grid> {
    let cap = accuracy_cap(spec, gap_scale(spec)?)?;
    Grid::new(spec.tau, cfg.dt, cap, cfg.output_points)
}

fn reject_singular(spec: &ProtocolSpec) -> Result<()> {
    if spec.is_singular() {
        return Err(crate::Error::Unsupported(
            "quasi-step drives have an unbounded CD field and cannot be simulated".into(),
        ));
    }
    Ok(())
}

/// Integrates `iψ̇ = H(t)ψ` from `|ψ_g(0)⟩`.
pub fn run_unitary_isolated(spec: &ProtocolSpec, cfg: &IsolatedConfig) -> Result<SimulationResult> {
    reject_singular(spec)?;
    let grid = grid_for(spec, cfg)?;
    let psi0 = spec.ground_state(0.0)?;
    let mut y = vec![psi0.amps[0], psi0.amps[1]];
    let mut rk = Rk4::new(2);
    let mi = Complex64::new(0.0, -1.0);
    let cd = cfg.counterdiabatic;
    let mut rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        let h = hamiltonian(spec, t, cd)?.m;
        out[0] = mi * (h[0][0] * y[0] + h[0][1] * y[1]);
        out[1] = mi * (h[1][0] * y[0] + h[1][1] * y[1]);
        Ok(())
    };
    let mut rec = Recorder::new(spec);
    let projector = |y: &[Complex64]| -> Result<Operator2> {
        let psi = PureState2::new([y[0], y[1]])?;
        Ok(Operator2::projector(&psi))
    };
    rec.record(0.0, projector(&y)?)?;
    let bps = spec.breakpoints();
    for step in 0..grid.steps {
        let t = grid.dt * step as f64;
        advance(&mut rk, &mut rhs, t, grid.dt, &bps, &mut y)?;
        if (step + 1) % grid.stride == 0 {
            let t1 = if step + 1 == grid.steps {
                spec.tau
            } else {
                t + grid.dt
            };
            rec.record(t1, projector(&y)?)?;
        }
    }
    Ok(rec.finish(ConvergenceInfo::new(Solver::Isolated, grid.dt, grid.steps)))
}

/// The propagator `U(τ, 0)` of the isolated spin, column by column.
pub fn isolated_propagator(spec: &ProtocolSpec, cfg: &IsolatedConfig) -> Result<Operator2> {
    reject_singular(spec)?;
    let grid = grid_for(spec, cfg)?;
    let mi = Complex64::new(0.0, -1.0);
    let cd = cfg.counterdiabatic;
    // Two columns evolved together: y = (U₀₀, U₁₀, U₀₁, U₁₁).
    let mut y = vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    ];
    let mut rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        let h = hamiltonian(spec, t, cd)?.m;
        for c in 0..2 {
            let (a, b) = (y[2 * c], y[2 * c + 1]);
            out[2 * c] = mi * (h[0][0] * a + h[0][1] * b);
            out[2 * c + 1] = mi * (h[1][0] * a + h[1][1] * b);
        }
        Ok(())
    };
    let mut rk = Rk4::new(4);
    let bps = spec.breakpoints();
    for step in 0..grid.steps {
        advance(
            &mut rk,
            &mut rhs,
            grid.dt * step as f64,
            grid.dt,
            &bps,
            &mut y,
        )?;
    }
    Ok(Operator2::new([[y[0], y[2]], [y[1], y[3]]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;

    #[test]
    fn cd_keeps_unit_fidelity() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
        let r = run_unitary_isolated(&spec, &IsolatedConfig::default()).unwrap();
        assert!(r.fidelities.iter().all(|f| *f >= 1.0 - 1e-8));
        assert_eq!(r.times.len(), 201);
        assert!((r.times[200] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bare_fast_ramp_excites() {
        let spec = ProtocolSpec::sinh(1.0, 0.5, -1.0, 1.0, 3.0).unwrap();
        let cfg = IsolatedConfig {
            counterdiabatic: false,
            ..IsolatedConfig::default()
        };
        let r = run_unitary_isolated(&spec, &cfg).unwrap();
        assert!(r.final_fidelity < 0.99, "{}", r.final_fidelity);
    }

    #[test]
    fn rotated_frame_propagator_is_diagonal_phase() {
        // R_τ† U(τ) R_0 must equal exp(−iΦσ_z), Φ = ½∫√(Δ² + q²) dt.
        let spec = ProtocolSpec::sinh(0.7, 2.0, -1.0, 1.0, 3.0).unwrap();
        let u = isolated_propagator(&spec, &IsolatedConfig::default()).unwrap();
        let rot = |t: f64| {
            let th = spec.theta(t).unwrap();
            (Operator2::sigma_y() * th).unitary_exp(1.0)
        };
        let frame = rot(2.0).dagger() * u * rot(0.0);
        let n = 20_001;
        let h = 2.0 / (n - 1) as f64;
        let e: alloc::vec::Vec<f64> = (0..n)
            .map(|i| {
                let q = spec.q(i as f64 * h).unwrap();
                0.5 * (q * q + 0.49f64).sqrt()
            })
            .collect();
        let phi = simpson(&e, h).unwrap();
        let expected = (Operator2::sigma_z() * phi).unitary_exp(1.0);
        assert!(
            (frame - expected).max_abs() < 1e-8,
            "{:e}",
            (frame - expected).max_abs()
        );
    }

    #[test]
    fn quasi_step_is_refused() {
        let spec = ProtocolSpec::quasi_step(1.0, 2.0, -1.0, 1.0, 0.0).unwrap();
        assert!(run_unitary_isolated(&spec, &IsolatedConfig::default()).is_err());
    }
}
