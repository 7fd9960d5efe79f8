//! Drive protocols `q(t)` for the Landau-Zener Hamiltonian, the mixing angle
//! `θ_t` with its derivative, and the Hamiltonians built from them.
//!
//! `H₀(t) = (q/2)σ_z + (Δ/2)σ_x`, `H₁(t) = θ̇_t σ_y`, `H_cd = H₀ + H₁`, and the
//! system side of the bath coupling at angle `φ` is `cos2φ σ_z + sin2φ σ_x`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::operators::{self, Operator2, PureState2};
use crate::spline::CubicSpline;

/// Slack allowed when checking that `t` lies in `[0, τ]`.
const TIME_SLACK: f64 = 1e-12;

/// Mixing angle `θ = ½ atan2(Δ, q) ∈ (0, π/2)`.
pub fn theta(q: f64, delta: f64) -> Result<f64> {
    operators::mixing_angle(q, delta)
}

/// `θ̇ = −q̇Δ / [2(Δ² + q²)]`.
pub fn theta_dot(q: f64, q_dot: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(domain!("minimum gap Δ must be positive, got {delta}"));
    }
    Ok(-q_dot * delta / (2.0 * (delta * delta + q * q)))
}

/// Interior plateau `q* = Δ cot(2φ)` of the bound-optimal quasi-step drive.
pub fn q_optimal(phi: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(domain!("minimum gap Δ must be positive, got {delta}"));
    }
    let (s, c) = (2.0 * phi).sin_cos();
    if s.abs() < 1e-12 {
        return Err(Error::SingularCoupling { phi });
    }
    Ok(delta * c / s)
}

/// The shape of `q(t)` between the fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum DriveFamily {
    /// `q_i + (q_f − q_i) t/τ`.
    Linear,
    /// `c + (q_f − c)·sinh(a(t − τ/2))/sinh(aτ/2)` for `t ≥ τ/2` and the
    /// mirror image towards `q_i` for `t < τ/2`. With the default plateau
    /// `c = (q_i + q_f)/2` both halves join into the single smooth form
    /// `c + ½(q_f − q_i)·sinh(a(t − τ/2))/sinh(aτ/2)`.
    Sinh {
        steepness: f64,
        plateau: Option<f64>,
    },
    /// The limiting optimal drive: `q_i` at `t = 0`, `plateau` on `(0, τ)`,
    /// `q_f` at `t = τ`. Its CD field diverges at both ends, so it is only
    /// accepted by the bound evaluation, never by the dynamics solvers.
    QuasiStep { plateau: f64 },
    /// Natural cubic spline through sampled `(t, q)` data.
    Tabulated(CubicSpline),
    /// Monotone cubic through `(0, q_i)`, the interior control points and
    /// `(τ, q_f)`. Interior knot times are fixed; values are free.
    ControlPoints(CubicSpline),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub family: DriveFamily,
    pub delta: f64,
    pub tau: f64,
    pub q_initial: f64,
    pub q_final: f64,
}

fn check_common(delta: f64, tau: f64, qi: f64, qf: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(domain!(
            "minimum gap Δ must be positive and finite, got {delta}"
        ));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(domain!("duration τ must be positive and finite, got {tau}"));
    }
    if !qi.is_finite() || !qf.is_finite() {
        return Err(domain!("endpoints must be finite"));
    }
    Ok(())
}

/// `sinh(a x)/sinh(a T)` and its derivative in `x`, for `0 ≤ x ≤ T`, stable for
/// large `a`.
fn sinh_ratio(a: f64, x: f64, big_t: f64) -> (f64, f64) {
    if a == 0.0 {
        return (x / big_t, 1.0 / big_t);
    }
    let denom = -(-2.0 * a * big_t).exp_m1();
    let envelope = (a * (x - big_t)).exp();
    let value = envelope * -(-2.0 * a * x).exp_m1() / denom;
    let deriv = a * envelope * (1.0 + (-2.0 * a * x).exp()) / denom;
    (value, deriv)
}

impl ProtocolSpec {
    pub fn linear(delta: f64, tau: f64, q_initial: f64, q_final: f64) -> Result<Self> {
        check_common(delta, tau, q_initial, q_final)?;
        Ok(Self {
            family: DriveFamily::Linear,
            delta,
            tau,
            q_initial,
            q_final,
        })
    }

    pub fn sinh(
        delta: f64,
        tau: f64,
        q_initial: f64,
        q_final: f64,
        steepness: f64,
    ) -> Result<Self> {
        Self::sinh_with_plateau(delta, tau, q_initial, q_final, steepness, None)
    }

    pub fn sinh_with_plateau(
        delta: f64,
        tau: f64,
        q_initial: f64,
        q_final: f64,
        steepness: f64,
        plateau: Option<f64>,
    ) -> Result<Self> {
        check_common(delta, tau, q_initial, q_final)?;
        if !(steepness >= 0.0) || !steepness.is_finite() {
            return Err(domain!(
                "sinh steepness must be non-negative and finite, got {steepness}"
            ));
        }
        if let Some(c) = plateau {
            if !c.is_finite() {
                return Err(domain!("plateau must be finite"));
            }
        }
        Ok(Self {
            family: DriveFamily::Sinh { steepness, plateau },
            delta,
            tau,
            q_initial,
            q_final,
        })
    }

    pub fn quasi_step(
        delta: f64,
        tau: f64,
        q_initial: f64,
        q_final: f64,
        plateau: f64,
    ) -> Result<Self> {
        check_common(delta, tau, q_initial, q_final)?;
        if !plateau.is_finite() {
            return Err(domain!("plateau must be finite"));
        }
        Ok(Self {
            family: DriveFamily::QuasiStep { plateau },
            delta,
            tau,
            q_initial,
            q_final,
        })
    }

    /// Natural-spline protocol through `(t, q)` samples spanning `[0, τ]`.
    pub fn tabulated(delta: f64, samples: &[(f64, f64)]) -> Result<Self> {
        let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let qs: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (Some(&t0), Some(&tau)) = (ts.first(), ts.last()) else {
            return Err(domain!("tabulated protocol needs samples"));
        };
        if t0.abs() > TIME_SLACK {
            return Err(domain!("tabulated protocol must start at t = 0, got {t0}"));
        }
        check_common(delta, tau, qs[0], qs[qs.len() - 1])?;
        let spline = CubicSpline::natural(&ts, &qs)?;
        Ok(Self {
            family: DriveFamily::Tabulated(spline),
            delta,
            tau,
            q_initial: qs[0],
            q_final: qs[qs.len() - 1],
        })
    }

    /// Monotone-cubic protocol with free values at fixed interior times.
    pub fn control_points(
        delta: f64,
        tau: f64,
        q_initial: f64,
        q_final: f64,
        times: &[f64],
        values: &[f64],
    ) -> Result<Self> {
        check_common(delta, tau, q_initial, q_final)?;
        if times.len() != values.len() {
            return Err(domain!("control point times and values differ in length"));
        }
        if times.iter().any(|&t| !(t > 0.0 && t < tau)) {
            return Err(domain!(
                "control point times must lie strictly inside (0, τ)"
            ));
        }
        let mut knots = Vec::with_capacity(times.len() + 2);
        knots.push(0.0);
        knots.extend_from_slice(times);
        knots.push(tau);
        let mut qs = Vec::with_capacity(values.len() + 2);
        qs.push(q_initial);
        qs.extend_from_slice(values);
        qs.push(q_final);
        let spline = CubicSpline::monotone(&knots, &qs)?;
        Ok(Self {
            family: DriveFamily::ControlPoints(spline),
            delta,
            tau,
            q_initial,
            q_final,
        })
    }

    /// Times in `(0, τ)` where `q` loses smoothness (knots, joins).
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            DriveFamily::Sinh {
                plateau: Some(_), ..
            } => alloc::vec![0.5 * self.tau],
            DriveFamily::Tabulated(s) | DriveFamily::ControlPoints(s) => {
                let k = s.knots();
                k[1..k.len() - 1].to_vec()
            }
            _ => Vec::new(),
        }
    }

    /// True for drives whose CD field is unbounded and so cannot be simulated.
    pub fn is_singular(&self) -> bool {
        matches!(self.family, DriveFamily::QuasiStep { .. })
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = TIME_SLACK * self.tau.max(1.0);
        if !(t >= -slack && t <= self.tau + slack) {
            return Err(domain!("time {t} outside [0, {}]", self.tau));
        }
        Ok(t.clamp(0.0, self.tau))
    }

    /// `(q(t), q̇(t))`.
    pub fn drive(&self, t: f64) -> Result<(f64, f64)> {
        let t = self.check_time(t)?;
        let (qi, qf, tau) = (self.q_initial, self.q_final, self.tau);
        Ok(match &self.family {
            DriveFamily::Linear => (qi + (qf - qi) * t / tau, (qf - qi) / tau),
            DriveFamily::Sinh { steepness, plateau } => {
                let c = plateau.unwrap_or(0.5 * (qi + qf));
                let half = 0.5 * tau;
                // Written around the endpoint so that q(0), q(τ) are exact.
                if t >= half {
                    let (r, dr) = sinh_ratio(*steepness, t - half, half);
                    (qf + (c - qf) * (1.0 - r), (qf - c) * dr)
                } else {
                    let (r, dr) = sinh_ratio(*steepness, half - t, half);
                    (qi + (c - qi) * (1.0 - r), -(qi - c) * dr)
                }
            }
            DriveFamily::QuasiStep { plateau } => {
                if t == 0.0 {
                    (qi, 0.0)
                } else if t == tau {
                    (qf, 0.0)
                } else {
                    (*plateau, 0.0)
                }
            }
            DriveFamily::Tabulated(s) | DriveFamily::ControlPoints(s) => s.eval_with_derivative(t),
        })
    }

    pub fn q(&self, t: f64) -> Result<f64> {
        self.drive(t).map(|d| d.0)
    }

    pub fn theta(&self, t: f64) -> Result<f64> {
        theta(self.q(t)?, self.delta)
    }

    pub fn theta_dot(&self, t: f64) -> Result<f64> {
        let (q, qd) = self.drive(t)?;
        theta_dot(q, qd, self.delta)
    }

    pub fn ground_state(&self, t: f64) -> Result<PureState2> {
        Ok(operators::ground_state_at_angle(self.theta(t)?))
    }

    pub fn hamiltonian_bare(&self, t: f64) -> Result<Operator2> {
        Ok(operators::lz_hamiltonian(self.q(t)?, self.delta))
    }

    /// `H_cd(t) = (q/2)σ_z + (Δ/2)σ_x + θ̇σ_y`.
    pub fn hamiltonian_cd(&self, t: f64) -> Result<Operator2> {
        let (q, qd) = self.drive(t)?;
        let td = theta_dot(q, qd, self.delta)?;
        Ok(Operator2::from_pauli(0.0, 0.5 * self.delta, td, 0.5 * q))
    }

    /// `max |θ̇|` over a uniform grid of `samples + 1` points.
    pub fn max_theta_dot(&self, samples: usize) -> Result<f64> {
        let n = samples.max(1);
        let mut best: f64 = 0.0;
        for k in 0..=n {
            best = best.max(self.theta_dot(self.tau * k as f64 / n as f64)?.abs());
        }
        Ok(best)
    }
}

/// Direction of the system side of the system-bath coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingAngle {
    /// Fixed angle `φ ∈ [0, π)`.
    Static(f64),
    /// Co-rotating angle `φ(t) = θ_t`, the exact shortcut to adiabaticity.
    Sta,
}

impl CouplingAngle {
    pub fn fixed(phi: f64) -> Result<Self> {
        if !(0.0..PI).contains(&phi) {
            return Err(domain!(
                "static coupling angle must lie in [0, π), got {phi}"
            ));
        }
        Ok(Self::Static(phi))
    }

    /// `φ` at time `t` for the given protocol.
    pub fn at(&self, spec: &ProtocolSpec, t: f64) -> Result<f64> {
        match *self {
            Self::Static(phi) => {
                if !(0.0..PI).contains(&phi) {
                    return Err(domain!(
                        "static coupling angle must lie in [0, π), got {phi}"
                    ));
                }
                spec.check_time(t)?;
                Ok(phi)
            }
            Self::Sta => spec.theta(t),
        }
    }
}

/// `cos2φ σ_z + sin2φ σ_x` for an explicit angle.
pub fn coupling_operator_at_angle(phi: f64) -> Operator2 {
    let (s, c) = (2.0 * phi).sin_cos();
    Operator2::from_pauli(0.0, s, 0.0, c)
}

/// System side of the bath coupling at time `t`.
pub fn coupling_operator(angle: CouplingAngle, spec: &ProtocolSpec, t: f64) -> Result<Operator2> {
    Ok(coupling_operator_at_angle(angle.at(spec, t)?))
}
