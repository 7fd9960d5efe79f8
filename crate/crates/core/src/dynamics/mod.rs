//! Reduced dynamics of the driven spin: isolated Schrödinger propagation, the
//! hierarchical equations of motion (static coupling) and a damped-pseudomode
//! master equation (time-dependent coupling allowed).
//!
//! All three integrate with fixed-step classical Runge–Kutta, so runs are
//! deterministic. Each result carries the convergence checks it passed.

mod heom;
mod pseudomode;
mod unitary;

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::operators::{fidelity, Operator2};
use crate::protocol::ProtocolSpec;

pub use heom::{run_heom, HeomConfig};
pub use pseudomode::{run_pseudomode, PseudomodeConfig};
pub use unitary::{isolated_propagator, run_unitary_isolated, IsolatedConfig};

/// Largest change in final fidelity tolerated when the step is halved.
pub const DT_TOL: f64 = 1e-6;
/// Largest change in final fidelity tolerated when truncations are raised.
pub const TRUNCATION_TOL: f64 = 1e-4;
/// Trace and Hermiticity slack for the reduced state along a run.
pub const STATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Isolated,
    Heom,
    Pseudomode,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Self::Isolated => "isolated",
            Self::Heom => "heom",
            Self::Pseudomode => "pseudomode",
        }
    }
}

/// What was used and what was checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceInfo {
    pub solver: Solver,
    pub dt: f64,
    pub steps: usize,
    pub depth: Option<usize>,
    pub matsubara: Option<usize>,
    pub ado_count: Option<usize>,
    pub fock: Option<usize>,
    /// `|F(N_c+1, K+1) − F(N_c, K)|` for the accepted truncation.
    pub hierarchy_delta: Option<f64>,
    /// `|F(N_f+2) − F(N_f)|` for the accepted Fock cutoff.
    pub fock_delta: Option<f64>,
    /// Largest population seen in the top two Fock levels.
    pub top_fock_population: Option<f64>,
    /// `|F(dt/2) − F(dt)|`.
    pub dt_delta: Option<f64>,
    pub residual_weight: Option<f64>,
    pub reconstruction_error: Option<f64>,
    /// Human-readable log of every escalation taken.
    pub escalations: Vec<String>,
}

impl ConvergenceInfo {
    fn new(solver: Solver, dt: f64, steps: usize) -> Self {
        Self {
            solver,
            dt,
            steps,
            depth: None,
            matsubara: None,
            ado_count: None,
            fock: None,
            hierarchy_delta: None,
            fock_delta: None,
            top_fock_population: None,
            dt_delta: None,
            residual_weight: None,
            reconstruction_error: None,
            escalations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub states: Vec<Operator2>,
    /// `⟨ψ_g(t)|ρ_S(t)|ψ_g(t)⟩` at each recorded time.
    pub fidelities: Vec<f64>,
    pub final_fidelity: f64,
    pub convergence: ConvergenceInfo,
}

impl SimulationResult {
    pub fn final_state(&self) -> &Operator2 {
        &self.states[self.states.len() - 1]
    }
}

/// Time grid: `steps` RK4 steps of size `dt = τ/steps`, recording every
/// `stride` steps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Grid {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl Grid {
    /// Finest of the requested step and `dt_cap`, rounded so that the output
    /// points fall on steps.
    pub fn new(tau: f64, dt_request: f64, dt_cap: f64, output_points: usize) -> Result<Self> {
        if !(dt_request > 0.0) {
            return Err(domain!("time step must be positive, got {dt_request}"));
        }
        let outputs = output_points.max(1);
        let dt = dt_request.min(dt_cap);
        let raw = (tau / dt).ceil() as usize;
        let stride = raw.div_ceil(outputs).max(1);
        let steps = stride * outputs;
        Ok(Self {
            dt: tau / steps as f64,
            steps,
            stride,
        })
    }

    pub fn halved(self) -> Self {
        Self {
            dt: 0.5 * self.dt,
            steps: 2 * self.steps,
            stride: 2 * self.stride,
        }
    }
}

/// `dt` cap shared by the solvers: `min(0.01/ω, 0.01/max|θ̇|)`.
pub(crate) fn accuracy_cap(spec: &ProtocolSpec, omega: f64) -> Result<f64> {
    let td = spec.max_theta_dot(4000)?;
    let mut cap = 0.01 / omega.max(1e-300);
    if td > 0.0 {
        cap = cap.min(0.01 / td);
    }
    Ok(cap)
}

const ONE_SIDED: f64 = 1e-12;

/// One classical RK4 step for `y' = f(t, y)` on a flat complex vector.
pub(crate) struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            k1: alloc::vec![z; n],
            k2: alloc::vec![z; n],
            k3: alloc::vec![z; n],
            k4: alloc::vec![z; n],
            tmp: alloc::vec![z; n],
        }
    }

    pub fn step<F>(&mut self, f: &mut F, t: f64, dt: f64, y: &mut [Complex64]) -> Result<()>
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
    {
        let half = 0.5 * dt;
        f(t, y, &mut self.k1)?;
        for ((o, a), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *o = a + k * half;
        }
        f(t + half, &self.tmp, &mut self.k2)?;
        for ((o, a), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *o = a + k * half;
        }
        f(t + half, &self.tmp, &mut self.k3)?;
        for ((o, a), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *o = a + k * dt;
        }
        // Last stage from the left, so a step ending on a kink of the drive
        // sees the one-sided derivative.
        f(t + dt * (1.0 - ONE_SIDED), &self.tmp, &mut self.k4)?;
        let w = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
        Ok(())
    }
}

/// RK4 over `[t, t + dt]`, split at any drive breakpoint strictly inside.
pub(crate) fn advance<F>(
    rk: &mut Rk4,
    f: &mut F,
    t: f64,
    dt: f64,
    breakpoints: &[f64],
    y: &mut [Complex64],
) -> Result<()>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
{
    let end = t + dt;
    let mut t0 = t;
    for &b in breakpoints {
        if b > t0 && b < end {
            rk.step(f, t0, b - t0, y)?;
            t0 = b;
        }
    }
    rk.step(f, t0, end - t0, y)
}

/// Checks the reduced state, scores it against the instantaneous ground state
/// and appends it to the record.
pub(crate) struct Recorder<'a> {
    spec: &'a ProtocolSpec,
    pub times: Vec<f64>,
    pub states: Vec<Operator2>,
    pub fidelities: Vec<f64>,
}

impl<'a> Recorder<'a> {
    pub fn new(spec: &'a ProtocolSpec) -> Self {
        Self {
            spec,
            times: Vec::new(),
            states: Vec::new(),
            fidelities: Vec::new(),
        }
    }

    pub fn record(&mut self, t: f64, rho: Operator2) -> Result<()> {
        let herm = rho.hermiticity_defect();
        let tr = rho.trace();
        if herm > STATE_TOL || (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(alloc::format!(
                "reduced state drifted at t = {t}: trace {tr}, Hermiticity defect {herm:e}"
            )));
        }
        // Symmetrize away roundoff before scoring.
        let rho = (rho + rho.dagger()).scale_re(0.5);
        let target = self.spec.ground_state(t)?;
        self.fidelities.push(fidelity(&target, &rho)?);
        self.times.push(t);
        self.states.push(rho);
        Ok(())
    }

    pub fn finish(self, convergence: ConvergenceInfo) -> SimulationResult {
        let final_fidelity = self.fidelities[self.fidelities.len() - 1];
        SimulationResult {
            times: self.times,
            states: self.states,
            fidelities: self.fidelities,
            final_fidelity,
            convergence,
        }
    }
}

/// Runs `simulate` at `grid` and at `grid` halved until the final fidelities
/// agree to [`DT_TOL`], at most `max_halvings` times. Returns the coarser of
/// the last agreeing pair and the observed change.
pub(crate) fn with_dt_check<F>(
    grid: Grid,
    max_halvings: usize,
    mut simulate: F,
) -> Result<(SimulationResult, f64)>
where
    F: FnMut(Grid) -> Result<SimulationResult>,
{
    let mut coarse = simulate(grid)?;
    let mut g = grid;
    for _ in 0..=max_halvings {
        let fine = simulate(g.halved())?;
        let delta = (fine.final_fidelity - coarse.final_fidelity).abs();
        if delta < DT_TOL {
            return Ok((coarse, delta));
        }
        coarse = fine;
        g = g.halved();
    }
    Err(Error::Convergence(alloc::format!(
        "final fidelity still moves by more than {DT_TOL:e} after {max_halvings} step halvings (dt = {:e})",
        g.dt
    )))
}
