//! Spin plus one damped harmonic mode standing in for the underdamped bath.
//!
//! The mode has frequency `Ω = √(ω₀² − γ²/4)`, couples as `g A(t)⊗(a + a†)`
//! with `g = λ/√(2Ω)`, and is damped by `γ(n̄+1)D[a] + γn̄D[a†]` with `n̄` the
//! Bose occupation at `Ω`. This reproduces the resonant part of `C(t)`; the
//! Matsubara tail is not represented, so agreement with the hierarchy degrades
//! as the temperature rises. Unlike the hierarchy, `A(t)` may rotate.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use super::{
    accuracy_cap, advance, with_dt_check, ConvergenceInfo, Grid, Recorder, Rk4, SimulationResult,
    Solver, TRUNCATION_TOL,
};
use crate::bath::{coth_half, SpectralDensity};
use crate::error::{domain, Error, Result};
use crate::operators::Operator2;
use crate::protocol::{coupling_operator, CouplingAngle, ProtocolSpec};

/// Largest population tolerated in the top two Fock levels.
pub const FOCK_LEAK_TOL: f64 = 1e-4;
const FOCK_STEP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudomodeConfig {
    /// Fock cutoff `N_f` (levels `0..N_f`).
    pub fock: usize,
    pub dt: f64,
    pub check_convergence: bool,
    pub max_fock: usize,
    pub max_halvings: usize,
    pub output_points: usize,
}

impl Default for PseudomodeConfig {
    fn default() -> Self {
        Self {
            fock: 10,
            dt: 0.01,
            check_convergence: true,
            max_fock: 40,
            max_halvings: 4,
            output_points: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    omega: f64,
    gamma: f64,
    g: f64,
    nbar: f64,
    beta: f64,
}

struct Model<'a> {
    spec: &'a ProtocolSpec,
    angle: CouplingAngle,
    mode: Mode,
    levels: usize,
    /// Diagonal of the non-Hermitian mode generator for each level.
    diag: Vec<Complex64>,
    sqrt_n: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(spec: &'a ProtocolSpec, angle: CouplingAngle, mode: Mode, levels: usize) -> Self {
        let diag = (0..levels)
            .map(|k| {
                let n = k as f64;
                // Truncated `a a†` has no weight on the top level, which keeps
                // the generator trace-preserving.
                let raise = if k + 1 < levels { n + 1.0 } else { 0.0 };
                let loss = 0.5 * mode.gamma * ((mode.nbar + 1.0) * n + mode.nbar * raise);
                Complex64::new(-loss, -mode.omega * n)
            })
            .collect();
        let sqrt_n = (0..=levels).map(|n| (n as f64).sqrt()).collect();
        Self {
            spec,
            angle,
            mode,
            levels,
            diag,
            sqrt_n,
        }
    }

    fn dim(&self) -> usize {
        2 * self.levels
    }

    fn initial(&self) -> Result<Vec<Complex64>> {
        let d = self.dim();
        let psi = self.spec.ground_state(0.0)?;
        let spin = Operator2::projector(&psi);
        let mut pops: Vec<f64> = (0..self.levels)
            .map(|n| {
                if self.mode.beta.is_infinite() {
                    if n == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-self.mode.beta * self.mode.omega * n as f64).exp()
                }
            })
            .collect();
        let z: f64 = pops.iter().sum();
        pops.iter_mut().for_each(|p| *p /= z);
        let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
        for s in 0..2 {
            for r in 0..2 {
                for (n, p) in pops.iter().enumerate() {
                    rho[(s * self.levels + n) * d + r * self.levels + n] = spin.m[s][r] * *p;
                }
            }
        }
        Ok(rho)
    }

    /// `dρ = Kρ + (Kρ)† + γ(n̄+1) aρa† + γn̄ a†ρa`, `K = −iH − ½ΣL†L`.
    fn rhs(
        &self,
        t: f64,
        rho: &[Complex64],
        out: &mut [Complex64],
        k_rho: &mut [Complex64],
    ) -> Result<()> {
        let (nf, d) = (self.levels, self.dim());
        let mi = Complex64::new(0.0, -1.0);
        let ks = self.spec.hamiltonian_cd(t)?.scale(mi).m;
        let kc = coupling_operator(self.angle, self.spec, t)?
            .scale(mi * self.mode.g)
            .m;
        for s in 0..2 {
            for n in 0..nf {
                let row = s * nf + n;
                for c in 0..d {
                    let mut acc = self.diag[n] * rho[row * d + c];
                    for sp in 0..2 {
                        let base = sp * nf;
                        acc += ks[s][sp] * rho[(base + n) * d + c];
                        let a = kc[s][sp];
                        if n + 1 < nf {
                            acc += a * self.sqrt_n[n + 1] * rho[(base + n + 1) * d + c];
                        }
                        if n > 0 {
                            acc += a * self.sqrt_n[n] * rho[(base + n - 1) * d + c];
                        }
                    }
                    k_rho[row * d + c] = acc;
                }
            }
        }
        let up = self.mode.gamma * (self.mode.nbar + 1.0);
        let dn = self.mode.gamma * self.mode.nbar;
        for s in 0..2 {
            for n in 0..nf {
                let i = s * nf + n;
                for r in 0..2 {
                    for m in 0..nf {
                        let j = r * nf + m;
                        let mut v = k_rho[i * d + j] + k_rho[j * d + i].conj();
                        if n + 1 < nf && m + 1 < nf {
                            v += rho[(i + 1) * d + j + 1]
                                * (up * self.sqrt_n[n + 1] * self.sqrt_n[m + 1]);
                        }
                        if n > 0 && m > 0 && dn != 0.0 {
                            v += rho[(i - 1) * d + j - 1] * (dn * self.sqrt_n[n] * self.sqrt_n[m]);
                        }
                        out[i * d + j] = v;
                    }
                }
            }
        }
        Ok(())
    }

    fn reduced(&self, rho: &[Complex64]) -> Operator2 {
        let (nf, d) = (self.levels, self.dim());
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (s, row) in m.iter_mut().enumerate() {
            for (r, v) in row.iter_mut().enumerate() {
                for n in 0..nf {
                    *v += rho[(s * nf + n) * d + r * nf + n];
                }
            }
        }
        Operator2::new(m)
    }

    fn top_population(&self, rho: &[Complex64]) -> f64 {
        let (nf, d) = (self.levels, self.dim());
        let mut p = 0.0;
        for n in nf.saturating_sub(2)..nf {
            for s in 0..2 {
                let i = s * nf + n;
                p += rho[i * d + i].re;
            }
        }
        p
    }

    fn fastest_rate(&self) -> f64 {
        let nf = self.levels as f64;
        nf * (self.mode.omega + self.mode.gamma * (2.0 * self.mode.nbar + 1.0))
            + 2.0 * self.mode.g * nf.sqrt()
    }

    fn run(&self, grid: Grid) -> Result<(SimulationResult, f64)> {
        let d = self.dim();
        let mut y = self.initial()?;
        let mut scratch = vec![Complex64::new(0.0, 0.0); d * d];
        let mut rk = Rk4::new(d * d);
        let mut rec = Recorder::new(self.spec);
        let mut top = self.top_population(&y);
        rec.record(0.0, self.reduced(&y))?;
        let mut rhs =
            |t: f64, y: &[Complex64], out: &mut [Complex64]| self.rhs(t, y, out, &mut scratch);
        let bps = self.spec.breakpoints();
        for step in 0..grid.steps {
            let t = grid.dt * step as f64;
            advance(&mut rk, &mut rhs, t, grid.dt, &bps, &mut y)?;
            if (step + 1) % grid.stride == 0 {
                if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Convergence(alloc::format!(
                        "pseudomode run diverged at t = {t} (dt = {:e}, N_f = {})",
                        grid.dt,
                        self.levels
                    )));
                }
                let t1 = if step + 1 == grid.steps {
                    self.spec.tau
                } else {
                    t + grid.dt
                };
                top = top.max(self.top_population(&y));
                rec.record(t1, self.reduced(&y))?;
            }
        }
        let mut info = ConvergenceInfo::new(Solver::Pseudomode, grid.dt, grid.steps);
        info.fock = Some(self.levels);
        info.top_fock_population = Some(top);
        Ok((rec.finish(info), top))
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

/// Propagates `|ψ_g(0)⟩⟨ψ_g(0)| ⊗ ρ_mode^β` and traces out the mode.
pub fn run_pseudomode(
    spec: &ProtocolSpec,
    angle: CouplingAngle,
    j: &SpectralDensity,
    beta: f64,
    cfg: &PseudomodeConfig,
) -> Result<SimulationResult> {
    if !(beta > 0.0) {
        return Err(domain!("inverse temperature must be positive, got {beta}"));
    }
    if let CouplingAngle::Static(phi) = angle {
        CouplingAngle::fixed(phi)?;
    }
    if spec.is_singular() {
        return Err(Error::Unsupported(
            "quasi-step drives have an unbounded CD field and cannot be simulated".into(),
        ));
    }
    let SpectralDensity::UnderdampedBrownian {
        omega0,
        gamma,
        lambda,
    } = *j
    else {
        return Err(Error::Unsupported(
            "the pseudomode solver needs the underdamped Brownian density".into(),
        ));
    };
    if omega0 <= 0.5 * gamma {
        return Err(Error::UnsupportedRegime(alloc::format!(
            "overdamped bath (ω₀ = {omega0} ≤ γ/2 = {}) has no oscillating mode",
            0.5 * gamma
        )));
    }
    if cfg.fock < 2 || cfg.max_fock < cfg.fock {
        return Err(domain!(
            "Fock cutoff must satisfy 2 ≤ N_f ≤ max, got {} and {}",
            cfg.fock,
            cfg.max_fock
        ));
    }
    let omega = (omega0 * omega0 - 0.25 * gamma * gamma).sqrt();
    let mode = Mode {
        omega,
        gamma,
        g: lambda / (2.0 * omega).sqrt(),
        nbar: 0.5 * (coth_half(beta, omega) - 1.0),
        beta,
    };
    let cap = accuracy_cap(spec, gap_scale(spec)?.max(omega))?;
    let grid_for = |m: &Model| {
        Grid::new(
            spec.tau,
            cfg.dt,
            cap.min(1.0 / m.fastest_rate()),
            cfg.output_points,
        )
    };

    if j.is_zero() {
        // A decoupled mode only costs time; two levels represent it exactly.
        let m = Model::new(spec, angle, mode, 2);
        return Ok(m.run(grid_for(&m)?)?.0);
    }

    let mut escalations = Vec::new();
    let mut levels = cfg.fock;
    let (model, base, top) = loop {
        let m = Model::new(spec, angle, mode, levels);
        let (r, top) = m.run(grid_for(&m)?)?;
        if !cfg.check_convergence || top < FOCK_LEAK_TOL {
            break (m, r, top);
        }
        if levels >= cfg.max_fock {
            return Err(Error::Convergence(alloc::format!(
                "top Fock levels hold {top:e} at N_f = {levels} (tolerance {FOCK_LEAK_TOL:e})"
            )));
        }
        let next = (levels + FOCK_STEP).min(cfg.max_fock);
        escalations.push(alloc::format!(
            "N_f {levels}→{next} (top population {top:e})"
        ));
        levels = next;
    };
    if !cfg.check_convergence {
        return Ok(base);
    }
    let grid = grid_for(&model)?;
    let wider = Model::new(spec, angle, mode, levels + 2);
    let (wide, _) = wider.run(grid)?;
    let fock_delta = (wide.final_fidelity - base.final_fidelity).abs();
    if fock_delta >= TRUNCATION_TOL {
        return Err(Error::Convergence(alloc::format!(
            "raising N_f from {levels} to {} moves F by {fock_delta:e}",
            levels + 2
        )));
    }
    let (mut result, dt_delta) =
        with_dt_check(grid, cfg.max_halvings, |g| model.run(g).map(|r| r.0))?;
    if result.convergence.dt != grid.dt {
        escalations.push(alloc::format!(
            "dt {:e}→{:e}",
            grid.dt,
            result.convergence.dt
        ));
    }
    let c = &mut result.convergence;
    c.top_fock_population = Some(c.top_fock_population.unwrap_or(0.0).max(top));
    c.fock_delta = Some(fock_delta);
    c.dt_delta = Some(dt_delta);
    c.escalations = escalations;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_heom, run_unitary_isolated, HeomConfig, IsolatedConfig};
    use core::f64::consts::FRAC_PI_4;

    #[test]
    fn decoupled_mode_is_transparent() {
        let spec = ProtocolSpec::sinh(0.8, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.0).unwrap();
        let r = run_pseudomode(
            &spec,
            CouplingAngle::Sta,
            &j,
            1.0,
            &PseudomodeConfig::default(),
        )
        .unwrap();
        assert!((r.final_fidelity - 1.0).abs() < 1e-8);
        let u = run_unitary_isolated(&spec, &IsolatedConfig::default()).unwrap();
        assert!((*r.final_state() - *u.final_state()).max_abs() < 1e-8);
    }

    #[test]
    fn initial_mode_is_thermal() {
        let spec = ProtocolSpec::linear(1.0, 1.0, -1.0, 1.0).unwrap();
        let mode = Mode {
            omega: 1.0,
            gamma: 0.1,
            g: 0.1,
            nbar: 0.0,
            beta: 2.0,
        };
        let m = Model::new(&spec, CouplingAngle::Sta, mode, 12);
        let rho = m.initial().unwrap();
        let d = m.dim();
        let p0: f64 = (0..2).map(|s| rho[(s * 12) * d + s * 12].re).sum();
        let p1: f64 = (0..2).map(|s| rho[(s * 12 + 1) * d + s * 12 + 1].re).sum();
        assert!((p1 / p0 - (-2.0f64).exp()).abs() < 1e-12);
        assert!((m.reduced(&rho).trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn co_rotating_coupling_protects_at_low_temperature() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
        let cfg = PseudomodeConfig::default();
        let sta = run_pseudomode(&spec, CouplingAngle::Sta, &j, 10.0, &cfg).unwrap();
        assert!(sta.final_fidelity >= 0.999, "{}", sta.final_fidelity);
        let fixed = run_pseudomode(
            &spec,
            CouplingAngle::fixed(FRAC_PI_4).unwrap(),
            &j,
            10.0,
            &cfg,
        )
        .unwrap();
        assert!(fixed.final_fidelity < sta.final_fidelity);
    }

    #[test]
    fn agrees_with_hierarchy_when_cold() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
        let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
        let p = run_pseudomode(&spec, angle, &j, 10.0, &PseudomodeConfig::default()).unwrap();
        let h = run_heom(&spec, angle, &j, 10.0, &HeomConfig::default()).unwrap();
        assert!(
            (p.final_fidelity - h.final_fidelity).abs() < 2e-2,
            "{} {}",
            p.final_fidelity,
            h.final_fidelity
        );
    }
}
