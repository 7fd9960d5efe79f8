//! Hierarchical equations of motion for the spin coupled through a static
//! operator `Q` to a bath with `C(t) = Σ_j c_j e^{−ν_j t}`:
//!
//! ```text
//! ρ̇_n = −i[H(t), ρ_n] − (Σ_j n_j ν_j) ρ_n − i Σ_j [Q, ρ_{n+e_j}]
//!       − i Σ_j n_j (c_j Q ρ_{n−e_j} − c̃_j ρ_{n−e_j} Q)
//! ```
//!
//! where `c̃_j` are the coefficients of `C(t)*` on the same exponentials.
//! ADOs deeper than `N_c` are set to zero, or optionally replaced by their
//! adiabatically eliminated value.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    accuracy_cap, advance, with_dt_check, ConvergenceInfo, Grid, Recorder, Rk4, SimulationResult,
    Solver, TRUNCATION_TOL,
};
use crate::bath::{decompose_correlation, CorrelationDecomposition, ExpTerm, SpectralDensity};
use crate::error::{Error, Result};
use crate::operators::Operator2;
use crate::protocol::{coupling_operator_at_angle, CouplingAngle, ProtocolSpec};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeomConfig {
    /// Hierarchy depth `N_c`.
    pub depth: usize,
    /// Matsubara terms `K`.
    pub matsubara: usize,
    pub dt: f64,
    /// Compare against `(N_c+1, K+1)` and a halved step, escalating on failure.
    pub check_convergence: bool,
    pub max_depth: usize,
    pub max_matsubara: usize,
    pub max_halvings: usize,
    /// Fold the neglected Matsubara tail into a `−Δ[Q,[Q,·]]` term.
    pub matsubara_terminator: bool,
    /// Replace depth-`N_c+1` ADOs by their adiabatic estimate instead of zero.
    pub depth_closure: bool,
    pub output_points: usize,
}

impl Default for HeomConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            matsubara: 3,
            dt: 0.01,
            check_convergence: true,
            max_depth: 12,
            max_matsubara: 8,
            max_halvings: 4,
            matsubara_terminator: false,
            depth_closure: false,
            output_points: 100,
        }
    }
}

struct Link {
    term: usize,
    index: usize,
    /// `n_j` of the deeper ADO for downward links.
    occupation: f64,
}

struct Hierarchy {
    terms: Vec<ExpTerm>,
    damping: Vec<Complex64>,
    up: Vec<Vec<Link>>,
    down: Vec<Vec<Link>>,
    /// For ADOs at the maximum depth: `(term, n_j + 1, Σ(n + e_j)·ν)` of
    /// each missing deeper neighbour.
    closure: Vec<Vec<(usize, f64, Complex64)>>,
}

fn enumerate(modes: usize, depth: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; modes]];
    let mut frontier = out.clone();
    for _ in 0..depth {
        let mut next = Vec::new();
        for n in &frontier {
            // Raise only the last non-zero entry or later ones, so every
            // multi-index is produced exactly once.
            let start = n.iter().rposition(|&x| x > 0).unwrap_or(0);
            for j in start..modes {
                let mut m = n.clone();
                m[j] += 1;
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

impl Hierarchy {
    fn new(decomp: &CorrelationDecomposition, depth: usize, closure: bool) -> Self {
        let terms = decomp.terms.clone();
        let modes = terms.len();
        let indices = if modes == 0 {
            vec![Vec::new()]
        } else {
            enumerate(modes, depth)
        };
        let lookup: BTreeMap<Vec<u8>, usize> = indices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let mut damping = Vec::with_capacity(indices.len());
        let mut up = Vec::with_capacity(indices.len());
        let mut down = Vec::with_capacity(indices.len());
        let mut close = Vec::with_capacity(indices.len());
        for n in &indices {
            let gamma: Complex64 = n
                .iter()
                .zip(&terms)
                .map(|(&k, e)| e.rate * f64::from(k))
                .sum();
            damping.push(gamma);
            let level: usize = n.iter().map(|&k| usize::from(k)).sum();
            let mut u = Vec::new();
            let mut d = Vec::new();
            let mut c = Vec::new();
            for j in 0..modes {
                let mut m = n.clone();
                m[j] += 1;
                if let Some(&idx) = lookup.get(&m) {
                    u.push(Link {
                        term: j,
                        index: idx,
                        occupation: 0.0,
                    });
                } else if closure && level == depth {
                    c.push((j, f64::from(m[j]), gamma + terms[j].rate));
                }
                if n[j] > 0 {
                    let mut m = n.clone();
                    m[j] -= 1;
                    d.push(Link {
                        term: j,
                        index: lookup[&m],
                        occupation: f64::from(n[j]),
                    });
                }
            }
            up.push(u);
            down.push(d);
            close.push(c);
        }
        Self {
            terms,
            damping,
            up,
            down,
            closure: close,
        }
    }

    fn len(&self) -> usize {
        self.damping.len()
    }
}

fn load(y: &[Complex64], i: usize) -> Operator2 {
    let b = 4 * i;
    Operator2::new([[y[b], y[b + 1]], [y[b + 2], y[b + 3]]])
}

fn store(out: &mut [Complex64], i: usize, op: &Operator2) {
    let b = 4 * i;
    out[b] = op.m[0][0];
    out[b + 1] = op.m[0][1];
    out[b + 2] = op.m[1][0];
    out[b + 3] = op.m[1][1];
}

struct Run {
    result: SimulationResult,
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    spec: &ProtocolSpec,
    q: &Operator2,
    decomp: &CorrelationDecomposition,
    depth: usize,
    grid: Grid,
    cfg: &HeomConfig,
) -> Result<Run> {
    let h = Hierarchy::new(decomp, depth, cfg.depth_closure);
    let n = h.len();
    let mut y = vec![Complex64::new(0.0, 0.0); 4 * n];
    let psi0 = spec.ground_state(0.0)?;
    store(&mut y, 0, &Operator2::projector(&psi0));
    let mi = Complex64::new(0.0, -1.0);
    let residual = if cfg.matsubara_terminator {
        decomp.residual_weight
    } else {
        0.0
    };
    let mut rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        let ham = spec.hamiltonian_cd(t)?;
        for i in 0..n {
            let rho = load(y, i);
            let mut d = ham.commutator(&rho) * mi - rho * h.damping[i];
            for l in &h.up[i] {
                d += q.commutator(&load(y, l.index)) * mi;
            }
            for l in &h.down[i] {
                let r = load(y, l.index);
                let e = &h.terms[l.term];
                d += ((*q * r) * e.coefficient - (r * *q) * e.conj_coefficient)
                    * (mi * l.occupation);
            }
            for &(j, occ, gam) in &h.closure[i] {
                let e = &h.terms[j];
                let deeper = ((*q * rho) * e.coefficient - (rho * *q) * e.conj_coefficient)
                    * (mi * occ / gam);
                d += q.commutator(&deeper) * mi;
            }
            if residual != 0.0 {
                d += q.commutator(&q.commutator(&rho)) * (-residual);
            }
            store(out, i, &d);
        }
        Ok(())
    };
    let mut rk = Rk4::new(4 * n);
    let mut rec = Recorder::new(spec);
    rec.record(0.0, load(&y, 0))?;
    let bps = spec.breakpoints();
    for step in 0..grid.steps {
        let t = grid.dt * step as f64;
        advance(&mut rk, &mut rhs, t, grid.dt, &bps, &mut y)?;
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Convergence(alloc::format!(
                "hierarchy diverged at t = {t} (dt = {:e}, {n} ADOs)",
                grid.dt
            )));
        }
        if (step + 1) % grid.stride == 0 {
            let t1 = if step + 1 == grid.steps {
                spec.tau
            } else {
                t + grid.dt
            };
            rec.record(t1, load(&y, 0))?;
        }
    }
    let mut info = ConvergenceInfo::new(Solver::Heom, grid.dt, grid.steps);
    info.depth = Some(depth);
    info.matsubara = Some(decomp.matsubara);
    info.ado_count = Some(n);
    info.residual_weight = Some(decomp.residual_weight);
    info.reconstruction_error = Some(decomp.reconstruction_error);
    Ok(Run {
        result: rec.finish(info),
    })
}

fn max_rate(decomp: &CorrelationDecomposition) -> f64 {
    decomp
        .terms
        .iter()
        .fold(0.0, |m: f64, e| m.max(e.rate.norm()))
}

/// HEOM propagation from `|ψ_g(0)⟩⟨ψ_g(0)| ⊗ ρ_B^β` with static coupling
/// `cos2φσ_z + sin2φσ_x`.
pub fn run_heom(
    spec: &ProtocolSpec,
    angle: CouplingAngle,
    j: &SpectralDensity,
    beta: f64,
    cfg: &HeomConfig,
) -> Result<SimulationResult> {
    let phi = match angle {
        CouplingAngle::Static(phi) => phi,
        CouplingAngle::Sta => {
            return Err(Error::Unsupported(
                "the hierarchy needs a static coupling operator; use the pseudomode solver for co-rotating coupling"
                    .into(),
            ))
        }
    };
    CouplingAngle::fixed(phi)?;
    if spec.is_singular() {
        return Err(Error::Unsupported(
            "quasi-step drives have an unbounded CD field and cannot be simulated".into(),
        ));
    }
    let SpectralDensity::UnderdampedBrownian { omega0, .. } = *j else {
        return Err(Error::Unsupported(
            "the hierarchy solver needs the underdamped Brownian density".into(),
        ));
    };
    let q = coupling_operator_at_angle(phi);
    let cap = accuracy_cap(spec, omega0)?;

    let simulate = |depth: usize, k: usize, g: Option<Grid>| -> Result<(SimulationResult, Grid)> {
        let decomp = decompose_correlation(j, beta, k, spec.tau)?;
        // Keep the fastest hierarchy damping inside the RK4 stability region.
        let stability = 1.0 / (depth.max(1) as f64 * max_rate(&decomp)).max(1e-300);
        let grid = match g {
            Some(g) if g.dt <= stability => g,
            _ => Grid::new(spec.tau, cfg.dt, cap.min(stability), cfg.output_points)?,
        };
        Ok((integrate(spec, &q, &decomp, depth, grid, cfg)?.result, grid))
    };

    let (mut depth, mut k) = (cfg.depth, cfg.matsubara);
    let (mut base, mut grid) = simulate(depth, k, None)?;
    if !cfg.check_convergence || j.is_zero() {
        return Ok(base);
    }
    let mut escalations = Vec::new();
    let hierarchy_delta = loop {
        let (richer, _) = simulate(depth + 1, k + 1, Some(grid))?;
        let delta = (richer.final_fidelity - base.final_fidelity).abs();
        if delta < TRUNCATION_TOL {
            break delta;
        }
        if depth >= cfg.max_depth && k >= cfg.max_matsubara {
            return Err(Error::Convergence(alloc::format!(
                "hierarchy unconverged at N_c = {depth}, K = {k}: raising both by one moves F by {delta:e} \
                 (tolerance {TRUNCATION_TOL:e}); escalations: {escalations:?}"
            )));
        }
        let (nd, nk) = (
            (2 * depth).min(cfg.max_depth),
            (2 * k.max(1)).min(cfg.max_matsubara),
        );
        escalations.push(alloc::format!(
            "N_c {depth}→{nd}, K {k}→{nk} (ΔF = {delta:e})"
        ));
        depth = nd;
        k = nk;
        let next = simulate(depth, k, None)?;
        base = next.0;
        grid = next.1;
    };
    let (accepted, dt_delta) = with_dt_check(grid, cfg.max_halvings, |g| {
        simulate(depth, k, Some(g)).map(|r| r.0)
    })?;
    let mut result = accepted;
    if result.convergence.dt != grid.dt {
        escalations.push(alloc::format!(
            "dt {:e}→{:e}",
            grid.dt,
            result.convergence.dt
        ));
    }
    result.convergence.hierarchy_delta = Some(hierarchy_delta);
    result.convergence.dt_delta = Some(dt_delta);
    result.convergence.escalations = escalations;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_unitary_isolated, IsolatedConfig};
    use core::f64::consts::FRAC_PI_4;

    fn count(modes: usize, depth: usize) -> usize {
        // C(depth + modes, modes)
        let mut c = 1usize;
        for i in 1..=modes {
            c = c * (depth + i) / i;
        }
        c
    }

    #[test]
    fn enumeration_is_complete_and_unique() {
        for (m, d) in [(1, 4), (3, 2), (5, 6)] {
            let v = enumerate(m, d);
            assert_eq!(v.len(), count(m, d));
            let set: alloc::collections::BTreeSet<_> = v.iter().cloned().collect();
            assert_eq!(set.len(), v.len());
            assert!(v
                .iter()
                .all(|n| n.iter().map(|&x| x as usize).sum::<usize>() <= d));
        }
    }

    #[test]
    fn decoupled_bath_matches_unitary() {
        let spec = ProtocolSpec::sinh(0.8, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.0).unwrap();
        let r = run_heom(
            &spec,
            CouplingAngle::fixed(FRAC_PI_4).unwrap(),
            &j,
            1.0,
            &HeomConfig::default(),
        )
        .unwrap();
        assert!((r.final_fidelity - 1.0).abs() < 1e-8);
        let u = run_unitary_isolated(&spec, &IsolatedConfig::default()).unwrap();
        assert!((*r.final_state() - *u.final_state()).max_abs() < 1e-8);
    }

    #[test]
    fn sta_coupling_is_refused() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
        assert!(matches!(
            run_heom(&spec, CouplingAngle::Sta, &j, 1.0, &HeomConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn coupled_run_converges_and_loses_fidelity() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 1.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
        let r = run_heom(
            &spec,
            CouplingAngle::fixed(FRAC_PI_4).unwrap(),
            &j,
            1.0,
            &HeomConfig::default(),
        )
        .unwrap();
        let c = &r.convergence;
        assert!(c.hierarchy_delta.unwrap() < TRUNCATION_TOL);
        assert!(c.dt_delta.unwrap() < 1e-6);
        assert!(
            r.final_fidelity < 1.0 && r.final_fidelity > 0.9,
            "{}",
            r.final_fidelity
        );
        assert!(r.fidelities.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn terminators_barely_move_a_converged_result() {
        let spec = ProtocolSpec::sinh(1.0, 2.0, -1.0, 1.0, 3.0).unwrap();
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap();
        let angle = CouplingAngle::fixed(FRAC_PI_4).unwrap();
        let plain = HeomConfig {
            check_convergence: false,
            ..HeomConfig::default()
        };
        let closed = HeomConfig {
            matsubara_terminator: true,
            depth_closure: true,
            ..plain
        };
        let a = run_heom(&spec, angle, &j, 1.0, &plain)
            .unwrap()
            .final_fidelity;
        let b = run_heom(&spec, angle, &j, 1.0, &closed)
            .unwrap()
            .final_fidelity;
        assert!((a - b).abs() < 1e-5, "{a} {b}");
    }
}
