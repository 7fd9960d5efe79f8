//! Minimization of `l_BD` over drive-protocol parameters.
//!
//! The endpoints `q_i`, `q_f` live in the problem, never in the parameter
//! vector, so every candidate reaches them exactly. Candidates whose CD field
//! exceeds a ceiling are rejected rather than scored.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bath::BathFunctionals;
use crate::bounds::{l_bd_lz, DEFAULT_GRID};
use crate::error::{domain, Error, Result};
use crate::protocol::{CouplingAngle, ProtocolSpec};

pub const DEFAULT_THETA_DOT_CEILING: f64 = 50.0;
pub const MAX_FREE_PARAMETERS: usize = 8;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// How the free parameters map onto a drive.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolFamily {
    /// `[a]`, optionally with a fixed plateau.
    Sinh { plateau: Option<f64> },
    /// `[a, plateau]`.
    ShiftedSinh,
    /// Interior values at fixed knot times.
    ControlPoints { times: Vec<f64> },
}

impl ProtocolFamily {
    pub fn parameter_names(&self) -> Vec<String> {
        match self {
            Self::Sinh { .. } => vec!["steepness".into()],
            Self::ShiftedSinh => vec!["steepness".into(), "plateau".into()],
            Self::ControlPoints { times } => {
                (1..=times.len()).map(|i| alloc::format!("q{i}")).collect()
            }
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Self::Sinh { .. } => 1,
            Self::ShiftedSinh => 2,
            Self::ControlPoints { times } => times.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative width at which the golden-section bracket stops.
    pub parameter_rel: f64,
    /// Nelder–Mead stops when the simplex values spread less than this.
    pub objective_abs: f64,
    /// Nelder–Mead stops when the simplex shrinks below this (unit box).
    pub simplex_size: f64,
    pub max_evaluations: usize,
    /// Points in the scalar pre-scan.
    pub scan_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            parameter_rel: 1e-4,
            objective_abs: 1e-10,
            simplex_size: 1e-5,
            max_evaluations: 2000,
            scan_points: 41,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    pub family: ProtocolFamily,
    /// Box `[lower, upper]` per free parameter.
    pub bounds: Vec<(f64, f64)>,
    pub delta: f64,
    pub tau: f64,
    pub q_initial: f64,
    pub q_final: f64,
    pub angle: CouplingAngle,
    pub bath: BathFunctionals,
    pub grid: usize,
    pub theta_dot_ceiling: f64,
    pub tolerances: Tolerances,
    /// Starting point of the first simplex; the box centre when absent.
    pub initial: Option<Vec<f64>>,
    pub seed: u64,
}

/// Outcome of scoring one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Scored(f64),
    /// The CD field peaks above the ceiling.
    Rejected {
        max_theta_dot: f64,
    },
}

impl Evaluation {
    fn objective(self) -> f64 {
        match self {
            Self::Scored(l) => l,
            Self::Rejected { .. } => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub params: Vec<f64>,
    pub l_bd: f64,
    pub protocol: ProtocolSpec,
    pub evaluations: usize,
    pub rejected: usize,
    pub converged: bool,
    /// Some parameter sits on its box bound.
    pub at_boundary: bool,
    /// Scalar only: the pre-scan looked unimodal.
    pub unimodal: bool,
    /// Multi only: the search beat every starting point.
    pub improved: bool,
}

impl OptimizationProblem {
    /// Sinh family with free steepness, `φ`-coupled to `bath`.
    pub fn sinh(
        delta: f64,
        tau: f64,
        q_initial: f64,
        q_final: f64,
        angle: CouplingAngle,
        bath: BathFunctionals,
        bounds: (f64, f64),
    ) -> Self {
        Self {
            family: ProtocolFamily::Sinh { plateau: None },
            bounds: vec![bounds],
            delta,
            tau,
            q_initial,
            q_final,
            angle,
            bath,
            grid: DEFAULT_GRID,
            theta_dot_ceiling: DEFAULT_THETA_DOT_CEILING,
            tolerances: Tolerances::default(),
            initial: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.family.arity();
        if k == 0 || k > MAX_FREE_PARAMETERS {
            return Err(domain!(
                "between 1 and {MAX_FREE_PARAMETERS} free parameters are supported, got {k}"
            ));
        }
        if self.bounds.len() != k {
            return Err(domain!(
                "{k} free parameters but {} bounds",
                self.bounds.len()
            ));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(domain!(
                    "bounds for parameter {i} are not an ordered finite pair: [{lo}, {hi}]"
                ));
            }
        }
        if let Some(x) = &self.initial {
            if x.len() != k {
                return Err(domain!(
                    "initial point has {} entries, expected {k}",
                    x.len()
                ));
            }
        }
        if !(self.theta_dot_ceiling > 0.0) {
            return Err(domain!("θ̇ ceiling must be positive"));
        }
        Ok(())
    }

    pub fn protocol(&self, params: &[f64]) -> Result<ProtocolSpec> {
        let (d, t, qi, qf) = (self.delta, self.tau, self.q_initial, self.q_final);
        match &self.family {
            ProtocolFamily::Sinh { plateau } => {
                ProtocolSpec::sinh_with_plateau(d, t, qi, qf, params[0], *plateau)
            }
            ProtocolFamily::ShiftedSinh => {
                ProtocolSpec::sinh_with_plateau(d, t, qi, qf, params[0], Some(params[1]))
            }
            ProtocolFamily::ControlPoints { times } => {
                ProtocolSpec::control_points(d, t, qi, qf, times, params)
            }
        }
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        let spec = self.protocol(params)?;
        let td = spec.max_theta_dot(4000)?;
        if td > self.theta_dot_ceiling {
            return Ok(Evaluation::Rejected { max_theta_dot: td });
        }
        Ok(Evaluation::Scored(
            l_bd_lz(&spec, self.angle, &self.bath, self.grid)?.l_bd,
        ))
    }
}

struct Counter<'a> {
    problem: &'a OptimizationProblem,
    evaluations: usize,
    rejected: usize,
}

impl Counter<'_> {
    fn f(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let e = self.problem.evaluate(x)?;
        if matches!(e, Evaluation::Rejected { .. }) {
            self.rejected += 1;
        }
        Ok(e.objective())
    }
}

fn finish(
    problem: &OptimizationProblem,
    counter: Counter,
    params: Vec<f64>,
    l_bd: f64,
    converged: bool,
    unimodal: bool,
    improved: bool,
) -> Result<OptimizationResult> {
    if !l_bd.is_finite() {
        return Err(Error::Convergence(alloc::format!(
            "every candidate exceeded the θ̇ ceiling of {}",
            problem.theta_dot_ceiling
        )));
    }
    let at_boundary = params.iter().zip(&problem.bounds).any(|(&x, &(lo, hi))| {
        let slack = 1e-3 * (hi - lo);
        hi > lo && (x - lo <= slack || hi - x <= slack)
    });
    Ok(OptimizationResult {
        protocol: problem.protocol(&params)?,
        params,
        l_bd,
        evaluations: counter.evaluations,
        rejected: counter.rejected,
        converged,
        at_boundary,
        unimodal,
        improved,
    })
}

fn scan_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    // Geometric spacing for positive brackets spanning a decade or more.
    let geometric = lo > 0.0 && hi / lo >= 10.0;
    (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            if i == n - 1 {
                hi
            } else if geometric {
                lo * (hi / lo).powf(s)
            } else {
                lo + (hi - lo) * s
            }
        })
        .collect()
}

/// Values fall then rise, ties allowed.
fn is_unimodal(v: &[f64]) -> bool {
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs());
    let mut rising = false;
    for w in v.windows(2) {
        if tie(w[0], w[1]) {
            continue;
        }
        if w[1] > w[0] {
            rising = true;
        } else if rising {
            return false;
        }
    }
    v.iter().all(|x| x.is_finite())
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Golden-section search on `[a, b]` seeded with a known interior value.
fn golden(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    rel: f64,
    budget: usize,
) -> Result<(f64, f64, bool)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..budget {
        if (b - a) <= rel * c.abs().max(d.abs()).max(1e-12) {
            return Ok(if fc <= fd {
                (c, fc, true)
            } else {
                (d, fd, true)
            });
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd {
        (c, fc, false)
    } else {
        (d, fd, false)
    })
}

/// Pre-scan then golden section (or repeated local re-gridding when the scan
/// is not unimodal). Never returns worse than the best scanned point.
pub fn optimize_scalar(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    if problem.family.arity() != 1 {
        return Err(domain!(
            "scalar optimization needs exactly one free parameter"
        ));
    }
    let (lo, hi) = problem.bounds[0];
    let tol = problem.tolerances;
    let mut counter = Counter {
        problem,
        evaluations: 0,
        rejected: 0,
    };
    if lo == hi {
        let l = counter.f(&[lo])?;
        return finish(problem, counter, vec![lo], l, true, true, false);
    }
    let start = problem.initial.as_ref().map_or(0.5 * (lo + hi), |x| x[0]);
    let l0 = counter.f(&[start])?;
    if l0 == 0.0 {
        return finish(problem, counter, vec![start], 0.0, true, true, false);
    }

    let xs = scan_grid(lo, hi, tol.scan_points.max(5));
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        ys.push(counter.f(&[x])?);
    }
    let i = argmin(&ys);
    let (mut best_x, mut best_y) = (xs[i], ys[i]);
    let unimodal = is_unimodal(&ys);
    let left = xs[i.saturating_sub(1)];
    let right = xs[(i + 1).min(xs.len() - 1)];
    let budget = tol.max_evaluations.saturating_sub(counter.evaluations);

    let converged = if unimodal {
        let mut g = |x: f64| counter.f(&[x]);
        let (x, y, ok) = golden(&mut g, left, right, tol.parameter_rel, budget)?;
        if y < best_y {
            best_x = x;
            best_y = y;
        }
        ok
    } else {
        // Zoom around the incumbent until the window is narrow enough.
        let (mut a, mut b) = (left, right);
        let mut ok = false;
        while counter.evaluations + 11 <= tol.max_evaluations {
            if (b - a) <= tol.parameter_rel * best_x.abs().max(1e-12) {
                ok = true;
                break;
            }
            let sub = scan_grid(a, b, 11);
            let mut vals = Vec::with_capacity(sub.len());
            for &x in &sub {
                vals.push(counter.f(&[x])?);
            }
            let k = argmin(&vals);
            if vals[k] < best_y {
                best_x = sub[k];
                best_y = vals[k];
            }
            a = sub[k.saturating_sub(1)];
            b = sub[(k + 1).min(sub.len() - 1)];
        }
        ok
    };
    if l0 < best_y {
        best_x = start;
        best_y = l0;
    }
    finish(
        problem,
        counter,
        vec![best_x],
        best_y,
        converged,
        unimodal,
        true,
    )
}

struct Box01<'a> {
    bounds: &'a [(f64, f64)],
    free: Vec<usize>,
    fixed: Vec<f64>,
}

impl Box01<'_> {
    fn to_params(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.fixed.clone();
        for (k, &i) in self.free.iter().enumerate() {
            let (lo, hi) = self.bounds[i];
            x[i] = lo + (hi - lo) * u[k].clamp(0.0, 1.0);
        }
        x
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| {
                let (lo, hi) = self.bounds[i];
                ((x[i] - lo) / (hi - lo)).clamp(0.0, 1.0)
            })
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn clamp_unit(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
}

/// Nelder–Mead in the unit box from `u0`; returns `(u*, f*, converged)`.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    u0: Vec<f64>,
    f0: f64,
    tol: &Tolerances,
    budget: usize,
) -> Result<(Vec<f64>, f64, bool)> {
    let n = u0.len();
    let mut simplex = vec![(u0.clone(), f0)];
    for k in 0..n {
        let mut v = u0.clone();
        v[k] = if v[k] + 0.1 <= 1.0 {
            v[k] + 0.1
        } else {
            v[k] - 0.1
        };
        let fv = f(&v)?;
        simplex.push((v, fv));
    }
    let mut used = n;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    loop {
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0f64, f64::max);
        if (spread.is_finite() && spread <= tol.objective_abs && size <= tol.simplex_size.sqrt())
            || size <= tol.simplex_size
        {
            let (u, fu) = simplex.swap_remove(0);
            return Ok((u, fu, true));
        }
        if used + n + 2 > budget {
            let (u, fu) = simplex.swap_remove(0);
            return Ok((u, fu, false));
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |s: f64, worst: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + s * (c - w))
                .collect();
            clamp_unit(&mut p);
            p
        };
        let worst = simplex[n].0.clone();
        let xr = along(1.0, &worst);
        let fr = f(&xr)?;
        used += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0, &worst);
            let fe = f(&xe)?;
            used += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(0.5, &worst);
                let v = f(&x)?;
                (x, v)
            } else {
                let x = along(-0.5, &worst);
                let v = f(&x)?;
                (x, v)
            };
            used += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex[1..].iter_mut() {
                    for (x, b) in v.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    *fv = f(v)?;
                    used += 1;
                }
            }
        }
        order(&mut simplex);
    }
}

/// Nelder–Mead with three deterministic starts: the supplied initial point
/// (or the box centre), then two draws from a ChaCha stream keyed by `seed`.
pub fn optimize_multi(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let k = problem.family.arity();
    let free: Vec<usize> = (0..k)
        .filter(|&i| problem.bounds[i].1 > problem.bounds[i].0)
        .collect();
    let centre: Vec<f64> = problem
        .bounds
        .iter()
        .map(|&(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let map = Box01 {
        bounds: &problem.bounds,
        free,
        fixed: problem.bounds.iter().map(|&(lo, _)| lo).collect(),
    };
    let mut counter = Counter {
        problem,
        evaluations: 0,
        rejected: 0,
    };
    if map.free.is_empty() {
        let x = map.to_params(&[]);
        let l = counter.f(&x)?;
        return finish(problem, counter, x, l, true, true, false);
    }
    let tol = problem.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let first = map.to_unit(problem.initial.as_ref().unwrap_or(&centre));
    let mut starts = vec![first];
    for _ in 0..2 {
        starts.push((0..map.free.len()).map(|_| uniform(&mut rng)).collect());
    }

    let per_start = tol.max_evaluations / starts.len();
    let mut best_u = starts[0].clone();
    let mut best_f = f64::INFINITY;
    let mut best_start = f64::INFINITY;
    let mut converged = true;
    for u0 in starts {
        let f0 = counter.f(&map.to_params(&u0))?;
        best_start = best_start.min(f0);
        if f0 == 0.0 {
            best_u = u0;
            best_f = 0.0;
            break;
        }
        let mut g = |u: &[f64]| counter.f(&map.to_params(u));
        let (u, fu, ok) = nelder_mead(&mut g, u0, f0, &tol, per_start)?;
        converged &= ok;
        if fu < best_f {
            best_f = fu;
            best_u = u;
        }
    }
    let improved = best_f < best_start;
    finish(
        problem,
        counter,
        map.to_params(&best_u),
        best_f,
        converged,
        true,
        improved,
    )
}
