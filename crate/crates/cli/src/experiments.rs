use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use cdbound_core::bath::{BathFunctionals, SpectralDensity};
use cdbound_core::bounds::{fidelity_bound, l_bd_lz, BoundResult};
use cdbound_core::dynamics::{
    run_heom, run_pseudomode, ConvergenceInfo, HeomConfig, PseudomodeConfig, SimulationResult,
};
use cdbound_core::optimizer::{
    optimize_multi, optimize_scalar, OptimizationProblem, OptimizationResult, ProtocolFamily,
    Tolerances,
};
use cdbound_core::protocol::{q_optimal, CouplingAngle, ProtocolSpec};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    BathKind, ConfigError, CouplingMode, ExperimentConfig, ExperimentKind, FamilyKind,
    OptimizeFamily, OptimizeMethod, SolverKind,
};
use crate::output::{num, opt, Artifacts, CsvOut};
use crate::tables::read_pairs;

/// Slack on `F ≥ cos² l_BD` before a row counts as a violation.
pub const MARGIN_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    Unconverged,
    Violated,
}

pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    check_combination(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    pool.install(|| match cfg.experiment {
        ExperimentKind::BoundSweep => bound_sweep(cfg),
        ExperimentKind::DynamicsSweep => dynamics_sweep(cfg),
        ExperimentKind::Optimize => optimize(cfg),
        ExperimentKind::StaVerify => sta_verify(cfg),
        ExperimentKind::BathFunctionals => bath_functionals(cfg),
    })
}

fn check_combination(cfg: &ExperimentConfig) -> Result<()> {
    let simulates = matches!(
        cfg.experiment,
        ExperimentKind::DynamicsSweep | ExperimentKind::StaVerify
    ) || (cfg.experiment == ExperimentKind::Optimize && cfg.optimize.verify);
    if simulates {
        if cfg.bath.kind != BathKind::Underdamped {
            return Err(ConfigError::Invalid(
                "the dynamics solvers need bath.kind = \"underdamped\"".into(),
            )
            .into());
        }
        if cfg.experiment != ExperimentKind::Optimize
            && cfg.protocol.family == FamilyKind::QuasiStep
        {
            return Err(ConfigError::Invalid(
                "quasi-step drives have a divergent CD field and cannot be simulated".into(),
            )
            .into());
        }
    }
    if cfg.experiment == ExperimentKind::DynamicsSweep
        && cfg.coupling.mode == CouplingMode::Sta
        && cfg.solver.kind == SolverKind::Heom
    {
        return Err(ConfigError::Invalid(
            "co-rotating coupling needs solver.kind = \"pseudomode\"".into(),
        )
        .into());
    }
    Ok(())
}

fn density(cfg: &ExperimentConfig) -> Result<SpectralDensity> {
    let b = &cfg.bath;
    Ok(match b.kind {
        BathKind::Underdamped => SpectralDensity::underdamped(b.omega0, b.gamma, b.lambda)?,
        BathKind::Tabulated => {
            let path = b.table.as_ref().expect("validated");
            let (w, j): (Vec<f64>, Vec<f64>) = read_pairs(path)?.into_iter().unzip();
            SpectralDensity::tabulated(&w, &j, b.tail_exponent)
                .with_context(|| format!("density table {}", path.display()))?
        }
    })
}

fn angle(cfg: &ExperimentConfig) -> Result<CouplingAngle> {
    Ok(match cfg.coupling.mode {
        CouplingMode::Static => CouplingAngle::fixed(cfg.coupling.phi)?,
        CouplingMode::Sta => CouplingAngle::Sta,
    })
}

fn static_angle(cfg: &ExperimentConfig) -> Result<CouplingAngle> {
    Ok(CouplingAngle::fixed(cfg.coupling.phi)?)
}

fn protocol(cfg: &ExperimentConfig, delta: f64, steepness: f64) -> Result<ProtocolSpec> {
    let p = &cfg.protocol;
    let (tau, qi, qf) = (p.tau, p.q_initial, p.q_final);
    Ok(match p.family {
        FamilyKind::Linear => ProtocolSpec::linear(delta, tau, qi, qf)?,
        FamilyKind::Sinh => {
            ProtocolSpec::sinh_with_plateau(delta, tau, qi, qf, steepness, p.plateau)?
        }
        FamilyKind::QuasiStep => {
            let plateau = match p.plateau {
                Some(c) => c,
                None => q_optimal(cfg.coupling.phi, delta)?,
            };
            ProtocolSpec::quasi_step(delta, tau, qi, qf, plateau)?
        }
        FamilyKind::ControlPoints => {
            ProtocolSpec::control_points(delta, tau, qi, qf, &p.control_times, &p.control_values)?
        }
        FamilyKind::Tabulated => {
            let path = p.table.as_ref().expect("validated");
            let samples = read_pairs(path)?;
            let spec = ProtocolSpec::tabulated(delta, &samples)
                .with_context(|| format!("drive table {}", path.display()))?;
            if (spec.tau - tau).abs() > 1e-12 * tau {
                warn!(
                    "drive table spans τ = {}, overriding protocol.tau = {tau}",
                    spec.tau
                );
            }
            spec
        }
    })
}

fn functionals(cfg: &ExperimentConfig, j: &SpectralDensity, tau: f64) -> Result<BathFunctionals> {
    Ok(BathFunctionals::compute(
        j,
        cfg.bath.beta,
        tau,
        cfg.bath.intervals,
    )?)
}

fn horizon(cfg: &ExperimentConfig) -> Result<f64> {
    // A tabulated drive fixes its own duration.
    Ok(protocol(cfg, cfg.protocol.delta, cfg.protocol.steepness)?.tau)
}

/// `(Δ, a)` pairs in sweep order. Only the sinh family has a steepness axis.
fn sweep_points(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    let steep = if cfg.protocol.family == FamilyKind::Sinh {
        cfg.sweep.steepness.clone()
    } else {
        vec![cfg.protocol.steepness]
    };
    cfg.sweep
        .delta_values()
        .into_iter()
        .flat_map(|d| steep.iter().map(move |&a| (d, a)))
        .collect()
}

fn heom_config(cfg: &ExperimentConfig) -> HeomConfig {
    let s = &cfg.solver;
    HeomConfig {
        depth: s.depth,
        matsubara: s.matsubara,
        dt: s.dt,
        check_convergence: s.check_convergence,
        max_depth: s.max_depth,
        max_matsubara: s.max_matsubara,
        matsubara_terminator: s.matsubara_terminator,
        depth_closure: s.depth_closure,
        output_points: s.output_points,
        ..HeomConfig::default()
    }
}

fn pseudomode_config(cfg: &ExperimentConfig) -> PseudomodeConfig {
    let s = &cfg.solver;
    PseudomodeConfig {
        fock: s.fock,
        dt: s.dt,
        check_convergence: s.check_convergence,
        max_fock: s.max_fock,
        output_points: s.output_points,
        ..PseudomodeConfig::default()
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    spec: &ProtocolSpec,
    angle: CouplingAngle,
    j: &SpectralDensity,
    beta: f64,
) -> cdbound_core::Result<SimulationResult> {
    match cfg.solver.kind {
        SolverKind::Heom => run_heom(spec, angle, j, beta, &heom_config(cfg)),
        SolverKind::Pseudomode => run_pseudomode(spec, angle, j, beta, &pseudomode_config(cfg)),
    }
}

/// Serializable mirror of the solver's convergence record.
#[derive(Debug, Serialize)]
struct ConvergenceRecord {
    solver: &'static str,
    dt: f64,
    steps: usize,
    depth: Option<usize>,
    matsubara: Option<usize>,
    ado_count: Option<usize>,
    fock: Option<usize>,
    hierarchy_delta: Option<f64>,
    fock_delta: Option<f64>,
    top_fock_population: Option<f64>,
    dt_delta: Option<f64>,
    residual_weight: Option<f64>,
    reconstruction_error: Option<f64>,
    escalations: Vec<String>,
}

impl From<&ConvergenceInfo> for ConvergenceRecord {
    fn from(c: &ConvergenceInfo) -> Self {
        Self {
            solver: c.solver.name(),
            dt: c.dt,
            steps: c.steps,
            depth: c.depth,
            matsubara: c.matsubara,
            ado_count: c.ado_count,
            fock: c.fock,
            hierarchy_delta: c.hierarchy_delta,
            fock_delta: c.fock_delta,
            top_fock_population: c.top_fock_population,
            dt_delta: c.dt_delta,
            residual_weight: c.residual_weight,
            reconstruction_error: c.reconstruction_error,
            escalations: c.escalations.clone(),
        }
    }
}

fn is_convergence_failure(e: &cdbound_core::Error) -> bool {
    use cdbound_core::Error as E;
    matches!(
        e,
        E::Convergence(_)
            | E::Integrability { .. }
            | E::InsufficientMatsubara { .. }
            | E::InvalidState(_)
    )
}

fn bound_at(
    cfg: &ExperimentConfig,
    spec: &ProtocolSpec,
    angle: CouplingAngle,
    bath: &BathFunctionals,
) -> Result<BoundResult> {
    Ok(l_bd_lz(spec, angle, bath, cfg.solver.grid)?)
}

fn bound_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let j = density(cfg)?;
    let bath = functionals(cfg, &j, horizon(cfg)?)?;
    let angle = angle(cfg)?;
    let points = sweep_points(cfg);
    info!("bound sweep over {} points", points.len());
    let rows: Vec<Result<BoundResult>> = points
        .par_iter()
        .map(|&(d, a)| bound_at(cfg, &protocol(cfg, d, a)?, angle, &bath))
        .collect();
    let art = Artifacts::new(cfg)?;
    let mut csv = art.csv(
        cfg,
        "bound-sweep/1",
        &[
            "delta",
            "steepness",
            "l_bd",
            "cos2_l_bd",
            "valid",
            "error_estimate",
            "richardson_difference",
            "under_resolved",
        ],
    )?;
    for (&(d, a), r) in points.iter().zip(rows) {
        let r = r?;
        csv.row([
            num(d),
            num(a),
            num(r.l_bd),
            num(r.fidelity_lower_bound),
            r.valid.to_string(),
            num(r.error_estimate),
            num(r.richardson_difference),
            r.under_resolved.to_string(),
        ])?;
    }
    Ok(Outcome {
        status: Status::Ok,
        files: vec![art.path("config.toml"), csv.finish()?],
    })
}

#[derive(Serialize)]
struct SweepRecord {
    delta: f64,
    steepness: f64,
    status: &'static str,
    message: Option<String>,
    convergence: Option<ConvergenceRecord>,
}

fn dynamics_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let j = density(cfg)?;
    let bath = functionals(cfg, &j, horizon(cfg)?)?;
    let angle = angle(cfg)?;
    let points = sweep_points(cfg);
    info!(
        "dynamics sweep over {} points with {:?}",
        points.len(),
        cfg.solver.kind
    );
    let rows: Vec<Result<(BoundResult, cdbound_core::Result<SimulationResult>)>> = points
        .par_iter()
        .map(|&(d, a)| {
            let spec = protocol(cfg, d, a)?;
            let bound = bound_at(cfg, &spec, angle, &bath)?;
            let sim = simulate(cfg, &spec, angle, &j, cfg.bath.beta);
            info!("Δ = {d}, a = {a} done");
            Ok((bound, sim))
        })
        .collect();

    let art = Artifacts::new(cfg)?;
    let mut csv = art.csv(
        cfg,
        "dynamics-sweep/1",
        &[
            "delta",
            "steepness",
            "l_bd",
            "cos2_l_bd",
            "fidelity",
            "margin",
            "status",
            "solver",
            "depth",
            "matsubara",
            "fock",
            "dt",
        ],
    )?;
    let mut records = Vec::with_capacity(points.len());
    let mut status = Status::Ok;
    for (&(d, a), row) in points.iter().zip(rows) {
        let (bound, sim) = row?;
        let cos2 = bound.fidelity_lower_bound;
        let (fields, record) = match sim {
            Ok(r) => {
                let margin = r.final_fidelity - cos2;
                let flag = if margin >= -MARGIN_TOL {
                    "ok"
                } else {
                    "violated"
                };
                if flag == "violated" {
                    status = status.max(Status::Violated);
                }
                let c = &r.convergence;
                (
                    [
                        num(r.final_fidelity),
                        num(margin),
                        flag.to_string(),
                        c.solver.name().to_string(),
                        c.depth.map(|v| v.to_string()).unwrap_or_default(),
                        c.matsubara.map(|v| v.to_string()).unwrap_or_default(),
                        c.fock.map(|v| v.to_string()).unwrap_or_default(),
                        num(c.dt),
                    ],
                    SweepRecord {
                        delta: d,
                        steepness: a,
                        status: flag,
                        message: None,
                        convergence: Some(c.into()),
                    },
                )
            }
            Err(e) if is_convergence_failure(&e) => {
                status = status.max(Status::Unconverged);
                warn!("Δ = {d}, a = {a}: {e}");
                (
                    [
                        String::new(),
                        String::new(),
                        "unconverged".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ],
                    SweepRecord {
                        delta: d,
                        steepness: a,
                        status: "unconverged",
                        message: Some(e.to_string()),
                        convergence: None,
                    },
                )
            }
            Err(e) => return Err(anyhow!(e).context(format!("Δ = {d}, a = {a}"))),
        };
        csv.row(
            [num(d), num(a), num(bound.l_bd), num(cos2)]
                .into_iter()
                .chain(fields),
        )?;
        records.push(record);
    }
    let csv_path = csv.finish()?;
    let json = art.json("convergence.json", &records)?;
    Ok(Outcome {
        status,
        files: vec![art.path("config.toml"), csv_path, json],
    })
}

fn optimization_problem(
    cfg: &ExperimentConfig,
    bath: BathFunctionals,
) -> Result<OptimizationProblem> {
    let o = &cfg.optimize;
    let p = &cfg.protocol;
    let family = match o.family {
        OptimizeFamily::Sinh => ProtocolFamily::Sinh { plateau: p.plateau },
        OptimizeFamily::ShiftedSinh => ProtocolFamily::ShiftedSinh,
        OptimizeFamily::ControlPoints => ProtocolFamily::ControlPoints {
            times: o.control_times.clone(),
        },
    };
    Ok(OptimizationProblem {
        family,
        bounds: o.bounds.iter().map(|b| (b[0], b[1])).collect(),
        delta: p.delta,
        tau: p.tau,
        q_initial: p.q_initial,
        q_final: p.q_final,
        angle: angle(cfg)?,
        bath,
        grid: cfg.solver.grid,
        theta_dot_ceiling: o.theta_dot_ceiling,
        tolerances: Tolerances {
            parameter_rel: o.parameter_rel_tol,
            max_evaluations: o.max_evaluations,
            ..Tolerances::default()
        },
        initial: (!o.initial.is_empty()).then(|| o.initial.clone()),
        seed: o.seed,
    })
}

fn optimize(cfg: &ExperimentConfig) -> Result<Outcome> {
    let j = density(cfg)?;
    let bath = functionals(cfg, &j, cfg.protocol.tau)?;
    let problem = optimization_problem(cfg, bath)?;
    problem.validate()?;
    let scalar = match cfg.optimize.method {
        OptimizeMethod::Auto => problem.family.arity() == 1,
        OptimizeMethod::Scalar => true,
        OptimizeMethod::Simplex => false,
    };
    let result: OptimizationResult = if scalar {
        optimize_scalar(&problem)?
    } else {
        optimize_multi(&problem)?
    };
    info!(
        "optimum l_BD = {} at {:?} after {} evaluations",
        result.l_bd, result.params, result.evaluations
    );
    let mut status = if result.converged {
        Status::Ok
    } else {
        Status::Unconverged
    };
    let cos2 = fidelity_bound(result.l_bd).value;
    let verified = if cfg.optimize.verify {
        let r = simulate(cfg, &result.protocol, problem.angle, &j, cfg.bath.beta)?;
        if r.final_fidelity < cos2 - MARGIN_TOL {
            status = status.max(Status::Violated);
        }
        Some(r.final_fidelity)
    } else {
        None
    };

    let art = Artifacts::new(cfg)?;
    let path = art.path("csv");
    let mut csv = CsvOut::append(
        &path,
        cfg,
        "optimize/1",
        &[
            "config_sha256",
            "family",
            "method",
            "parameters",
            "values",
            "l_bd",
            "cos2_l_bd",
            "evaluations",
            "rejected",
            "converged",
            "at_boundary",
            "unimodal",
            "improved",
            "verified_fidelity",
        ],
    )?;
    let names = problem.family.parameter_names().join(";");
    let values = result
        .params
        .iter()
        .map(|&x| num(x))
        .collect::<Vec<_>>()
        .join(";");
    csv.row([
        cfg.hash(),
        format!("{:?}", cfg.optimize.family).to_lowercase(),
        if scalar {
            "golden-section"
        } else {
            "nelder-mead"
        }
        .to_string(),
        names,
        values,
        num(result.l_bd),
        num(cos2),
        result.evaluations.to_string(),
        result.rejected.to_string(),
        result.converged.to_string(),
        result.at_boundary.to_string(),
        result.unimodal.to_string(),
        result.improved.to_string(),
        opt(verified),
    ])?;
    Ok(Outcome {
        status,
        files: vec![art.path("config.toml"), csv.finish()?],
    })
}

fn sta_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let j = density(cfg)?;
    let spec = protocol(cfg, cfg.protocol.delta, cfg.protocol.steepness)?;
    let beta = cfg.sta_verify.beta;
    let pm = pseudomode_config(cfg);
    let sta = run_pseudomode(&spec, CouplingAngle::Sta, &j, beta, &pm)?;
    let fixed = if cfg.sta_verify.compare_static {
        Some(run_pseudomode(&spec, static_angle(cfg)?, &j, beta, &pm)?)
    } else {
        None
    };

    let art = Artifacts::new(cfg)?;
    let mut csv = art.csv(
        cfg,
        "sta-verify/1",
        &["t", "fidelity_sta", "fidelity_static"],
    )?;
    for (i, (&t, &f)) in sta.times.iter().zip(&sta.fidelities).enumerate() {
        csv.row([num(t), num(f), opt(fixed.as_ref().map(|r| r.fidelities[i]))])?;
    }
    let csv_path = csv.finish()?;
    let mut records = vec![ConvergenceRecord::from(&sta.convergence)];
    if let Some(r) = &fixed {
        records.push((&r.convergence).into());
    }
    let json = art.json("convergence.json", &records)?;

    let mut failures = Vec::new();
    if sta.final_fidelity < cfg.sta_verify.threshold {
        failures.push(format!(
            "co-rotating run ends at F = {} < {}",
            sta.final_fidelity, cfg.sta_verify.threshold
        ));
    }
    if let Some(r) = &fixed {
        if j.is_zero() {
            // Nothing to beat without a bath: both runs are unitary.
        } else if r.final_fidelity >= sta.final_fidelity {
            failures.push(format!(
                "static run scores F = {} ≥ co-rotating F = {}",
                r.final_fidelity, sta.final_fidelity
            ));
        }
    }
    let status = if failures.is_empty() {
        info!("sta-verify passed: F = {}", sta.final_fidelity);
        Status::Ok
    } else {
        eprintln!("sta-verify failed: {}", failures.join("; "));
        eprintln!("fidelity trace (t, F_sta):");
        for (t, f) in sta.times.iter().zip(&sta.fidelities) {
            eprintln!("{t:.6} {f:.12}");
        }
        Status::Violated
    };
    Ok(Outcome {
        status,
        files: vec![art.path("config.toml"), csv_path, json],
    })
}

#[derive(Serialize)]
struct BathSummary {
    s: f64,
    s_error: f64,
    beta: f64,
    horizon: f64,
    x_error: f64,
    interpolation_error: f64,
}

fn bath_functionals(cfg: &ExperimentConfig) -> Result<Outcome> {
    let j = density(cfg)?;
    let tau = horizon(cfg)?;
    let bath = functionals(cfg, &j, tau)?;
    if bath.times().is_empty() {
        bail!("no sample times");
    }
    let art = Artifacts::new(cfg)?;
    let mut csv = art.csv(cfg, "bath-functionals/1", &["t", "s", "x", "b_squared"])?;
    let s = bath.s();
    for (&t, &x) in bath.times().iter().zip(bath.x_samples()) {
        csv.row([num(t), num(s), num(x), num(s + x * x)])?;
    }
    let csv_path = csv.finish()?;
    let est = bath.s_estimate();
    let json = art.json(
        "bath.json",
        &BathSummary {
            s,
            s_error: est.error,
            beta: bath.beta(),
            horizon: bath.horizon(),
            x_error: bath.x_error(),
            interpolation_error: bath.interpolation_error(),
        },
    )?;
    Ok(Outcome {
        status: Status::Ok,
        files: vec![art.path("config.toml"), csv_path, json],
    })
}
