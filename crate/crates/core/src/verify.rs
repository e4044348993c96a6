//! Finite-difference oracle and replica statistics for adjoint gradients.
//!
//! Replica `r` of an experiment runs with seed `derive_seed(base_seed, r)`.
//! Central differences reuse that seed for both perturbed runs, switch the
//! randomized step off and pin the inflow injection counts at their nominal
//! values, so each difference sees the same noise as its adjoint replica.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{run_adjoint, AdjointOptions, GradientReport};
use crate::config::{BoundarySpec, Problem, SpatialLaw, Wall};
use crate::error::{DsmcError, Result};
use crate::forward::{run_forward, simulate_objective};
use crate::rng::derive_seed;

/// A differentiable parameter of a [`Problem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamId {
    VelocityScale,
    PositionLo,
    PositionHi,
    /// Component `component` (0-based) of a thermal or inflow wall temperature.
    WallTemperature { wall: Wall, component: usize },
}

impl ParamId {
    /// Stable label, matching [`GradientReport::components`].
    pub fn label(&self) -> String {
        match self {
            ParamId::VelocityScale => "velocity_scale".into(),
            ParamId::PositionLo => "position_lo".into(),
            ParamId::PositionHi => "position_hi".into(),
            ParamId::WallTemperature { wall, component } => {
                let side = match wall {
                    Wall::Left => "left",
                    Wall::Right => "right",
                };
                format!("T_{side}_{}", component + 1)
            }
        }
    }

    /// Every wall temperature component of `wall`.
    pub fn wall_temperature(wall: Wall) -> [ParamId; 3] {
        [0, 1, 2].map(|component| ParamId::WallTemperature { wall, component })
    }

    fn slot<'a>(&self, problem: &'a mut Problem) -> Result<&'a mut f64> {
        let missing = || DsmcError::InvalidArgument(format!("{} is not a parameter of this run", self.label()));
        match *self {
            ParamId::VelocityScale => Ok(&mut problem.initial.velocity_scale),
            ParamId::PositionLo | ParamId::PositionHi => match &mut problem.initial.position {
                SpatialLaw::UniformInterval { lo, hi } => {
                    Ok(if *self == ParamId::PositionLo { lo } else { hi })
                }
                SpatialLaw::Uniform => Err(missing()),
            },
            ParamId::WallTemperature { wall, component } => problem
                .sim
                .bc_mut(wall)
                .temperature_mut()
                .and_then(|t| t.get_mut(component))
                .ok_or_else(missing),
        }
    }

    pub fn get(&self, problem: &Problem) -> Result<f64> {
        let mut copy = problem.clone();
        self.slot(&mut copy).map(|v| *v)
    }

    pub fn set(&self, problem: &mut Problem, value: f64) -> Result<()> {
        *self.slot(problem)? = value;
        Ok(())
    }

    /// The adjoint estimate of this parameter's derivative in `report`.
    pub fn from_report(&self, report: &GradientReport) -> Option<f64> {
        match *self {
            ParamId::VelocityScale => report.d_m_v.first().copied(),
            ParamId::PositionLo => report.d_m_x.first().copied(),
            ParamId::PositionHi => report.d_m_x.get(1).copied(),
            ParamId::WallTemperature { wall, component } => match wall {
                Wall::Left => report.d_theta_left,
                Wall::Right => report.d_theta_right,
            }
            .map(|t| t[component]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSpec {
    pub params: Vec<ParamId>,
    pub delta: f64,
    pub n_replicas: usize,
    pub base_seed: u64,
}

/// Per-parameter replica statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub params: Vec<ParamId>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n - 1`); absent for a single replica.
    pub std: Vec<Option<f64>>,
    /// `samples[r][p]`: replica `r`, parameter `p`.
    pub samples: Vec<Vec<f64>>,
}

impl GradStats {
    pub fn from_samples(params: Vec<ParamId>, samples: Vec<Vec<f64>>) -> Self {
        let n = samples.len();
        let m = params.len();
        let mut mean = vec![0.0; m];
        let mut std = vec![None; m];
        for p in 0..m {
            let col: Vec<f64> = samples.iter().map(|s| s[p]).collect();
            let mu = col.iter().sum::<f64>() / n as f64;
            mean[p] = mu;
            if n > 1 {
                let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64;
                std[p] = Some(var.sqrt());
            }
        }
        Self { params, mean, std, samples }
    }

    pub fn n_replicas(&self) -> usize {
        self.samples.len()
    }

    /// Standard error of the mean of parameter `p`.
    pub fn std_error(&self, p: usize) -> Option<f64> {
        self.std[p].map(|s| s / (self.n_replicas() as f64).sqrt())
    }
}

fn replica_problem(problem: &Problem, base_seed: u64, replica: usize) -> Problem {
    let mut p = problem.clone();
    p.sim.seed = derive_seed(base_seed, replica as u64);
    p
}

/// Central finite differences of the objective, one per replica and parameter.
pub fn fd_gradients(problem: &Problem, spec: &FdSpec) -> Result<GradStats> {
    if !(spec.delta > 0.0 && spec.delta.is_finite()) {
        return Err(DsmcError::InvalidArgument(format!("delta must be positive, got {}", spec.delta)));
    }
    if spec.n_replicas == 0 {
        return Err(DsmcError::InvalidArgument("at least one replica is required".into()));
    }
    let mut base = problem.clone();
    base.sim.eps = 0.0;
    base.inflow_counts = Some(problem.inflow_counts());
    for param in &spec.params {
        let value = param.get(&base)?;
        let positive = matches!(param, ParamId::WallTemperature { .. } | ParamId::VelocityScale);
        if positive && value - spec.delta <= 0.0 {
            return Err(DsmcError::InvalidArgument(format!(
                "perturbing {} = {value} by {} leaves the admissible range",
                param.label(),
                spec.delta
            )));
        }
    }
    let samples = (0..spec.n_replicas)
        .into_par_iter()
        .map(|r| {
            let p = replica_problem(&base, spec.base_seed, r);
            spec.params
                .iter()
                .map(|param| {
                    let value = param.get(&p)?;
                    let (mut plus, mut minus) = (p.clone(), p.clone());
                    param.set(&mut plus, value + spec.delta)?;
                    param.set(&mut minus, value - spec.delta)?;
                    Ok((simulate_objective(&plus)? - simulate_objective(&minus)?) / (2.0 * spec.delta))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradStats::from_samples(spec.params.clone(), samples))
}

/// Single-parameter form of [`fd_gradients`].
pub fn fd_gradient(problem: &Problem, param: ParamId, delta: f64, n_replicas: usize, base_seed: u64) -> Result<GradStats> {
    fd_gradients(problem, &FdSpec { params: vec![param], delta, n_replicas, base_seed })
}

/// Forward and adjoint run per replica, returning the requested components.
pub fn adjoint_gradient_stats(
    problem: &Problem,
    params: &[ParamId],
    n_replicas: usize,
    base_seed: u64,
    options: &AdjointOptions,
) -> Result<GradStats> {
    if n_replicas == 0 {
        return Err(DsmcError::InvalidArgument("at least one replica is required".into()));
    }
    let samples = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let p = replica_problem(problem, base_seed, r);
            let run = run_forward(&p)?;
            let report = run_adjoint(&run.tape, &run.ensemble, &p.observable, options)?;
            params
                .iter()
                .map(|param| {
                    param.from_report(&report).ok_or_else(|| {
                        DsmcError::InvalidArgument(format!("{} is not a parameter of this run", param.label()))
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradStats::from_samples(params.to_vec(), samples))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Relative,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub param: ParamId,
    pub error: f64,
    pub mode: ErrorMode,
    /// A relative comparison fell back to absolute because the reference vanished.
    pub fallback: bool,
}

/// `|mean_adjoint - mean_fd|`, divided by `|mean_fd|` in relative mode.
pub fn compare(adjoint: &GradStats, fd: &GradStats, mode: ErrorMode) -> Result<Vec<ErrorEntry>> {
    if adjoint.params != fd.params {
        return Err(DsmcError::InvalidArgument("gradient statistics cover different parameters".into()));
    }
    Ok(adjoint
        .params
        .iter()
        .enumerate()
        .map(|(p, param)| {
            let diff = (adjoint.mean[p] - fd.mean[p]).abs();
            let reference = fd.mean[p].abs();
            match mode {
                ErrorMode::Relative if reference >= 1e-14 => ErrorEntry {
                    param: *param,
                    error: diff / reference,
                    mode,
                    fallback: false,
                },
                ErrorMode::Relative => ErrorEntry {
                    param: *param,
                    error: diff,
                    mode: ErrorMode::Absolute,
                    fallback: true,
                },
                ErrorMode::Absolute => ErrorEntry { param: *param, error: diff, mode, fallback: false },
            }
        })
        .collect())
}

/// Parameters a problem exposes, in report order.
pub fn problem_params(problem: &Problem) -> Vec<ParamId> {
    let mut out = vec![ParamId::VelocityScale];
    if matches!(problem.initial.position, SpatialLaw::UniformInterval { .. }) {
        out.extend([ParamId::PositionLo, ParamId::PositionHi]);
    }
    for wall in Wall::BOTH {
        if matches!(problem.sim.bc(wall), BoundarySpec::Thermal { .. } | BoundarySpec::Inflow { .. }) {
            out.extend(ParamId::wall_temperature(wall));
        }
    }
    out
}
