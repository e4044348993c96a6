//! Experiment descriptions and their JSON form.
//!
//! A configuration document is either a preset reference,
//!
//! ```json
//! { "preset": "heat_conduction" }
//! ```
//!
//! or a full [`ExperimentSpec`] whose `problem.sim` keys mirror
//! [`SimConfig`](dsmc_core::SimConfig) field names. Unknown keys are rejected
//! and errors carry the path of the offending key.

use std::path::Path;

use dsmc_core::verify::{problem_params, ErrorMode};
use dsmc_core::{BoundarySpec, ParamId, Problem, Wall};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::presets::{Preset, DESK_INFLOW_DENSITY_FACTOR, DESK_REPLICAS};

/// Largest particle count kept by [`ExperimentSpec::desk_scaled`].
pub const DESK_MAX_PARTICLES: usize = 100_000;

/// A problem together with its verification protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Base problem; `n_particles` is the default when no sweep is given.
    pub problem: Problem,
    /// Differentiated parameters. Defaults to every parameter the problem exposes.
    #[serde(default)]
    pub params: Vec<ParamId>,
    /// Finite-difference step.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Particle counts of the sweep.
    #[serde(default)]
    pub particles: Vec<usize>,
    #[serde(default = "default_error_mode")]
    pub error_mode: ErrorMode,
    /// When set, inflow wall densities are `factor * N` for a run with `N`
    /// initial particles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow_density_factor: Option<f64>,
}

fn default_delta() -> f64 {
    0.025
}

fn default_replicas() -> usize {
    DESK_REPLICAS
}

fn default_error_mode() -> ErrorMode {
    ErrorMode::Relative
}

impl ExperimentSpec {
    /// The base problem at `n` initial particles.
    pub fn problem_for(&self, n: usize) -> Problem {
        let mut p = self.problem.clone();
        p.n_particles = n;
        if let Some(factor) = self.inflow_density_factor {
            for wall in Wall::BOTH {
                if let BoundarySpec::Inflow { density, .. } = p.sim.bc_mut(wall) {
                    *density = factor * n as f64;
                }
            }
        }
        p
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.problem.sim.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.problem.sim.seed
    }

    /// Caps the sweep at `DESK_MAX_PARTICLES`, the replicas at
    /// `DESK_REPLICAS` and the inflow density at one particle per initial
    /// particle.
    pub fn desk_scaled(mut self) -> Self {
        let smallest = self.particles.iter().copied().min();
        self.particles.retain(|n| *n <= DESK_MAX_PARTICLES);
        if self.particles.is_empty() {
            self.particles.extend(smallest);
        }
        self.replicas = self.replicas.min(DESK_REPLICAS);
        if self.inflow_density_factor.is_some() {
            self.inflow_density_factor = Some(DESK_INFLOW_DENSITY_FACTOR);
        }
        self
    }

    /// Fills defaults that depend on the problem and checks the result.
    pub fn finish(mut self) -> Result<Self, CliError> {
        if self.params.is_empty() {
            self.params = problem_params(&self.problem);
        }
        if self.particles.is_empty() {
            self.particles.push(self.problem.n_particles);
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(CliError::InvalidArgument(format!("delta must be positive, got {}", self.delta)));
        }
        for n in &self.particles {
            self.problem_for(*n).validate()?;
        }
        Ok(self)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetRef {
    preset: Preset,
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config { path: ".".into(), message: e.to_string() })?;
    let spec = if value.get("preset").is_some() {
        from_value::<PresetRef>(value)?.preset.spec()
    } else {
        from_value::<ExperimentSpec>(value)?
    };
    spec.finish()
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

pub fn read_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: ".".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}
