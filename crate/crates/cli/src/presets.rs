//! The three verification experiments as ready-made configurations.

use std::fmt;
use std::str::FromStr;

use dsmc_core::verify::ErrorMode;
use dsmc_core::{BoundarySpec, InitialParams, Observable, ParamId, Problem, SimConfig, Wall};
use serde::{Deserialize, Serialize};

use crate::document::ExperimentSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Thermal walls at both ends.
    HeatConduction,
    /// Thermal left wall, specular right wall.
    MixedReflection,
    /// Inflow through both walls.
    Inflow,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::HeatConduction, Preset::MixedReflection, Preset::Inflow];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HeatConduction => "heat_conduction",
            Preset::MixedReflection => "mixed_reflection",
            Preset::Inflow => "inflow",
        }
    }

    /// Full-scale experiment: particle counts and replica numbers of the
    /// reference study.
    pub fn spec(self) -> ExperimentSpec {
        match self {
            Preset::HeatConduction => heat_conduction(),
            Preset::MixedReflection => mixed_reflection(),
            Preset::Inflow => inflow(),
        }
    }

    /// Reduced experiment that fits a single workstation.
    pub fn desk_spec(self) -> ExperimentSpec {
        self.spec().desk_scaled()
    }
}

pub const DESK_REPLICAS: usize = 16;

/// Inflow density per initial particle at desk scale. The full-scale value
/// of 1000 would inject about 40 N particles per wall and step.
pub const DESK_INFLOW_DENSITY_FACTOR: f64 = 1.0;

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown preset `{0}` (expected heat_conduction, mixed_reflection or inflow)")]
pub struct UnknownPreset(String);

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}

fn thermal(t: [f64; 3]) -> BoundarySpec {
    BoundarySpec::Thermal { temperature: t }
}

fn objective() -> Observable {
    Observable::LocalizedEnergy { center: 0.2 }
}

fn wall_params(walls: &[Wall]) -> Vec<ParamId> {
    walls.iter().flat_map(|w| ParamId::wall_temperature(*w)).collect()
}

fn heat_conduction() -> ExperimentSpec {
    ExperimentSpec {
        name: Preset::HeatConduction.name().into(),
        problem: Problem {
            sim: SimConfig {
                domain_left: 0.0,
                domain_right: 1.0,
                dt: 0.1,
                n_steps: 10,
                collision_rate: 1.0,
                n_cells: 10,
                eps: 0.01,
                seed: 2024,
                left_bc: thermal([0.6, 0.6, 0.6]),
                right_bc: thermal([0.9, 0.9, 0.9]),
            },
            initial: InitialParams::uniform(0.7),
            n_particles: 1_000,
            observable: objective(),
            inflow_counts: None,
        },
        params: wall_params(&[Wall::Left, Wall::Right]),
        delta: 0.025,
        replicas: 96,
        particles: vec![1_000, 10_000, 100_000, 1_000_000],
        error_mode: ErrorMode::Relative,
        inflow_density_factor: None,
    }
}

fn mixed_reflection() -> ExperimentSpec {
    ExperimentSpec {
        name: Preset::MixedReflection.name().into(),
        problem: Problem {
            sim: SimConfig {
                domain_left: 0.0,
                domain_right: 1.0,
                dt: 0.05,
                n_steps: 10,
                collision_rate: 1.0,
                n_cells: 10,
                eps: 0.005,
                seed: 2024,
                left_bc: thermal([0.6, 0.5, 0.8]),
                right_bc: BoundarySpec::Specular,
            },
            initial: InitialParams::uniform(1.0),
            n_particles: 1_000,
            observable: objective(),
            inflow_counts: None,
        },
        params: std::iter::once(ParamId::VelocityScale)
            .chain(wall_params(&[Wall::Left]))
            .collect(),
        delta: 0.05,
        replicas: 42,
        particles: vec![1_000, 10_000, 100_000, 1_000_000],
        error_mode: ErrorMode::Relative,
        inflow_density_factor: None,
    }
}

fn inflow() -> ExperimentSpec {
    let wall = BoundarySpec::Inflow { temperature: [4.0, 4.0, 4.0], density: 0.0 };
    ExperimentSpec {
        name: Preset::Inflow.name().into(),
        problem: Problem {
            sim: SimConfig {
                domain_left: 0.0,
                domain_right: 1.0,
                dt: 0.05,
                n_steps: 10,
                collision_rate: 1.0,
                n_cells: 40,
                eps: 0.0,
                seed: 2024,
                left_bc: wall.clone(),
                right_bc: wall,
            },
            initial: InitialParams::uniform(1.0),
            n_particles: 1_000,
            observable: objective(),
            inflow_counts: None,
        },
        params: wall_params(&[Wall::Left, Wall::Right]),
        delta: 0.05,
        replicas: 42,
        particles: vec![1_000, 10_000, 100_000, 1_000_000, 2_000_000],
        error_mode: ErrorMode::Absolute,
        inflow_density_factor: Some(1000.0),
    }
}
