//! Run configuration.
//!
//! Wall temperatures are per-component *variances* of the wall Maxwellian:
//! a thermal wall with `temperature = [T1, T2, T3]` emits velocities whose
//! tangential components have variance `T2`, `T3` and whose normal component
//! follows the flux-weighted (Rayleigh) law with scale `sqrt(T1)`.

use serde::{Deserialize, Serialize};

use crate::error::{DsmcError, Result};
use crate::observable::Observable;
use crate::transport;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    Left,
    Right,
}

impl Wall {
    pub const BOTH: [Wall; 2] = [Wall::Left, Wall::Right];

    /// Sign of the inward normal velocity component.
    pub fn inward_sign(self) -> f64 {
        match self {
            Wall::Left => 1.0,
            Wall::Right => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Periodic,
    Specular,
    Thermal { temperature: Vec3 },
    Inflow { temperature: Vec3, density: f64 },
}

impl BoundarySpec {
    pub fn temperature(&self) -> Option<Vec3> {
        match self {
            BoundarySpec::Thermal { temperature } | BoundarySpec::Inflow { temperature, .. } => {
                Some(*temperature)
            }
            _ => None,
        }
    }

    pub fn temperature_mut(&mut self) -> Option<&mut Vec3> {
        match self {
            BoundarySpec::Thermal { temperature } | BoundarySpec::Inflow { temperature, .. } => {
                Some(temperature)
            }
            _ => None,
        }
    }

    pub fn is_thermal(&self) -> bool {
        matches!(self, BoundarySpec::Thermal { .. })
    }

    pub fn is_inflow(&self) -> bool {
        matches!(self, BoundarySpec::Inflow { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain_left: f64,
    pub domain_right: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Collision rate `mu`; each step selects `ceil(N_cell * dt * mu) / 2` pairs per cell.
    pub collision_rate: f64,
    pub n_cells: usize,
    /// Standard deviation of the randomized step used next to thermal walls.
    pub eps: f64,
    pub seed: u64,
    pub left_bc: BoundarySpec,
    pub right_bc: BoundarySpec,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DsmcError::InvalidConfig(msg));
        if !(self.domain_left.is_finite() && self.domain_right.is_finite()) {
            return bad("domain bounds must be finite".into());
        }
        if self.domain_right <= self.domain_left {
            return bad(format!(
                "domain_right ({}) must exceed domain_left ({})",
                self.domain_right, self.domain_left
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps must be non-negative, got {}", self.eps));
        }
        if self.eps >= self.dt / 3.0 {
            return bad(format!("eps ({}) must be below dt/3 ({})", self.eps, self.dt / 3.0));
        }
        if self.n_cells == 0 {
            return bad("n_cells must be at least 1".into());
        }
        if !(self.collision_rate >= 0.0 && self.collision_rate.is_finite()) {
            return bad(format!("collision_rate must be non-negative, got {}", self.collision_rate));
        }
        let left_periodic = matches!(self.left_bc, BoundarySpec::Periodic);
        let right_periodic = matches!(self.right_bc, BoundarySpec::Periodic);
        if left_periodic != right_periodic {
            return bad("a periodic wall must be paired with a periodic wall".into());
        }
        for wall in Wall::BOTH {
            let bc = self.bc(wall);
            if let Some(t) = bc.temperature() {
                if t.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                    return bad(format!("{wall:?} wall temperature must be positive, got {t:?}"));
                }
            }
            if let BoundarySpec::Inflow { density, .. } = bc {
                if !(*density >= 0.0 && density.is_finite()) {
                    return bad(format!("{wall:?} inflow density must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn bc(&self, wall: Wall) -> &BoundarySpec {
        match wall {
            Wall::Left => &self.left_bc,
            Wall::Right => &self.right_bc,
        }
    }

    pub fn bc_mut(&mut self, wall: Wall) -> &mut BoundarySpec {
        match wall {
            Wall::Left => &mut self.left_bc,
            Wall::Right => &mut self.right_bc,
        }
    }

    pub fn wall_position(&self, wall: Wall) -> f64 {
        match wall {
            Wall::Left => self.domain_left,
            Wall::Right => self.domain_right,
        }
    }

    pub fn width(&self) -> f64 {
        self.domain_right - self.domain_left
    }

    pub fn cell_width(&self) -> f64 {
        self.width() / self.n_cells as f64
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn has_thermal(&self) -> bool {
        self.left_bc.is_thermal() || self.right_bc.is_thermal()
    }

    pub fn has_inflow(&self) -> bool {
        self.left_bc.is_inflow() || self.right_bc.is_inflow()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.left_bc, BoundarySpec::Periodic)
    }
}

/// Spatial law of the initial positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialLaw {
    /// Uniform on the whole domain; carries no parameters.
    Uniform,
    /// Uniform on `[lo, hi]`, parameterized by both endpoints.
    UniformInterval { lo: f64, hi: f64 },
}

/// Separable initial data: isotropic Gaussian velocities with standard
/// deviation `velocity_scale` times a spatial law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialParams {
    pub velocity_scale: f64,
    pub position: SpatialLaw,
}

impl InitialParams {
    pub fn uniform(velocity_scale: f64) -> Self {
        Self { velocity_scale, position: SpatialLaw::Uniform }
    }
}

/// Number of particles injected per step through each inflow wall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InflowCounts {
    pub left: usize,
    pub right: usize,
}

impl InflowCounts {
    pub fn get(&self, wall: Wall) -> usize {
        match wall {
            Wall::Left => self.left,
            Wall::Right => self.right,
        }
    }

    pub fn per_step(&self) -> usize {
        self.left + self.right
    }

    /// Steady-flux counts for the inflow walls of `config`.
    pub fn from_config(config: &SimConfig) -> Self {
        let count = |bc: &BoundarySpec| match bc {
            BoundarySpec::Inflow { temperature, density } => {
                transport::inflow_counts(*temperature, *density, config.dt)
            }
            _ => 0,
        };
        Self { left: count(&config.left_bc), right: count(&config.right_bc) }
    }
}

/// Everything a forward run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub sim: SimConfig,
    pub initial: InitialParams,
    pub n_particles: usize,
    pub observable: Observable,
    /// Pinned injection counts. When absent they follow from the inflow walls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow_counts: Option<InflowCounts>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if !(self.initial.velocity_scale >= 0.0 && self.initial.velocity_scale.is_finite()) {
            return Err(DsmcError::InvalidConfig(format!(
                "velocity_scale must be non-negative, got {}",
                self.initial.velocity_scale
            )));
        }
        if let SpatialLaw::UniformInterval { lo, hi } = self.initial.position {
            if !(lo <= hi && lo >= self.sim.domain_left && hi <= self.sim.domain_right) {
                return Err(DsmcError::InvalidConfig(format!(
                    "initial interval [{lo}, {hi}] must lie inside the domain"
                )));
            }
        }
        Ok(())
    }

    pub fn inflow_counts(&self) -> InflowCounts {
        self.inflow_counts.unwrap_or_else(|| InflowCounts::from_config(&self.sim))
    }

    /// Initial particles plus every particle staged for injection.
    pub fn total_particles(&self) -> usize {
        self.n_particles + self.inflow_counts().per_step() * self.sim.n_steps
    }
}
