//! Structure-of-arrays particle storage, initial sampling and cell binning.

use serde::{Deserialize, Serialize};

use crate::config::{InitialParams, SimConfig, SpatialLaw};
use crate::error::{DsmcError, Result};
use crate::rng::{standard_normal, Purpose, RngStream};
use crate::vec3::{scale, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Active,
    /// Waiting at its wall for injection.
    Staged,
    /// Left the domain through an inflow wall; never moves again.
    Exited,
}

/// Parameter-free draws behind the initial state, kept so the initial
/// positions and velocities can be differentiated with respect to the
/// parameters of the initial law.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitialDraws {
    /// Standard normal triples; `v0 = velocity_scale * velocity_noise`.
    pub velocity_noise: Vec<Vec3>,
    /// Uniform draws used to place the particles.
    pub position_uniform: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<f64>,
    pub v: Vec<Vec3>,
    pub status: Vec<Status>,
    /// Terminal observable per particle, filled by
    /// [`evaluate_observable`](crate::observable::evaluate_observable).
    pub r_final: Vec<f64>,
    pub initial: InitialDraws,
}

impl ParticleEnsemble {
    /// All-active ensemble from explicit states (no initial draws recorded).
    pub fn from_states(x: Vec<f64>, v: Vec<Vec3>) -> Self {
        assert_eq!(x.len(), v.len());
        let n = x.len();
        Self {
            x,
            v,
            status: vec![Status::Active; n],
            r_final: Vec::new(),
            initial: InitialDraws::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn count(&self, status: Status) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }

    /// Appends `count` staged particles parked at `position` with zero velocity.
    pub fn stage(&mut self, count: usize, position: f64) {
        self.x.extend(std::iter::repeat_n(position, count));
        self.v.extend(std::iter::repeat_n([0.0; 3], count));
        self.status.extend(std::iter::repeat_n(Status::Staged, count));
    }
}

/// Samples `n_particles` i.i.d. particles from the separable initial law.
pub fn init_ensemble(
    config: &SimConfig,
    params: &InitialParams,
    n_particles: usize,
) -> Result<ParticleEnsemble> {
    if n_particles < 2 {
        return Err(DsmcError::InvalidArgument(format!(
            "need at least 2 particles, got {n_particles}"
        )));
    }
    let rng = RngStream::new(config.seed);
    let (lo, hi) = match params.position {
        SpatialLaw::Uniform => (config.domain_left, config.domain_right),
        SpatialLaw::UniformInterval { lo, hi } => (lo, hi),
    };
    let mut x = Vec::with_capacity(n_particles);
    let mut v = Vec::with_capacity(n_particles);
    let mut draws = InitialDraws {
        velocity_noise: Vec::with_capacity(n_particles),
        position_uniform: Vec::with_capacity(n_particles),
    };
    for i in 0..n_particles {
        let u = rng.uniform(0, i, Purpose::InitPosition);
        let mut s = rng.stream(0, i, Purpose::InitVelocity);
        let noise = [standard_normal(&mut s), standard_normal(&mut s), standard_normal(&mut s)];
        x.push((lo + (hi - lo) * u).clamp(lo, hi));
        v.push(scale(noise, params.velocity_scale));
        draws.velocity_noise.push(noise);
        draws.position_uniform.push(u);
    }
    let mut ensemble = ParticleEnsemble::from_states(x, v);
    ensemble.initial = draws;
    Ok(ensemble)
}

/// Active particle indices grouped by spatial cell (compressed rows).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellBins {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl CellBins {
    pub fn n_cells(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn cell(&self, j: usize) -> &[usize] {
        &self.indices[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.n_cells()).map(move |j| self.cell(j))
    }

    pub fn total(&self) -> usize {
        self.indices.len()
    }
}

/// Cell of a position: `floor((x - L) / dx)`, with `x == R` in the last cell.
pub fn cell_index(x: f64, config: &SimConfig) -> Result<usize> {
    if !(x >= config.domain_left && x <= config.domain_right) {
        return Err(DsmcError::Invariant(format!(
            "position {x} outside [{}, {}]",
            config.domain_left, config.domain_right
        )));
    }
    let j = ((x - config.domain_left) / config.cell_width()).floor() as usize;
    Ok(j.min(config.n_cells - 1))
}

/// Bins the active particles; indices within a cell are increasing.
pub fn bin_particles(ensemble: &ParticleEnsemble, config: &SimConfig) -> Result<CellBins> {
    let n_cells = config.n_cells;
    let mut cell_of = Vec::with_capacity(ensemble.len());
    let mut counts = vec![0usize; n_cells + 1];
    for (i, &x) in ensemble.x.iter().enumerate() {
        if ensemble.status[i] != Status::Active {
            cell_of.push(usize::MAX);
            continue;
        }
        let j = cell_index(x, config)?;
        counts[j + 1] += 1;
        cell_of.push(j);
    }
    for j in 0..n_cells {
        counts[j + 1] += counts[j];
    }
    let offsets = counts.clone();
    let mut cursor = counts;
    let mut indices = vec![0usize; offsets[n_cells]];
    for (i, &j) in cell_of.iter().enumerate() {
        if j != usize::MAX {
            indices[cursor[j]] = i;
            cursor[j] += 1;
        }
    }
    Ok(CellBins { offsets, indices })
}
