//! Record of a forward run: every random draw and discrete outcome the
//! backward sweep needs.
//!
//! Steps only store what deviates from plain interior transport. A particle
//! without an event in step `k` was active (or parked) and moved for exactly
//! `dt`, possibly wrapping across a periodic wall.

use crate::collision::CollisionPair;
use crate::config::{InflowCounts, InitialParams, SimConfig, Wall};
use crate::ensemble::InitialDraws;
use crate::error::{DsmcError, Result};
use crate::score::Branch;
use crate::transport::WallSample;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WallAction {
    /// Stayed inside (or wrapped periodically).
    None,
    Specular,
    Thermal { wall: Wall, sample: WallSample },
    /// Left through an inflow wall.
    Exited { wall: Wall },
}

/// Transport of one particle in one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleEvent {
    pub index: usize,
    /// Position before transport.
    pub x: f64,
    /// Velocity after collisions, before transport.
    pub v_post: Vec3,
    /// Realized step length.
    pub tau: f64,
    pub randomized: bool,
    pub branch: Branch,
    pub action: WallAction,
}

/// A staged particle released through an inflow wall at the end of a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injection {
    pub index: usize,
    pub wall: Wall,
    pub xi: f64,
    pub x: f64,
    pub sample: WallSample,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub pairs: Vec<CollisionPair>,
    /// Sorted by particle index.
    pub events: Vec<ParticleEvent>,
    /// Sorted by particle index.
    pub injections: Vec<Injection>,
    /// Cells whose requested collision count exceeded their population.
    pub saturated_cells: usize,
}

impl StepRecord {
    pub fn event(&self, index: usize) -> Option<&ParticleEvent> {
        self.events
            .binary_search_by_key(&index, |e| e.index)
            .ok()
            .map(|k| &self.events[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTape {
    pub config: SimConfig,
    pub initial: InitialParams,
    pub n_initial: usize,
    pub inflow_counts: InflowCounts,
    pub x0: Vec<f64>,
    pub v0: Vec<Vec3>,
    pub draws: InitialDraws,
    pub steps: Vec<StepRecord>,
}

impl ForwardTape {
    /// Initial particles plus all staged ones.
    pub fn total_particles(&self) -> usize {
        self.n_initial + self.inflow_counts.per_step() * self.config.n_steps
    }

    /// Index of the first particle released at `step`.
    pub fn first_staged(&self, step: usize) -> usize {
        self.n_initial + step * self.inflow_counts.per_step()
    }

    /// Structural consistency with the run configuration.
    pub fn check(&self) -> Result<()> {
        let corrupt = |msg: String| Err(DsmcError::CorruptedTape(msg));
        if self.steps.len() != self.config.n_steps {
            return corrupt(format!(
                "{} steps recorded for a {}-step run",
                self.steps.len(),
                self.config.n_steps
            ));
        }
        if self.x0.len() != self.n_initial || self.v0.len() != self.n_initial {
            return corrupt("initial state length does not match the particle count".into());
        }
        let n = self.total_particles();
        for (k, step) in self.steps.iter().enumerate() {
            let sorted = |ix: &[usize]| ix.windows(2).all(|w| w[0] < w[1]) && ix.iter().all(|&i| i < n);
            let event_ix: Vec<usize> = step.events.iter().map(|e| e.index).collect();
            let inj_ix: Vec<usize> = step.injections.iter().map(|e| e.index).collect();
            if !sorted(&event_ix) {
                return corrupt(format!("step {k}: event indices out of order or range"));
            }
            if !sorted(&inj_ix) {
                return corrupt(format!("step {k}: injection indices out of order or range"));
            }
            if step.injections.len() != self.inflow_counts.per_step() {
                return corrupt(format!("step {k}: unexpected number of injections"));
            }
            for p in &step.pairs {
                if p.i >= n || p.i1 >= n || p.i == p.i1 {
                    return corrupt(format!("step {k}: invalid pair ({}, {})", p.i, p.i1));
                }
            }
            for e in &step.events {
                let consistent = match (e.branch, e.action) {
                    (Branch::Interior, WallAction::None) => true,
                    (Branch::Interior, _) => false,
                    (Branch::LeftExit, WallAction::Thermal { wall, .. })
                    | (Branch::LeftExit, WallAction::Exited { wall }) => wall == Wall::Left,
                    (Branch::RightExit, WallAction::Thermal { wall, .. })
                    | (Branch::RightExit, WallAction::Exited { wall }) => wall == Wall::Right,
                    (_, WallAction::Specular) => true,
                    (_, WallAction::None) => false,
                };
                if !consistent {
                    return corrupt(format!(
                        "step {k}: particle {} has branch {:?} with action {:?}",
                        e.index, e.branch, e.action
                    ));
                }
            }
        }
        Ok(())
    }
}
