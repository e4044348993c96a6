//! Direct Simulation Monte Carlo for the spatially inhomogeneous Boltzmann
//! equation (Maxwell molecules, one space dimension, three velocity
//! dimensions) and its adjoint.
//!
//! A forward run ([`forward::run_forward`]) advances a particle ensemble by
//! alternating Nanbu–Babovsky collisions inside spatial cells with free
//! transport and boundary enforcement, and records every random draw and
//! discrete outcome on a [`tape::ForwardTape`]. The backward sweep
//! ([`adjoint::run_adjoint`]) replays that tape in reverse to propagate the
//! position/velocity adjoints and assemble gradients of a terminal observable
//! with respect to the initial distribution and the wall parameters.
//!
//! Thermal walls resample particle velocities, which makes trajectories
//! discontinuous in the state. Near such walls the time step is randomized
//! and the adjoint picks up score-function terms ([`score`]).

pub mod adjoint;
pub mod collision;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod forward;
pub mod observable;
pub mod rng;
pub mod score;
pub mod tape;
pub mod transport;
pub mod verify;

mod vec3;

pub use adjoint::{run_adjoint, AdjointOptions, AdjointState, GradientReport};
pub use collision::{CollisionMatrix, CollisionPair};
pub use config::{
    BoundarySpec, InflowCounts, InitialParams, Problem, SimConfig, SpatialLaw, Wall,
};
pub use ensemble::{ParticleEnsemble, Status};
pub use error::{DsmcError, Result};
pub use forward::{run_forward, simulate_objective, ForwardRun};
pub use observable::Observable;
pub use rng::{Purpose, RngStream};
pub use tape::ForwardTape;
pub use vec3::Vec3;
pub use verify::{GradStats, ParamId};
