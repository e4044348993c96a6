//! Free transport and the four boundary-condition families.
//!
//! Wall temperatures are per-component variances of the wall Maxwellian:
//! a wall with temperature `T` emits tangential components with variance
//! `T[1], T[2]` and a flux-weighted normal component with scale `sqrt(T[0])`.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::config::{BoundarySpec, SimConfig, Wall};
use crate::error::DsmcError;
use crate::rng::standard_normal;
use crate::vec3::Vec3;

/// A boundary map produced a position outside the domain: the particle would
/// have to cross a wall a second time within the step.
#[derive(Clone, Copy, Debug, Error, PartialEq)]
#[error("position {x} left the domain after boundary handling")]
pub struct Overshoot {
    pub x: f64,
}

impl Overshoot {
    pub fn at(self, step: usize, index: usize) -> DsmcError {
        DsmcError::MultipleCrossing { step, index, x: self.x }
    }
}

/// `x + step * v[0]`
pub fn advect(x: f64, v_post: Vec3, step: f64) -> f64 {
    x + step * v_post[0]
}

/// Draws `tau ~ N(dt, eps^2)`, rejecting non-positive values.
pub fn draw_tau<R: Rng + ?Sized>(dt: f64, eps: f64, rng: &mut R) -> f64 {
    if eps == 0.0 {
        return dt;
    }
    loop {
        let tau = dt + eps * standard_normal(rng);
        if tau > 0.0 {
            return tau;
        }
    }
}

/// True when some `tau` in `[0, dt + 3 eps]` could carry the particle past
/// either wall.
pub fn near_boundary(x: f64, v_post: Vec3, dt: f64, eps: f64, left: f64, right: f64) -> bool {
    let reach = (dt + 3.0 * eps) * v_post[0].abs();
    (x - left).min(right - x) < reach
}

/// The thermal wall a particle is heading toward and could reach within
/// `dt + 3 eps`, if any. Only such particles get a randomized step.
pub fn randomization_wall(x: f64, v_post: Vec3, config: &SimConfig) -> Option<Wall> {
    if config.eps <= 0.0 {
        return None;
    }
    let pv = v_post[0];
    let reach = (config.dt + 3.0 * config.eps) * pv.abs();
    let wall = if pv < 0.0 {
        Wall::Left
    } else if pv > 0.0 {
        Wall::Right
    } else {
        return None;
    };
    let dist = (config.wall_position(wall) - x).abs();
    (config.bc(wall).is_thermal() && dist < reach).then_some(wall)
}

/// `L + ((x' - L) mod (R - L))`, always in `[L, R)`.
pub fn apply_periodic(x_prime: f64, left: f64, right: f64) -> f64 {
    let width = right - left;
    let wrapped = left + (x_prime - left).rem_euclid(width);
    // rem_euclid may return `width` itself for tiny negative arguments.
    if wrapped >= right {
        left
    } else {
        wrapped
    }
}

/// Mirror reflection at whichever wall `x'` lies beyond.
pub fn apply_specular(
    x_prime: f64,
    v_post: Vec3,
    left: f64,
    right: f64,
) -> Result<(f64, Vec3), Overshoot> {
    let x = if x_prime < left {
        2.0 * left - x_prime
    } else if x_prime > right {
        2.0 * right - x_prime
    } else {
        return Ok((x_prime, v_post));
    };
    if !(left..=right).contains(&x) {
        return Err(Overshoot { x });
    }
    Ok((x, [-v_post[0], v_post[1], v_post[2]]))
}

/// Parameter-free draws behind a wall velocity sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallNoise {
    /// Uniform on `(0, 1]`; the normal speed is `sqrt(-2 ln u)` in units of `sqrt(T[0])`.
    pub u: f64,
    pub n2: f64,
    pub n3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSample {
    pub velocity: Vec3,
    pub noise: WallNoise,
}

impl WallSample {
    /// Velocity emitted by `wall` at temperature `t` for fixed noise.
    pub fn from_noise(wall: Wall, t: Vec3, noise: WallNoise) -> Self {
        let rho = (-2.0 * noise.u.ln()).sqrt();
        let velocity = [
            wall.inward_sign() * t[0].sqrt() * rho,
            t[1].sqrt() * noise.n2,
            t[2].sqrt() * noise.n3,
        ];
        Self { velocity, noise }
    }

    /// `d g_j / d T^j = g_j / (2 T^j)`; each component depends only on its own temperature.
    pub fn dvelocity_dtemperature(&self, t: Vec3) -> Vec3 {
        let g = self.velocity;
        [g[0] / (2.0 * t[0]), g[1] / (2.0 * t[1]), g[2] / (2.0 * t[2])]
    }
}

/// Flux-weighted half-Maxwellian sample for `wall`.
pub fn sample_wall_velocity<R: Rng + ?Sized>(wall: Wall, t: Vec3, rng: &mut R) -> WallSample {
    let u = 1.0 - rng.random::<f64>();
    let n2 = standard_normal(rng);
    let n3 = standard_normal(rng);
    WallSample::from_noise(wall, t, WallNoise { u, n2, n3 })
}

/// Thermal re-emission after the particle left through `wall`.
///
/// The particle spends the residual flight time `(x' - wall)/v'[0]` moving
/// with the resampled velocity away from the wall.
pub fn apply_thermal(
    x: f64,
    v_post: Vec3,
    tau: f64,
    wall: Wall,
    sample: &WallSample,
    left: f64,
    right: f64,
) -> Result<(f64, Vec3), Overshoot> {
    let w = match wall {
        Wall::Left => left,
        Wall::Right => right,
    };
    let x_prime = advect(x, v_post, tau);
    let x_new = w + (x_prime - w) / v_post[0] * sample.velocity[0];
    if !(left..=right).contains(&x_new) {
        return Err(Overshoot { x: x_new });
    }
    Ok((x_new, sample.velocity))
}

/// Particles entering through an inflow wall per step:
/// `ceil(dt * n * sqrt(T[0] / (2 pi)))`.
pub fn inflow_counts(t: Vec3, density: f64, dt: f64) -> usize {
    let expected = dt * density * (t[0] / (2.0 * PI)).sqrt();
    if !(expected > 0.0) {
        return 0;
    }
    (expected - 1e-12 * expected.max(1.0)).ceil() as usize
}

/// Outcome of an injection through an inflow wall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injected {
    pub x: f64,
    pub sample: WallSample,
    /// Entry time within the step, uniform on `[0, dt]`.
    pub xi: f64,
    pub clamped: bool,
}

/// Injects one particle through `wall`: `x = wall + xi * g[0]`.
///
/// A sample fast enough to cross the whole domain within `xi` is clamped to
/// the far edge of the wall-adjacent cell.
pub fn inject_inflow<R: Rng + ?Sized>(
    wall: Wall,
    t: Vec3,
    config: &SimConfig,
    rng: &mut R,
) -> Injected {
    let sample = sample_wall_velocity(wall, t, rng);
    let xi = config.dt * rng.random::<f64>();
    let w = config.wall_position(wall);
    let mut x = w + xi * sample.velocity[0];
    let (left, right) = (config.domain_left, config.domain_right);
    let clamped = !(left..=right).contains(&x);
    if clamped {
        log::warn!("inflow particle overshot the domain (x = {x}); clamping");
        x = w + wall.inward_sign() * config.cell_width();
    }
    Injected { x, sample, xi, clamped }
}

/// Temperature and density of `wall` when it is an inflow wall.
pub fn inflow_parameters(config: &SimConfig, wall: Wall) -> Option<(Vec3, f64)> {
    match config.bc(wall) {
        BoundarySpec::Inflow { temperature, density } => Some((*temperature, *density)),
        _ => None,
    }
}
