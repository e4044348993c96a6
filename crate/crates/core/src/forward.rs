//! The forward DSMC loop.
//!
//! Each step bins the active particles into cells, collides Nanbu–Babovsky
//! pairs inside every cell, transports every active particle (applying the
//! boundary condition of whichever wall it crosses) and finally releases the
//! staged inflow particles of that step.

use rayon::prelude::*;

use crate::collision::{collide, relative_direction, sample_sigma, select_pairs, CollisionPair};
use crate::config::{BoundarySpec, InflowCounts, Problem, SimConfig, Wall};
use crate::ensemble::{bin_particles, init_ensemble, ParticleEnsemble, Status};
use crate::error::{DsmcError, Result};
use crate::observable::evaluate_observable;
use crate::rng::{Purpose, RngStream};
use crate::score::Branch;
use crate::tape::{ForwardTape, Injection, ParticleEvent, StepRecord, WallAction};
use crate::transport::{
    advect, apply_periodic, apply_specular, apply_thermal, draw_tau, inject_inflow,
    randomization_wall, sample_wall_velocity,
};
use crate::vec3::Vec3;

/// Final state, tape and objective value of a forward run.
#[derive(Clone, Debug)]
pub struct ForwardRun {
    pub ensemble: ParticleEnsemble,
    pub tape: ForwardTape,
    pub objective: f64,
}

struct Simulation<'a> {
    config: &'a SimConfig,
    rng: RngStream,
    counts: InflowCounts,
    n_initial: usize,
    ensemble: ParticleEnsemble,
}

fn check_counts(config: &SimConfig, counts: InflowCounts) -> Result<()> {
    for wall in Wall::BOTH {
        if counts.get(wall) > 0 && !config.bc(wall).is_inflow() {
            return Err(DsmcError::InvalidConfig(format!(
                "{wall:?} wall injects particles but is not an inflow wall"
            )));
        }
    }
    Ok(())
}

impl<'a> Simulation<'a> {
    fn new(problem: &'a Problem) -> Result<Self> {
        problem.validate()?;
        let config = &problem.sim;
        let counts = problem.inflow_counts();
        check_counts(config, counts)?;
        let mut ensemble = init_ensemble(config, &problem.initial, problem.n_particles)?;
        for _ in 0..config.n_steps {
            ensemble.stage(counts.left, config.domain_left);
            ensemble.stage(counts.right, config.domain_right);
        }
        Ok(Self {
            config,
            rng: RngStream::new(config.seed),
            counts,
            n_initial: problem.n_particles,
            ensemble,
        })
    }

    fn step(&mut self, k: usize) -> Result<StepRecord> {
        let (pairs, saturated_cells) = self.collide(k)?;
        if saturated_cells > 0 {
            log::warn!("step {k}: collision count clamped in {saturated_cells} cell(s)");
        }
        let events = self.transport(k)?;
        let injections = self.inject(k);
        Ok(StepRecord { pairs, events, injections, saturated_cells })
    }

    fn collide(&mut self, k: usize) -> Result<(Vec<CollisionPair>, usize)> {
        let bins = bin_particles(&self.ensemble, self.config)?;
        let (mu, dt) = (self.config.collision_rate, self.config.dt);
        let rng = &self.rng;
        let v = &self.ensemble.v;
        let per_cell: Vec<(Vec<(CollisionPair, Vec3, Vec3)>, bool)> = (0..bins.n_cells())
            .into_par_iter()
            .map(|j| {
                let selection = select_pairs(bins.cell(j), mu, dt, rng, k);
                let collided = selection
                    .pairs
                    .iter()
                    .map(|&(i, i1)| {
                        let sigma = sample_sigma(&mut rng.stream(k, i, Purpose::Sigma));
                        match relative_direction(v[i], v[i1]) {
                            Some(zeta) => {
                                let (a, b) = collide(v[i], v[i1], sigma);
                                (CollisionPair { i, i1, collided: true, sigma, zeta }, a, b)
                            }
                            None => (
                                CollisionPair { i, i1, collided: false, sigma, zeta: [0.0; 3] },
                                v[i],
                                v[i1],
                            ),
                        }
                    })
                    .collect();
                (collided, selection.saturated)
            })
            .collect();
        let mut pairs = Vec::new();
        let mut saturated = 0;
        for (cell, sat) in per_cell {
            saturated += usize::from(sat);
            for (pair, a, b) in cell {
                self.ensemble.v[pair.i] = a;
                self.ensemble.v[pair.i1] = b;
                pairs.push(pair);
            }
        }
        Ok((pairs, saturated))
    }

    fn transport(&mut self, k: usize) -> Result<Vec<ParticleEvent>> {
        let config = self.config;
        let rng = &self.rng;
        let ens = &mut self.ensemble;
        ens.x
            .par_iter_mut()
            .zip(ens.v.par_iter_mut())
            .zip(ens.status.par_iter_mut())
            .enumerate()
            .filter(|(_, (_, status))| **status == Status::Active)
            .filter_map(|(i, ((x, v), status))| {
                transport_particle(config, rng, k, i, x, v, status).transpose()
            })
            .collect()
    }

    fn inject(&mut self, k: usize) -> Vec<Injection> {
        let mut injections = Vec::with_capacity(self.counts.per_step());
        let mut index = self.n_initial + k * self.counts.per_step();
        for wall in Wall::BOTH {
            let BoundarySpec::Inflow { temperature, .. } = *self.config.bc(wall) else {
                continue;
            };
            for _ in 0..self.counts.get(wall) {
                let mut s = self.rng.stream(k, index, Purpose::WallSample);
                let inj = inject_inflow(wall, temperature, self.config, &mut s);
                self.ensemble.x[index] = inj.x;
                self.ensemble.v[index] = inj.sample.velocity;
                self.ensemble.status[index] = Status::Active;
                injections.push(Injection { index, wall, xi: inj.xi, x: inj.x, sample: inj.sample });
                index += 1;
            }
        }
        injections
    }
}

/// Moves one active particle through one step. Returns the tape event when
/// the step was anything other than plain deterministic interior transport.
fn transport_particle(
    config: &SimConfig,
    rng: &RngStream,
    k: usize,
    i: usize,
    x: &mut f64,
    v: &mut Vec3,
    status: &mut Status,
) -> Result<Option<ParticleEvent>> {
    let (x0, v0) = (*x, *v);
    let (left, right) = (config.domain_left, config.domain_right);
    let randomized = randomization_wall(x0, v0, config).is_some();
    let tau = if randomized {
        draw_tau(config.dt, config.eps, &mut rng.stream(k, i, Purpose::Tau))
    } else {
        config.dt
    };
    let x_prime = advect(x0, v0, tau);
    let (branch, wall) = if x_prime < left {
        (Branch::LeftExit, Wall::Left)
    } else if x_prime > right {
        (Branch::RightExit, Wall::Right)
    } else {
        *x = x_prime;
        return Ok(randomized.then_some(ParticleEvent {
            index: i,
            x: x0,
            v_post: v0,
            tau,
            randomized,
            branch: Branch::Interior,
            action: WallAction::None,
        }));
    };
    let action = match config.bc(wall) {
        BoundarySpec::Periodic => {
            *x = apply_periodic(x_prime, left, right);
            return Ok(None);
        }
        BoundarySpec::Specular => {
            let (xn, vn) = apply_specular(x_prime, v0, left, right).map_err(|o| o.at(k, i))?;
            (*x, *v) = (xn, vn);
            WallAction::Specular
        }
        BoundarySpec::Thermal { temperature } => {
            let sample =
                sample_wall_velocity(wall, *temperature, &mut rng.stream(k, i, Purpose::WallSample));
            let (xn, vn) =
                apply_thermal(x0, v0, tau, wall, &sample, left, right).map_err(|o| o.at(k, i))?;
            (*x, *v) = (xn, vn);
            WallAction::Thermal { wall, sample }
        }
        BoundarySpec::Inflow { .. } => {
            *x = config.wall_position(wall);
            *status = Status::Exited;
            WallAction::Exited { wall }
        }
    };
    Ok(Some(ParticleEvent { index: i, x: x0, v_post: v0, tau, randomized, branch, action }))
}

/// Runs `problem` forward, recording the tape and evaluating the objective.
pub fn run_forward(problem: &Problem) -> Result<ForwardRun> {
    let mut sim = Simulation::new(problem)?;
    let x0 = sim.ensemble.x[..problem.n_particles].to_vec();
    let v0 = sim.ensemble.v[..problem.n_particles].to_vec();
    let mut steps = Vec::with_capacity(problem.sim.n_steps);
    for k in 0..problem.sim.n_steps {
        steps.push(sim.step(k)?);
    }
    let mut ensemble = sim.ensemble;
    let objective = evaluate_observable(&mut ensemble, &problem.observable);
    let tape = ForwardTape {
        config: problem.sim.clone(),
        initial: problem.initial.clone(),
        n_initial: problem.n_particles,
        inflow_counts: sim.counts,
        x0,
        v0,
        draws: ensemble.initial.clone(),
        steps,
    };
    Ok(ForwardRun { ensemble, tape, objective })
}

/// Objective value of a forward run without keeping the tape.
pub fn simulate_objective(problem: &Problem) -> Result<f64> {
    let mut sim = Simulation::new(problem)?;
    for k in 0..problem.sim.n_steps {
        sim.step(k)?;
    }
    Ok(evaluate_observable(&mut sim.ensemble, &problem.observable))
}

/// Re-executes a run from its tape alone, without drawing any random numbers.
pub fn replay(tape: &ForwardTape) -> Result<ParticleEnsemble> {
    tape.check()?;
    let config = &tape.config;
    let (left, right) = (config.domain_left, config.domain_right);
    let mut ens = ParticleEnsemble::from_states(tape.x0.clone(), tape.v0.clone());
    for _ in 0..config.n_steps {
        ens.stage(tape.inflow_counts.left, left);
        ens.stage(tape.inflow_counts.right, right);
    }
    let corrupt = |k: usize, msg: String| DsmcError::CorruptedTape(format!("step {k}: {msg}"));
    for (k, step) in tape.steps.iter().enumerate() {
        for p in &step.pairs {
            let active = ens.status[p.i] == Status::Active && ens.status[p.i1] == Status::Active;
            if !active {
                return Err(corrupt(k, format!("pair ({}, {}) is not active", p.i, p.i1)));
            }
            if p.collided {
                let (a, b) = collide(ens.v[p.i], ens.v[p.i1], p.sigma);
                ens.v[p.i] = a;
                ens.v[p.i1] = b;
            }
        }
        let mut events = step.events.iter().peekable();
        for i in 0..ens.len() {
            if ens.status[i] != Status::Active {
                continue;
            }
            let event = events.next_if(|e| e.index == i);
            let Some(e) = event else {
                let x_prime = advect(ens.x[i], ens.v[i], config.dt);
                ens.x[i] = if (left..=right).contains(&x_prime) {
                    x_prime
                } else if config.is_periodic() {
                    apply_periodic(x_prime, left, right)
                } else {
                    return Err(corrupt(k, format!("particle {i} left the domain without an event")));
                };
                continue;
            };
            if e.x != ens.x[i] || e.v_post != ens.v[i] {
                return Err(corrupt(k, format!("particle {i} does not match its recorded state")));
            }
            let x_prime = advect(e.x, e.v_post, e.tau);
            match e.action {
                WallAction::None => ens.x[i] = x_prime,
                WallAction::Specular => {
                    let (xn, vn) = apply_specular(x_prime, e.v_post, left, right)
                        .map_err(|o| corrupt(k, o.to_string()))?;
                    ens.x[i] = xn;
                    ens.v[i] = vn;
                }
                WallAction::Thermal { wall, sample } => {
                    let (xn, vn) = apply_thermal(e.x, e.v_post, e.tau, wall, &sample, left, right)
                        .map_err(|o| corrupt(k, o.to_string()))?;
                    ens.x[i] = xn;
                    ens.v[i] = vn;
                }
                WallAction::Exited { wall } => {
                    ens.x[i] = config.wall_position(wall);
                    ens.status[i] = Status::Exited;
                }
            }
        }
        if let Some(e) = events.next() {
            return Err(corrupt(k, format!("event for inactive particle {}", e.index)));
        }
        for inj in &step.injections {
            if ens.status[inj.index] != Status::Staged {
                return Err(corrupt(k, format!("particle {} injected twice", inj.index)));
            }
            ens.x[inj.index] = inj.x;
            ens.v[inj.index] = inj.sample.velocity;
            ens.status[inj.index] = Status::Active;
        }
    }
    Ok(ens)
}
