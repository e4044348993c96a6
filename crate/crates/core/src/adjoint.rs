//! Backward sweep over a forward tape.
//!
//! With `J = (1/N) sum_i r(x_{M,i}, v_{M,i})` the sweep carries
//! `alpha = -N dJ/dx` and `beta = -N dJ/dv` from `t_M` back to `t_0`. Each
//! step first pulls the adjoints back through the transport and boundary map
//! of every particle, then through the collision of every pair
//! (`B = A^T` outermost). Wall-parameter gradients are accumulated on the
//! way, and the initial-law gradients are read off at `t_0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::apply_adjoint_pair;
use crate::config::{BoundarySpec, SimConfig, SpatialLaw, Wall};
use crate::ensemble::{ParticleEnsemble, Status};
use crate::error::{DsmcError, Result};
use crate::observable::Observable;
use crate::score::grad_log_p;
use crate::tape::{ForwardTape, WallAction};
use crate::vec3::{dot, scale, sub, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdjointState {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec3>,
}

impl AdjointState {
    pub fn zeros(n: usize) -> Self {
        Self { alpha: vec![0.0; n], beta: vec![[0.0; 3]; n] }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdjointOptions {
    /// Include the score-function terms of randomized steps.
    pub score_terms: bool,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self { score_terms: true }
    }
}

/// Gradients of one forward/adjoint pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub n_particles: usize,
    /// Initial plus staged particles; the normalization of the objective.
    pub n_total: usize,
    pub seed: u64,
    pub config_hash: String,
    pub objective: f64,
    /// Derivative with respect to the initial velocity scale.
    pub d_m_v: Vec<f64>,
    /// Derivatives with respect to the initial interval `(lo, hi)`, when parameterized.
    pub d_m_x: Vec<f64>,
    pub d_theta_left: Option<Vec3>,
    pub d_theta_right: Option<Vec3>,
    /// Some adjoint value was not finite.
    pub nonfinite: bool,
}

impl GradientReport {
    /// Named scalar components in a fixed order.
    pub fn components(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(d) = self.d_m_v.first() {
            out.push(("velocity_scale".to_string(), *d));
        }
        for (name, d) in ["position_lo", "position_hi"].iter().zip(&self.d_m_x) {
            out.push((name.to_string(), *d));
        }
        for (side, theta) in [("left", self.d_theta_left), ("right", self.d_theta_right)] {
            if let Some(t) = theta {
                for (j, d) in t.iter().enumerate() {
                    out.push((format!("T_{side}_{}", j + 1), *d));
                }
            }
        }
        out
    }

    /// Flat key/value JSON object.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("n_particles".into(), self.n_particles.into());
        map.insert("n_total".into(), self.n_total.into());
        map.insert("seed".into(), self.seed.into());
        map.insert("config_hash".into(), self.config_hash.clone().into());
        map.insert("objective".into(), self.objective.into());
        map.insert("nonfinite".into(), self.nonfinite.into());
        for (name, d) in self.components() {
            map.insert(format!("d_{name}"), d.into());
        }
        serde_json::Value::Object(map)
    }
}

/// Stable 64-bit FNV-1a hash of the JSON form of a configuration.
pub fn config_hash(config: &SimConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configurations always serialize");
    let hash = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{hash:016x}")
}

/// Accumulated wall-parameter gradients `-(1/N) sum ...` (not yet scaled).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WallSums {
    pub left: Vec3,
    pub right: Vec3,
}

impl WallSums {
    fn add(&mut self, wall: Wall, term: Vec3) {
        let acc = match wall {
            Wall::Left => &mut self.left,
            Wall::Right => &mut self.right,
        };
        for j in 0..3 {
            acc[j] += term[j];
        }
    }

    fn merge(&mut self, other: WallSums) {
        self.add(Wall::Left, other.left);
        self.add(Wall::Right, other.right);
    }
}

/// `alpha = -dr/dx`, `beta = -dr/dv` at every active particle; zero elsewhere.
/// The flag reports a non-finite gradient.
pub fn terminal_conditions(ensemble: &ParticleEnsemble, observable: &Observable) -> (AdjointState, bool) {
    let mut state = AdjointState::zeros(ensemble.len());
    let mut nonfinite = false;
    for i in 0..ensemble.len() {
        if ensemble.status[i] != Status::Active {
            continue;
        }
        let (gx, gv) = observable.gradient(ensemble.x[i], ensemble.v[i]);
        nonfinite |= !gx.is_finite() || gv.iter().any(|g| !g.is_finite());
        state.alpha[i] = -gx;
        state.beta[i] = scale(gv, -1.0);
    }
    (state, nonfinite)
}

fn add_e1(b: Vec3, s: f64) -> Vec3 {
    [b[0] + s, b[1], b[2]]
}

/// Pulls `state` from `t_{k+1}` back to `t_k`.
///
/// `status` holds the particle statuses at `t_{k+1}` on entry and at `t_k` on
/// return. `r_final` feeds the score terms of randomized steps. Returns the
/// step's unscaled contributions `sum [beta . dg + alpha * s * dg_1]` to the
/// wall-parameter gradients.
pub fn backstep(
    state: &mut AdjointState,
    status: &mut [Status],
    tape: &ForwardTape,
    k: usize,
    r_final: &[f64],
    options: &AdjointOptions,
) -> Result<WallSums> {
    let config = &tape.config;
    let step = tape
        .steps
        .get(k)
        .ok_or_else(|| DsmcError::CorruptedTape(format!("no record for step {k}")))?;
    let (left, right, dt) = (config.domain_left, config.domain_right, config.dt);
    let corrupt = |msg: String| DsmcError::CorruptedTape(format!("step {k}: {msg}"));
    let mut sums = WallSums::default();
    let mut updates: Vec<(usize, f64, Vec3)> =
        Vec::with_capacity(step.events.len() + step.injections.len());

    for e in &step.events {
        let i = e.index;
        let (a, b) = (state.alpha[i], state.beta[i]);
        let (mut score_x, mut score_v) = (0.0, [0.0; 3]);
        if e.randomized && options.score_terms {
            let r = r_final.get(i).copied().unwrap_or(0.0);
            if r != 0.0 {
                let (sx, sv) = grad_log_p(e.branch, e.x, e.v_post, dt, config.eps, left, right)
                    .map_err(|err| corrupt(err.to_string()))?;
                score_x = sx * r;
                score_v = scale(sv, r);
            }
        }
        let pv = e.v_post[0];
        let update = match e.action {
            WallAction::None => (a - score_x, sub(add_e1(b, e.tau * a), score_v)),
            WallAction::Specular => (-a, [-(b[0] + e.tau * a), b[1], b[2]]),
            WallAction::Thermal { wall, sample } => {
                let BoundarySpec::Thermal { temperature: t } = *config.bc(wall) else {
                    return Err(corrupt(format!("thermal event at non-thermal {wall:?} wall")));
                };
                let w = config.wall_position(wall);
                let pg = sample.velocity[0];
                let dg = sample.dvelocity_dtemperature(t);
                let flight = (e.x - w) / pv + e.tau;
                sums.add(wall, [
                    b[0] * dg[0] + a * flight * dg[0],
                    b[1] * dg[1],
                    b[2] * dg[2],
                ]);
                let alpha = pg / pv * a - score_x;
                let beta = sub([(w - e.x) * pg / (pv * pv) * a, 0.0, 0.0], score_v);
                (alpha, beta)
            }
            WallAction::Exited { .. } => {
                status[i] = Status::Active;
                (0.0, [0.0; 3])
            }
        };
        updates.push((i, update.0, update.1));
    }

    for inj in &step.injections {
        let i = inj.index;
        let BoundarySpec::Inflow { temperature: t, .. } = *config.bc(inj.wall) else {
            return Err(corrupt(format!("injection through non-inflow {:?} wall", inj.wall)));
        };
        let (a, b) = (state.alpha[i], state.beta[i]);
        let dg = inj.sample.dvelocity_dtemperature(t);
        sums.add(inj.wall, [b[0] * dg[0] + a * inj.xi * dg[0], b[1] * dg[1], b[2] * dg[2]]);
        updates.push((i, a, add_e1(b, inj.xi * a)));
        status[i] = Status::Staged;
    }

    state
        .alpha
        .par_iter()
        .zip(state.beta.par_iter_mut())
        .zip(status.par_iter())
        .filter(|(_, s)| **s == Status::Active)
        .for_each(|((a, b), _)| *b = add_e1(*b, dt * a));
    for (i, a, b) in updates {
        state.alpha[i] = a;
        state.beta[i] = b;
    }

    for pair in &step.pairs {
        let (bi, bi1) = apply_adjoint_pair(pair, state.beta[pair.i], state.beta[pair.i1]);
        state.beta[pair.i] = bi;
        state.beta[pair.i1] = bi1;
    }
    Ok(sums)
}

fn require(tape: &ForwardTape, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(DsmcError::InvalidArgument(format!(
            "{what} backstep on a run with walls {:?} / {:?}",
            tape.config.left_bc, tape.config.right_bc
        )))
    }
}

fn backstep_without_score(
    state: &mut AdjointState,
    status: &mut [Status],
    tape: &ForwardTape,
    k: usize,
) -> Result<WallSums> {
    backstep(state, status, tape, k, &[], &AdjointOptions { score_terms: false })
}

/// Backstep of a run with periodic walls.
pub fn backstep_periodic(state: &mut AdjointState, status: &mut [Status], tape: &ForwardTape, k: usize) -> Result<()> {
    require(tape, tape.config.is_periodic(), "periodic")?;
    backstep_without_score(state, status, tape, k).map(drop)
}

/// Backstep of a run with at least one specular wall.
pub fn backstep_specular(state: &mut AdjointState, status: &mut [Status], tape: &ForwardTape, k: usize) -> Result<()> {
    let specular = Wall::BOTH.iter().any(|w| matches!(tape.config.bc(*w), BoundarySpec::Specular));
    require(tape, specular, "specular")?;
    backstep_without_score(state, status, tape, k).map(drop)
}

/// Backstep of a run with at least one thermal wall.
pub fn backstep_thermal(
    state: &mut AdjointState,
    status: &mut [Status],
    tape: &ForwardTape,
    k: usize,
    r_final: &[f64],
    options: &AdjointOptions,
) -> Result<WallSums> {
    require(tape, tape.config.has_thermal(), "thermal")?;
    backstep(state, status, tape, k, r_final, options)
}

/// Backstep of a run with at least one inflow wall.
pub fn backstep_inflow(state: &mut AdjointState, status: &mut [Status], tape: &ForwardTape, k: usize) -> Result<WallSums> {
    require(tape, tape.config.has_inflow(), "inflow")?;
    backstep_without_score(state, status, tape, k)
}

/// Initial-law gradients `(d_m_v, d_m_x)` from the adjoints at `t_0`.
pub fn grad_initial(state: &AdjointState, tape: &ForwardTape) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = tape.total_particles() as f64;
    let n0 = tape.n_initial;
    let s = tape.initial.velocity_scale;
    if s == 0.0 {
        return Err(DsmcError::InvalidArgument(
            "velocity scale 0 has no pathwise derivative".into(),
        ));
    }
    let d_v = -(0..n0).map(|i| dot(state.beta[i], scale(tape.v0[i], 1.0 / s))).sum::<f64>() / n;
    let d_x = match tape.initial.position {
        SpatialLaw::Uniform => Vec::new(),
        SpatialLaw::UniformInterval { .. } => {
            let u = &tape.draws.position_uniform;
            if u.len() != n0 {
                return Err(DsmcError::CorruptedTape("initial position draws missing".into()));
            }
            let lo = -(0..n0).map(|i| state.alpha[i] * (1.0 - u[i])).sum::<f64>() / n;
            let hi = -(0..n0).map(|i| state.alpha[i] * u[i]).sum::<f64>() / n;
            vec![lo, hi]
        }
    };
    Ok((vec![d_v], d_x))
}

/// Scales accumulated sums into `(d_theta_left, d_theta_right)`, keeping
/// only walls of the requested kind.
fn wall_gradients(
    config: &SimConfig,
    sums: WallSums,
    n: f64,
    kind: fn(&BoundarySpec) -> bool,
) -> (Option<Vec3>, Option<Vec3>) {
    let finish = |wall: Wall, s: Vec3| kind(config.bc(wall)).then(|| scale(s, -1.0 / n));
    (finish(Wall::Left, sums.left), finish(Wall::Right, sums.right))
}

/// Thermal-wall temperature gradients from accumulated sums.
pub fn grad_thermal(config: &SimConfig, sums: WallSums, n_total: usize) -> (Option<Vec3>, Option<Vec3>) {
    wall_gradients(config, sums, n_total as f64, BoundarySpec::is_thermal)
}

/// Inflow-wall temperature gradients from accumulated sums.
pub fn grad_inflow(config: &SimConfig, sums: WallSums, n_total: usize) -> (Option<Vec3>, Option<Vec3>) {
    wall_gradients(config, sums, n_total as f64, BoundarySpec::is_inflow)
}

/// Full backward sweep. Returns the report and the adjoints at `t_0`.
pub fn sweep(
    tape: &ForwardTape,
    ensemble: &ParticleEnsemble,
    observable: &Observable,
    options: &AdjointOptions,
) -> Result<(GradientReport, AdjointState)> {
    tape.check()?;
    let n = tape.total_particles();
    if ensemble.len() != n {
        return Err(DsmcError::CorruptedTape(format!(
            "ensemble holds {} particles, tape expects {n}",
            ensemble.len()
        )));
    }
    let r_final: Vec<f64> = if ensemble.r_final.len() == n {
        ensemble.r_final.clone()
    } else {
        (0..n)
            .map(|i| match ensemble.status[i] {
                Status::Active => observable.value(ensemble.x[i], ensemble.v[i]),
                _ => 0.0,
            })
            .collect()
    };
    let (mut state, mut nonfinite) = terminal_conditions(ensemble, observable);
    let mut status = ensemble.status.clone();
    let mut sums = WallSums::default();
    for k in (0..tape.config.n_steps).rev() {
        sums.merge(backstep(&mut state, &mut status, tape, k, &r_final, options)?);
    }
    if status[..tape.n_initial].iter().any(|s| *s != Status::Active)
        || status[tape.n_initial..].iter().any(|s| *s != Status::Staged)
    {
        return Err(DsmcError::CorruptedTape("statuses do not rewind to the initial state".into()));
    }
    let (d_m_v, d_m_x) = grad_initial(&state, tape)?;
    let config = &tape.config;
    let (thermal_l, thermal_r) = grad_thermal(config, sums, n);
    let (inflow_l, inflow_r) = grad_inflow(config, sums, n);
    nonfinite |= state.alpha.iter().any(|a| !a.is_finite())
        || state.beta.iter().flatten().any(|b| !b.is_finite());
    let objective = r_final.iter().sum::<f64>() / n.max(1) as f64;
    let report = GradientReport {
        n_particles: tape.n_initial,
        n_total: n,
        seed: config.seed,
        config_hash: config_hash(config),
        objective,
        d_m_v,
        d_m_x,
        d_theta_left: thermal_l.or(inflow_l),
        d_theta_right: thermal_r.or(inflow_r),
        nonfinite,
    };
    if nonfinite {
        log::warn!("adjoint sweep produced non-finite values");
    }
    Ok((report, state))
}

/// Runs the backward sweep of a forward run and assembles its gradients.
pub fn run_adjoint(
    tape: &ForwardTape,
    ensemble: &ParticleEnsemble,
    observable: &Observable,
    options: &AdjointOptions,
) -> Result<GradientReport> {
    sweep(tape, ensemble, observable, options).map(|(report, _)| report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{matrix_b, CollisionPair};
    use crate::config::{InflowCounts, InitialParams, Problem};
    use crate::ensemble::InitialDraws;
    use crate::forward::{run_forward, simulate_objective};
    use crate::score::Branch;
    use crate::tape::{Injection, ParticleEvent, StepRecord};
    use crate::transport::{WallNoise, WallSample};

    const DT: f64 = 0.1;

    fn config(left: BoundarySpec, right: BoundarySpec) -> SimConfig {
        SimConfig {
            domain_left: 0.0,
            domain_right: 1.0,
            dt: DT,
            n_steps: 1,
            collision_rate: 1.0,
            n_cells: 1,
            eps: 0.0,
            seed: 3,
            left_bc: left,
            right_bc: right,
        }
    }

    fn tape(config: SimConfig, n: usize, counts: InflowCounts, step: StepRecord) -> ForwardTape {
        ForwardTape {
            config,
            initial: InitialParams::uniform(1.0),
            n_initial: n,
            inflow_counts: counts,
            x0: vec![0.5; n],
            v0: vec![[1.0, 0.0, 0.0]; n],
            draws: InitialDraws::default(),
            steps: vec![step],
        }
    }

    fn state(alpha: &[f64], beta: &[Vec3]) -> AdjointState {
        AdjointState { alpha: alpha.to_vec(), beta: beta.to_vec() }
    }

    fn sample(wall: Wall, pg: f64, t: Vec3) -> WallSample {
        // Solve sqrt(t0) * sqrt(-2 ln u) = |pg| for u.
        let rho = pg.abs() / t[0].sqrt();
        WallSample::from_noise(wall, t, WallNoise { u: (-rho * rho / 2.0).exp(), n2: 0.3, n3: -0.2 })
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn terminal_condition_examples() {
        let obs = Observable::LocalizedEnergy { center: 0.2 };
        let mut e = ParticleEnsemble::from_states(vec![0.2, 0.6], vec![[1.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        e.status[1] = Status::Exited;
        let (s, flag) = terminal_conditions(&e, &obs);
        assert!(!flag);
        assert_eq!(s.alpha[0], 0.0);
        assert_eq!(s.beta[0], [-2.0, 0.0, 0.0]);
        assert_eq!((s.alpha[1], s.beta[1]), (0.0, [0.0; 3]));
        let (s, _) = terminal_conditions(&e, &Observable::Constant { value: 3.0 });
        assert_eq!(s, AdjointState::zeros(2));
    }

    #[test]
    fn periodic_backstep_examples() {
        let t = tape(config(BoundarySpec::Periodic, BoundarySpec::Periodic), 2, InflowCounts::default(), StepRecord::default());
        let mut status = vec![Status::Active; 2];
        let mut s = state(&[0.0, 1.0], &[[0.5, 1.0, 2.0], [0.0; 3]]);
        backstep_periodic(&mut s, &mut status, &t, 0).unwrap();
        assert_eq!(s.beta[0], [0.5, 1.0, 2.0]);
        assert_eq!(s.beta[1], [DT, 0.0, 0.0]);
        assert_eq!(s.alpha, vec![0.0, 1.0]);

        let sigma = [0.0, 0.6, 0.8];
        let zeta = [1.0, 0.0, 0.0];
        let step = StepRecord {
            pairs: vec![CollisionPair { i: 0, i1: 1, collided: true, sigma, zeta }],
            ..Default::default()
        };
        let t = tape(config(BoundarySpec::Periodic, BoundarySpec::Periodic), 2, InflowCounts::default(), step);
        let (b0, b1) = ([0.3, -0.2, 0.7], [1.1, 0.4, -0.5]);
        let mut s = state(&[0.5, -2.0], &[b0, b1]);
        backstep_periodic(&mut s, &mut status, &t, 0).unwrap();
        let (e0, e1) = matrix_b(sigma, zeta)
            .unwrap()
            .apply(add_e1(b0, DT * 0.5), add_e1(b1, DT * -2.0));
        for k in 0..3 {
            assert!(close(s.beta[0][k], e0[k]) && close(s.beta[1][k], e1[k]));
        }
    }

    #[test]
    fn specular_backstep_examples() {
        let event = ParticleEvent {
            index: 0,
            x: 0.05,
            v_post: [-1.0, 0.0, 0.0],
            tau: DT,
            randomized: false,
            branch: Branch::LeftExit,
            action: WallAction::Specular,
        };
        let step = StepRecord { events: vec![event], ..Default::default() };
        let t = tape(config(BoundarySpec::Specular, BoundarySpec::Specular), 2, InflowCounts::default(), step);
        let (a, b, c, d) = (0.7, 0.2, -1.0, 3.0);
        let mut s = state(&[a, a], &[[b, c, d], [b, c, d]]);
        let mut status = vec![Status::Active; 2];
        backstep_specular(&mut s, &mut status, &t, 0).unwrap();
        assert_eq!(s.alpha[0], -a);
        assert_eq!(s.beta[0], [-(b + DT * a), c, d]);
        // The interior particle reduces to the periodic update.
        assert_eq!((s.alpha[1], s.beta[1]), (a, [b + DT * a, c, d]));
        backstep_specular(&mut s, &mut status, &t, 0).unwrap();
        assert_eq!(s.alpha[0], a);
        assert!(backstep_periodic(&mut s, &mut status, &t, 0).is_err());
    }

    #[test]
    fn thermal_backstep_example() {
        let temps = [1.0, 0.5, 0.8];
        let g = sample(Wall::Left, 2.0, temps);
        let event = ParticleEvent {
            index: 0,
            x: 0.05,
            v_post: [-1.0, 0.0, 0.0],
            tau: DT,
            randomized: false,
            branch: Branch::LeftExit,
            action: WallAction::Thermal { wall: Wall::Left, sample: g },
        };
        let step = StepRecord { events: vec![event], ..Default::default() };
        let t = tape(
            config(BoundarySpec::Thermal { temperature: temps }, BoundarySpec::Specular),
            1,
            InflowCounts::default(),
            step,
        );
        let a = 0.4;
        let mut s = state(&[a], &[[1.0, 2.0, 3.0]]);
        let mut status = vec![Status::Active];
        let sums = backstep_thermal(&mut s, &mut status, &t, 0, &[0.0], &AdjointOptions::default()).unwrap();
        assert!(close(s.alpha[0], -2.0 * a));
        assert!(close(s.beta[0][0], -0.05 * 2.0 * a));
        assert_eq!((s.beta[0][1], s.beta[0][2]), (0.0, 0.0));
        // flight time (x - L)/v + tau = -0.05 + 0.1
        let dg = g.dvelocity_dtemperature(temps);
        let expected = [1.0 * dg[0] + a * 0.05 * dg[0], 2.0 * dg[1], 3.0 * dg[2]];
        for j in 0..3 {
            assert!(close(sums.left[j], expected[j]));
        }
        assert_eq!(sums.right, [0.0; 3]);
    }

    #[test]
    fn thermal_gradient_example() {
        let temps = [1.0, 1.0, 1.0];
        let g = sample(Wall::Left, 2.0, temps);
        let event = ParticleEvent {
            index: 0,
            x: 0.05,
            v_post: [-1.0, 0.0, 0.0],
            tau: DT,
            randomized: false,
            branch: Branch::LeftExit,
            action: WallAction::Thermal { wall: Wall::Left, sample: g },
        };
        let step = StepRecord { events: vec![event], ..Default::default() };
        let cfg = config(BoundarySpec::Thermal { temperature: temps }, BoundarySpec::Specular);
        let t = tape(cfg.clone(), 4, InflowCounts::default(), step);
        let mut s = state(&[0.0; 4], &[[1.0, 0.0, 0.0]; 4]);
        let mut status = vec![Status::Active; 4];
        let sums = backstep(&mut s, &mut status, &t, 0, &[0.0; 4], &AdjointOptions::default()).unwrap();
        let (left, right) = grad_thermal(&cfg, sums, 4);
        assert!(close(left.unwrap()[0], -1.0 / 4.0));
        assert_eq!(right, None);
        assert_eq!(grad_thermal(&cfg, WallSums::default(), 4).0, Some([0.0; 3]));
    }

    #[test]
    fn inflow_backstep_and_gradient_examples() {
        let temps = [4.0, 4.0, 4.0];
        let inflow = BoundarySpec::Inflow { temperature: temps, density: 1.0 };
        let cfg = config(inflow.clone(), inflow);
        let g = sample(Wall::Left, 2.0, temps);
        let exit = ParticleEvent {
            index: 0,
            x: 0.05,
            v_post: [-1.0, 0.0, 0.0],
            tau: DT,
            randomized: false,
            branch: Branch::LeftExit,
            action: WallAction::Exited { wall: Wall::Left },
        };
        let step = StepRecord {
            events: vec![exit],
            injections: vec![Injection { index: 2, wall: Wall::Left, xi: 0.02, x: 0.04, sample: g }],
            ..Default::default()
        };
        let counts = InflowCounts { left: 1, right: 0 };
        let t = tape(cfg.clone(), 2, counts, step.clone());
        let a = 1.5;
        let mut s = state(&[0.0, a, a], &[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let mut status = vec![Status::Exited, Status::Active, Status::Active];
        let sums = backstep_inflow(&mut s, &mut status, &t, 0).unwrap();
        assert_eq!(status, vec![Status::Active, Status::Active, Status::Staged]);
        assert_eq!((s.alpha[0], s.beta[0]), (0.0, [0.0; 3]));
        assert_eq!(s.beta[1], [1.0 + DT * a, 0.0, 0.0]);
        assert_eq!(s.beta[2], [1.0 + 0.02 * a, 0.0, 0.0]);
        assert!(close(sums.left[0], 2.0 / 8.0 + a * 0.02 * 2.0 / 8.0));

        // xi = 0, beta = e1, g0 = 2, T = 4: -(1/N) * 2/8.
        let mut step0 = step;
        step0.events.clear();
        step0.injections[0].xi = 0.0;
        let t = tape(cfg.clone(), 2, counts, step0);
        let mut s = state(&[0.0, 0.0, 9.0], &[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]]);
        let mut status = vec![Status::Active; 3];
        let sums = backstep_inflow(&mut s, &mut status, &t, 0).unwrap();
        let (left, right) = grad_inflow(&cfg, sums, 3);
        assert!(close(left.unwrap()[0], -1.0 / (4.0 * 3.0)));
        assert_eq!(right, Some([0.0; 3]));
    }

    #[test]
    fn initial_gradient_examples() {
        let mut t = tape(config(BoundarySpec::Periodic, BoundarySpec::Periodic), 1, InflowCounts::default(), StepRecord::default());
        t.v0 = vec![[2.0, 0.0, 0.0]];
        let (dv, dx) = grad_initial(&state(&[0.0], &[[1.0, 0.0, 0.0]]), &t).unwrap();
        assert_eq!(dv, vec![-2.0]);
        assert!(dx.is_empty());
        assert_eq!(grad_initial(&AdjointState::zeros(1), &t).unwrap().0, vec![0.0]);
        t.initial.velocity_scale = 0.0;
        assert!(grad_initial(&AdjointState::zeros(1), &t).is_err());
    }

    fn problem(left: BoundarySpec, right: BoundarySpec, mu: f64, n_cells: usize, obs: Observable) -> Problem {
        Problem {
            sim: SimConfig {
                domain_left: 0.0,
                domain_right: 1.0,
                dt: 0.05,
                n_steps: 10,
                collision_rate: mu,
                n_cells,
                eps: 0.0,
                seed: 17,
                left_bc: left,
                right_bc: right,
            },
            initial: InitialParams::uniform(0.8),
            n_particles: 1000,
            observable: obs,
            inflow_counts: None,
        }
    }

    fn adjoint(p: &Problem) -> GradientReport {
        let run = run_forward(p).unwrap();
        run_adjoint(&run.tape, &run.ensemble, &p.observable, &AdjointOptions::default()).unwrap()
    }

    fn fd_velocity_scale(p: &Problem, h: f64) -> f64 {
        let (mut plus, mut minus) = (p.clone(), p.clone());
        plus.initial.velocity_scale += h;
        minus.initial.velocity_scale -= h;
        (simulate_objective(&plus).unwrap() - simulate_objective(&minus).unwrap()) / (2.0 * h)
    }

    #[test]
    fn matches_the_homogeneous_adjoint() {
        let p = problem(BoundarySpec::Periodic, BoundarySpec::Periodic, 4.0, 5, Observable::KineticEnergy);
        let run = run_forward(&p).unwrap();
        let report = run_adjoint(&run.tape, &run.ensemble, &p.observable, &AdjointOptions::default()).unwrap();
        // Velocity-only observable: beta only changes through the pair products.
        let mut beta: Vec<Vec3> = run.ensemble.v.iter().map(|v| scale(*v, -2.0)).collect();
        for step in run.tape.steps.iter().rev() {
            for pair in &step.pairs {
                if pair.collided {
                    let (a, b) = matrix_b(pair.sigma, pair.zeta).unwrap().apply(beta[pair.i], beta[pair.i1]);
                    beta[pair.i] = a;
                    beta[pair.i1] = b;
                }
            }
        }
        let n = run.tape.n_initial;
        let expected = -(0..n).map(|i| dot(beta[i], run.tape.draws.velocity_noise[i])).sum::<f64>() / n as f64;
        assert!((report.d_m_v[0] - expected).abs() < 1e-12 * expected.abs());
        // Energy is conserved, so J = s^2 * mean |noise|^2 and dJ/ds = 2 J / s.
        assert!((report.d_m_v[0] - 2.0 * report.objective / 0.8).abs() < 1e-10);
    }

    #[test]
    fn gradients_are_linear_in_the_observable() {
        let temps = BoundarySpec::Thermal { temperature: [0.6, 0.5, 0.8] };
        let mut p = problem(temps, BoundarySpec::Specular, 1.0, 10, Observable::LocalizedEnergy { center: 0.2 });
        p.sim.eps = 0.005;
        let base = adjoint(&p);
        p.observable = Observable::Scaled { factor: 2.0, inner: Box::new(p.observable.clone()) };
        let doubled = adjoint(&p);
        for ((_, a), (_, b)) in base.components().iter().zip(doubled.components()) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn pathwise_exact_without_collisions() {
        let obs = Observable::LocalizedEnergy { center: 0.2 };
        for (left, right, mu, cells) in [
            (BoundarySpec::Specular, BoundarySpec::Specular, 0.0, 10),
            (BoundarySpec::Periodic, BoundarySpec::Periodic, 0.0, 10),
            (BoundarySpec::Periodic, BoundarySpec::Periodic, 2.0, 1),
        ] {
            let p = problem(left, right, mu, cells, obs.clone());
            let ad = adjoint(&p).d_m_v[0];
            let fd = fd_velocity_scale(&p, 1e-6);
            assert!((ad - fd).abs() <= 1e-6 * fd.abs(), "{ad} vs {fd}");
        }
    }

    #[test]
    fn initial_interval_gradient_is_pathwise_exact() {
        let mut p = problem(BoundarySpec::Specular, BoundarySpec::Specular, 0.0, 10, Observable::LocalizedEnergy { center: 0.2 });
        p.initial.position = SpatialLaw::UniformInterval { lo: 0.2, hi: 0.7 };
        let report = adjoint(&p);
        let h = 1e-6;
        for (k, set) in [
            |p: &mut Problem, d: f64| if let SpatialLaw::UniformInterval { lo, .. } = &mut p.initial.position { *lo += d },
            |p: &mut Problem, d: f64| if let SpatialLaw::UniformInterval { hi, .. } = &mut p.initial.position { *hi += d },
        ]
        .iter()
        .enumerate()
        {
            let (mut plus, mut minus) = (p.clone(), p.clone());
            set(&mut plus, h);
            set(&mut minus, -h);
            let fd = (simulate_objective(&plus).unwrap() - simulate_objective(&minus).unwrap()) / (2.0 * h);
            assert!((report.d_m_x[k] - fd).abs() <= 1e-6 * fd.abs(), "{} vs {fd}", report.d_m_x[k]);
        }
    }

    #[test]
    fn score_terms_only_affect_randomized_runs() {
        let obs = Observable::LocalizedEnergy { center: 0.2 };
        let inflow = BoundarySpec::Inflow { temperature: [4.0; 3], density: 400.0 };
        let thermal = BoundarySpec::Thermal { temperature: [0.6; 3] };
        let off = AdjointOptions { score_terms: false };
        for p in [
            problem(BoundarySpec::Periodic, BoundarySpec::Periodic, 1.0, 10, obs.clone()),
            problem(BoundarySpec::Specular, BoundarySpec::Specular, 1.0, 10, obs.clone()),
            problem(inflow.clone(), inflow, 1.0, 10, obs.clone()),
        ] {
            let run = run_forward(&p).unwrap();
            let on = run_adjoint(&run.tape, &run.ensemble, &p.observable, &AdjointOptions::default()).unwrap();
            let without = run_adjoint(&run.tape, &run.ensemble, &p.observable, &off).unwrap();
            assert_eq!(on, without);
        }
        let mut p = problem(thermal, BoundarySpec::Specular, 1.0, 10, obs);
        p.sim.eps = 0.005;
        let run = run_forward(&p).unwrap();
        let on = run_adjoint(&run.tape, &run.ensemble, &p.observable, &AdjointOptions::default()).unwrap();
        let without = run_adjoint(&run.tape, &run.ensemble, &p.observable, &off).unwrap();
        assert_ne!(on.d_theta_left, without.d_theta_left);
    }

    #[test]
    fn zero_steps_pairs_terminal_condition_with_initial_law() {
        let mut p = problem(BoundarySpec::Periodic, BoundarySpec::Periodic, 1.0, 10, Observable::KineticEnergy);
        p.sim.n_steps = 0;
        let report = adjoint(&p);
        assert!((report.d_m_v[0] - 2.0 * report.objective / 0.8).abs() < 1e-12);
    }

    #[test]
    fn report_lists_only_present_parameters() {
        let thermal = |t: f64| BoundarySpec::Thermal { temperature: [t; 3] };
        let mut p = problem(thermal(0.6), thermal(0.9), 1.0, 10, Observable::LocalizedEnergy { center: 0.2 });
        p.sim.eps = 0.01;
        let r = adjoint(&p);
        let names: Vec<String> = r.components().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["velocity_scale", "T_left_1", "T_left_2", "T_left_3", "T_right_1", "T_right_2", "T_right_3"]);
        assert!(r.d_m_x.is_empty());
        let flat = r.to_flat_json();
        assert!(flat.get("d_T_right_3").is_some());
        let p = problem(BoundarySpec::Specular, BoundarySpec::Specular, 1.0, 10, Observable::KineticEnergy);
        assert_eq!(adjoint(&p).d_theta_left, None);
    }

    #[test]
    fn mismatched_ensemble_is_rejected() {
        let p = problem(BoundarySpec::Periodic, BoundarySpec::Periodic, 1.0, 10, Observable::KineticEnergy);
        let run = run_forward(&p).unwrap();
        let mut e = run.ensemble.clone();
        e.x.pop();
        e.v.pop();
        e.status.pop();
        e.r_final.clear();
        assert!(matches!(
            run_adjoint(&run.tape, &e, &p.observable, &AdjointOptions::default()),
            Err(DsmcError::CorruptedTape(_))
        ));
    }
}
