//! Branch probabilities of the randomized time step and their log-gradients.
//!
//! A particle at `x` with post-collision velocity `v` moves for a time
//! `tau ~ N(dt, eps^2)`. It leaves through the left wall when `tau` exceeds
//! the crossing time `t_L = (L - x)/v[0]` (only possible for `v[0] < 0`),
//! through the right wall when `tau > t_R = (R - x)/v[0]` (`v[0] > 0`), and
//! stays inside otherwise. With `F` the CDF of the step law and
//! `lambda = f/F`, `lambda_bar = f/(1 - F)`:
//!
//! | branch   | `d/dx log p`              | `d/dv[0] log p` |
//! |----------|---------------------------|-----------------|
//! | left     | `lambda_bar(t_L) / v[0]`  | `t_L` times that |
//! | interior | `-lambda(t) / v[0]`       | `t` times that  |
//! | right    | `lambda_bar(t_R) / v[0]`  | `t_R` times that |

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{DsmcError, Result};
use crate::vec3::Vec3;

/// Crossing times more than this many standard deviations below `dt` contribute nothing.
pub const TAIL_CUTOFF: f64 = 8.0;

/// Outcome of one transport step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    LeftExit,
    Interior,
    RightExit,
}

impl Branch {
    /// 1, 2 or 3.
    pub fn number(self) -> u8 {
        match self {
            Branch::LeftExit => 1,
            Branch::Interior => 2,
            Branch::RightExit => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchProbs {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub t_left: Option<f64>,
    pub t_right: Option<f64>,
}

impl BranchProbs {
    pub fn get(&self, branch: Branch) -> f64 {
        match branch {
            Branch::LeftExit => self.p1,
            Branch::Interior => self.p2,
            Branch::RightExit => self.p3,
        }
    }
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `P(Z > z)` of the standard normal.
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `phi(z) / P(Z > z)`, accurate far into the upper tail.
fn inv_mills(z: f64) -> f64 {
    if z < 5.0 {
        return phi(z) / upper_tail(z);
    }
    // Continued fraction P(Z > z)/phi(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...)))).
    let mut cf = z;
    for k in (1..=60).rev() {
        cf = z + k as f64 / cf;
    }
    cf
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(DsmcError::InvalidArgument(format!(
            "the step-length spread must be positive, got {eps}"
        )))
    }
}

/// CDF of `N(dt, eps^2)`.
pub fn step_cdf(t: f64, dt: f64, eps: f64) -> f64 {
    upper_tail(-(t - dt) / eps)
}

/// `lambda(t) = f(t) / F(t)`.
pub fn hazard(t: f64, dt: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(inv_mills(-(t - dt) / eps) / eps)
}

/// `lambda_bar(t) = f(t) / (1 - F(t))`.
pub fn reverse_hazard(t: f64, dt: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(inv_mills((t - dt) / eps) / eps)
}

pub fn branch_probs(x: f64, v_post: Vec3, dt: f64, eps: f64, left: f64, right: f64) -> BranchProbs {
    let pv = v_post[0];
    if pv < 0.0 {
        let t = (left - x) / pv;
        let f = step_cdf(t, dt, eps);
        BranchProbs { p1: 1.0 - f, p2: f, p3: 0.0, t_left: Some(t), t_right: None }
    } else if pv > 0.0 {
        let t = (right - x) / pv;
        let f = step_cdf(t, dt, eps);
        BranchProbs { p1: 0.0, p2: f, p3: 1.0 - f, t_left: None, t_right: Some(t) }
    } else {
        BranchProbs { p1: 0.0, p2: 1.0, p3: 0.0, t_left: None, t_right: None }
    }
}

/// `(d/dx log p_l, d/dv log p_l)` for the realized branch `l`.
pub fn grad_log_p(
    branch: Branch,
    x: f64,
    v_post: Vec3,
    dt: f64,
    eps: f64,
    left: f64,
    right: f64,
) -> Result<(f64, Vec3)> {
    check_eps(eps)?;
    let pv = v_post[0];
    let inadmissible = || {
        DsmcError::InvalidArgument(format!("branch {} is impossible for v[0] = {pv}", branch.number()))
    };
    let t = match (branch, pv) {
        (Branch::Interior, p) if p == 0.0 => return Ok((0.0, [0.0; 3])),
        (Branch::LeftExit, p) if p < 0.0 => (left - x) / pv,
        (Branch::RightExit, p) if p > 0.0 => (right - x) / pv,
        (Branch::Interior, p) if p < 0.0 => (left - x) / pv,
        (Branch::Interior, p) if p > 0.0 => (right - x) / pv,
        _ => return Err(inadmissible()),
    };
    // Beyond dt + 3 eps the particle is never randomized, so its step is
    // deterministic and stays interior with probability one.
    if t >= dt + 3.0 * eps || dt - t > TAIL_CUTOFF * eps {
        return Ok((0.0, [0.0; 3]));
    }
    let d_x = match branch {
        Branch::Interior => -hazard(t, dt, eps)? / pv,
        _ => reverse_hazard(t, dt, eps)? / pv,
    };
    Ok((d_x, [d_x * t, 0.0, 0.0]))
}
