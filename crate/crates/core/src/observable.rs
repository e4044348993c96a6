//! Terminal observables `r(x, v)` and their gradients.

use serde::{Deserialize, Serialize};

use crate::ensemble::{ParticleEnsemble, Status};
use crate::vec3::{dot, scale, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    Constant { value: f64 },
    /// `|v|^2 exp(-(x - center)^2)`: kinetic energy weighted around `center`.
    LocalizedEnergy { center: f64 },
    /// `|v|^2 sin^2(pi (x - left) / (right - left))`, which vanishes at both
    /// ends of `[left, right]`.
    WindowedEnergy { left: f64, right: f64 },
    /// `|v|^2`
    KineticEnergy,
    /// A single velocity component.
    VelocityComponent { component: usize },
    /// The position itself.
    Position,
    Scaled { factor: f64, inner: Box<Observable> },
}

impl Observable {
    pub fn value(&self, x: f64, v: Vec3) -> f64 {
        match self {
            Observable::Constant { value } => *value,
            Observable::LocalizedEnergy { center } => {
                let d = x - center;
                dot(v, v) * (-d * d).exp()
            }
            Observable::WindowedEnergy { left, right } => {
                let s = (std::f64::consts::PI * (x - left) / (right - left)).sin();
                dot(v, v) * s * s
            }
            Observable::KineticEnergy => dot(v, v),
            Observable::VelocityComponent { component } => v[*component],
            Observable::Position => x,
            Observable::Scaled { factor, inner } => factor * inner.value(x, v),
        }
    }

    /// `(dr/dx, dr/dv)`.
    pub fn gradient(&self, x: f64, v: Vec3) -> (f64, Vec3) {
        match self {
            Observable::Constant { .. } => (0.0, [0.0; 3]),
            Observable::LocalizedEnergy { center } => {
                let d = x - center;
                let w = (-d * d).exp();
                (-2.0 * d * w * dot(v, v), scale(v, 2.0 * w))
            }
            Observable::WindowedEnergy { left, right } => {
                let k = std::f64::consts::PI / (right - left);
                let (s, c) = (k * (x - left)).sin_cos();
                (2.0 * k * s * c * dot(v, v), scale(v, 2.0 * s * s))
            }
            Observable::KineticEnergy => (0.0, scale(v, 2.0)),
            Observable::VelocityComponent { component } => {
                let mut g = [0.0; 3];
                g[*component] = 1.0;
                (0.0, g)
            }
            Observable::Position => (1.0, [0.0; 3]),
            Observable::Scaled { factor, inner } => {
                let (gx, gv) = inner.gradient(x, v);
                (factor * gx, scale(gv, *factor))
            }
        }
    }
}

/// `(1/N) * sum of r over active particles`, where `N` counts every particle
/// in the ensemble (staged and exited included). Caches each particle's value
/// in `r_final`; inactive particles get zero.
pub fn evaluate_observable(ensemble: &mut ParticleEnsemble, observable: &Observable) -> f64 {
    let n = ensemble.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    ensemble.r_final.clear();
    ensemble.r_final.reserve(n);
    for i in 0..n {
        let r = if ensemble.status[i] == Status::Active {
            observable.value(ensemble.x[i], ensemble.v[i])
        } else {
            0.0
        };
        total += r;
        ensemble.r_final.push(r);
    }
    total / n as f64
}
