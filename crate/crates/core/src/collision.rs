//! Maxwell-molecule binary collisions and Nanbu–Babovsky pair selection.
//!
//! For a pair `(v, v1)` with post-collision direction `sigma` and
//! pre-collision direction `zeta = (v - v1)/|v - v1|` the collision is linear:
//! `[v'; v1'] = A(sigma, zeta) [v; v1]`, and the adjoint pair update uses
//! `B = A^T = A^{-1}`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{DsmcError, Result};
use crate::rng::{Purpose, RngStream};
use crate::vec3::{add, dot, norm, scale, sub, Vec3};

/// Tolerance on `|sigma|`, `|zeta|` when building collision matrices.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionPair {
    pub i: usize,
    pub i1: usize,
    /// False when the pair was selected but had zero relative velocity.
    pub collided: bool,
    pub sigma: Vec3,
    pub zeta: Vec3,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSelection {
    pub pairs: Vec<(usize, usize)>,
    /// The requested number of collisions exceeded the cell population.
    pub saturated: bool,
}

/// Number of disjoint pairs for a cell of `n_cell` particles:
/// `ceil(n_cell * dt * mu) / 2`, clamped to `floor(n_cell / 2)`.
pub fn pair_count(n_cell: usize, mu: f64, dt: f64) -> (usize, bool) {
    let raw = n_cell as f64 * dt * mu;
    // Guard against products such as 10.000000000000002 rounding up a whole unit.
    let wanted = (raw - 1e-12 * raw.max(1.0)).ceil().max(0.0) as usize;
    if wanted > n_cell {
        (n_cell / 2, true)
    } else {
        (wanted / 2, false)
    }
}

/// Draws disjoint pairs uniformly without replacement from `cell`.
///
/// Each member gets a key from its own `(step, particle)` stream; the members
/// with the smallest keys are paired in key order. Sorting by i.i.d. keys is a
/// uniform random permutation, so the pairing is uniform, and a particle
/// entering or leaving the cell only disturbs pairs that involve its rank.
pub fn select_pairs(
    cell: &[usize],
    mu: f64,
    dt: f64,
    rng: &RngStream,
    step: usize,
) -> PairSelection {
    let (n_pairs, saturated) = pair_count(cell.len(), mu, dt);
    if n_pairs == 0 {
        return PairSelection { pairs: Vec::new(), saturated };
    }
    let mut keyed: Vec<(f64, usize)> = cell
        .iter()
        .map(|&i| (rng.uniform(step, i, Purpose::PairKey), i))
        .collect();
    let take = 2 * n_pairs;
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if take < keyed.len() {
        keyed.select_nth_unstable_by(take - 1, by_key);
        keyed.truncate(take);
    }
    keyed.sort_unstable_by(by_key);
    let pairs = keyed.chunks_exact(2).map(|c| (c[0].1, c[1].1)).collect();
    PairSelection { pairs, saturated }
}

/// Uniform direction on the unit sphere (`cos(theta)` and azimuth uniform).
pub fn sample_sigma<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let cos_t: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * PI * rng.random::<f64>();
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
}

/// Post-collision velocities. A pair with zero relative velocity is returned unchanged.
pub fn collide(v: Vec3, v1: Vec3, sigma: Vec3) -> (Vec3, Vec3) {
    let g = norm(sub(v, v1));
    if g == 0.0 {
        return (v, v1);
    }
    let mean = scale(add(v, v1), 0.5);
    let half = scale(sigma, 0.5 * g);
    (add(mean, half), sub(mean, half))
}

/// Pre-collision relative direction, or `None` for coincident velocities.
pub fn relative_direction(v: Vec3, v1: Vec3) -> Option<Vec3> {
    let d = sub(v, v1);
    let g = norm(d);
    (g > 0.0).then(|| scale(d, 1.0 / g))
}

/// A 6x6 matrix acting on stacked velocity pairs `[v; v1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionMatrix(pub [[f64; 6]; 6]);

fn check_unit(name: &str, u: Vec3) -> Result<()> {
    let n = norm(u);
    if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
        return Err(DsmcError::InvalidArgument(format!("{name} must be a unit vector, |{name}| = {n}")));
    }
    Ok(())
}

impl CollisionMatrix {
    pub fn identity() -> Self {
        let mut m = [[0.0; 6]; 6];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        Self(m)
    }

    /// `1/2 [[I + a b^T, I - a b^T], [I - a b^T, I + a b^T]]`
    fn from_outer(a: Vec3, b: Vec3) -> Self {
        let mut m = [[0.0; 6]; 6];
        for r in 0..3 {
            for c in 0..3 {
                let id = if r == c { 1.0 } else { 0.0 };
                let o = a[r] * b[c];
                m[r][c] = 0.5 * (id + o);
                m[r][c + 3] = 0.5 * (id - o);
                m[r + 3][c] = 0.5 * (id - o);
                m[r + 3][c + 3] = 0.5 * (id + o);
            }
        }
        Self(m)
    }

    /// Forward collision map `A(sigma, zeta)`.
    pub fn a(sigma: Vec3, zeta: Vec3) -> Result<Self> {
        check_unit("sigma", sigma)?;
        check_unit("zeta", zeta)?;
        Ok(Self::from_outer(sigma, zeta))
    }

    /// Adjoint collision map `B(sigma, zeta) = A(sigma, zeta)^T`.
    pub fn b(sigma: Vec3, zeta: Vec3) -> Result<Self> {
        check_unit("sigma", sigma)?;
        check_unit("zeta", zeta)?;
        Ok(Self::from_outer(zeta, sigma))
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 6]; 6];
        for (r, row) in self.0.iter().enumerate() {
            for (c, val) in row.iter().enumerate() {
                t[c][r] = *val;
            }
        }
        Self(t)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                p[r][c] = (0..6).map(|k| self.0[r][k] * other.0[k][c]).sum();
            }
        }
        Self(p)
    }

    pub fn apply(&self, top: Vec3, bottom: Vec3) -> (Vec3, Vec3) {
        let x = [top[0], top[1], top[2], bottom[0], bottom[1], bottom[2]];
        let mut y = [0.0; 6];
        for (r, out) in y.iter_mut().enumerate() {
            *out = (0..6).map(|k| self.0[r][k] * x[k]).sum();
        }
        ([y[0], y[1], y[2]], [y[3], y[4], y[5]])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// 3x3 block `(row, col)` with `row, col` in `{0, 1}`.
    pub fn block(&self, row: usize, col: usize) -> [[f64; 3]; 3] {
        let mut b = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                b[r][c] = self.0[3 * row + r][3 * col + c];
            }
        }
        b
    }
}

pub fn matrix_a(sigma: Vec3, zeta: Vec3) -> Result<CollisionMatrix> {
    CollisionMatrix::a(sigma, zeta)
}

pub fn matrix_b(sigma: Vec3, zeta: Vec3) -> Result<CollisionMatrix> {
    CollisionMatrix::b(sigma, zeta)
}

/// `B_{k,i} [b_i; b_i1]`: the adjoint collision for a pair from the tape,
/// identity when the pair did not collide.
pub fn apply_adjoint_pair(pair: &CollisionPair, b_i: Vec3, b_i1: Vec3) -> (Vec3, Vec3) {
    if !pair.collided {
        return (b_i, b_i1);
    }
    // B [a; b] = 1/2 [(a + b) + zeta sigma^T (a - b); (a + b) - zeta sigma^T (a - b)]
    let s = add(b_i, b_i1);
    let d = scale(pair.zeta, dot(pair.sigma, sub(b_i, b_i1)));
    (scale(add(s, d), 0.5), scale(sub(s, d), 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_v(rng: &mut ChaCha8Rng) -> Vec3 {
        [standard_normal(rng), standard_normal(rng), standard_normal(rng)]
    }

    #[test]
    fn head_on_example() {
        let (a, b) = collide([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(a, [0.0, 1.0, 0.0]);
        assert_eq!(b, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn sigma_equal_zeta_is_a_fixed_point() {
        let v = [0.3, -1.2, 2.0];
        let v1 = [1.1, 0.4, -0.5];
        let zeta = relative_direction(v, v1).unwrap();
        let (a, b) = collide(v, v1, zeta);
        for k in 0..3 {
            assert!((a[k] - v[k]).abs() < 1e-14);
            assert!((b[k] - v1[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn coincident_velocities_are_a_no_op() {
        let v = [2.0, 3.0, 4.0];
        assert_eq!(collide(v, v, [0.0, 0.0, 1.0]), (v, v));
        assert!(relative_direction(v, v).is_none());
    }

    #[test]
    fn aligned_block_structure() {
        let e1 = [1.0, 0.0, 0.0];
        let a = matrix_a(e1, e1).unwrap();
        let expected = [[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]];
        assert_eq!(a.block(0, 0), expected);
        assert_eq!(a.block(1, 1), expected);
        assert_eq!(a.block(0, 1), [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]]);
    }

    #[test]
    fn non_unit_inputs_are_rejected() {
        assert!(matrix_a([1.0, 1.0, 0.0], [1.0, 0.0, 0.0]).is_err());
        assert!(matrix_b([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn matrix_reproduces_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let (v, v1) = (random_v(&mut rng), random_v(&mut rng));
            let sigma = sample_sigma(&mut rng);
            let zeta = relative_direction(v, v1).unwrap();
            let (p, q) = collide(v, v1, sigma);
            let (pa, qa) = matrix_a(sigma, zeta).unwrap().apply(v, v1);
            for k in 0..3 {
                assert!((p[k] - pa[k]).abs() < 1e-12 * (1.0 + p[k].abs()));
                assert!((q[k] - qa[k]).abs() < 1e-12 * (1.0 + q[k].abs()));
            }
        }
    }

    #[test]
    fn adjoint_pair_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let sigma = sample_sigma(&mut rng);
            let zeta = sample_sigma(&mut rng);
            let (bi, bi1) = (random_v(&mut rng), random_v(&mut rng));
            let pair = CollisionPair { i: 0, i1: 1, collided: true, sigma, zeta };
            let (p, q) = apply_adjoint_pair(&pair, bi, bi1);
            let (pm, qm) = matrix_b(sigma, zeta).unwrap().apply(bi, bi1);
            for k in 0..3 {
                assert!((p[k] - pm[k]).abs() < 1e-12);
                assert!((q[k] - qm[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_pair_identity_and_linearity() {
        let pair = CollisionPair {
            i: 0,
            i1: 1,
            collided: false,
            sigma: [1.0, 0.0, 0.0],
            zeta: [0.0, 1.0, 0.0],
        };
        let (a, b) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
        assert_eq!(apply_adjoint_pair(&pair, a, b), (a, b));
        let collided = CollisionPair { collided: true, ..pair };
        assert_eq!(apply_adjoint_pair(&collided, [0.0; 3], [0.0; 3]), ([0.0; 3], [0.0; 3]));
    }

    #[test]
    fn pair_count_examples() {
        assert_eq!(pair_count(0, 1.0, 0.1), (0, false));
        assert_eq!(pair_count(100, 1.0, 0.1), (5, false));
        assert_eq!(pair_count(3, 10.0, 1.0), (1, true));
        assert_eq!(pair_count(1, 1.0, 0.1), (0, false));
    }

    #[test]
    fn selected_pairs_are_disjoint_members() {
        let rng = RngStream::new(5);
        let cell: Vec<usize> = (100..200).collect();
        let sel = select_pairs(&cell, 1.0, 0.1, &rng, 3);
        assert_eq!(sel.pairs.len(), 5);
        let mut seen: Vec<usize> = sel.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
        assert!(seen.iter().all(|i| (100..200).contains(i)));
        assert!(select_pairs(&[], 1.0, 0.1, &rng, 3).pairs.is_empty());
        let clamped = select_pairs(&[7, 8, 9], 10.0, 1.0, &rng, 0);
        assert_eq!(clamped.pairs.len(), 1);
        assert!(clamped.saturated);
    }

    #[test]
    fn pair_selection_is_uniform() {
        // 10 particles, one pair per draw: each of the 45 unordered pairs
        // should appear with frequency 1/45.
        let rng = RngStream::new(6);
        let cell: Vec<usize> = (0..10).collect();
        let reps = 10_000;
        let mut counts = [[0usize; 10]; 10];
        for step in 0..reps {
            let sel = select_pairs(&cell, 0.2, 1.0, &rng, step);
            assert_eq!(sel.pairs.len(), 1);
            let (a, b) = sel.pairs[0];
            counts[a.min(b)][a.max(b)] += 1;
        }
        let p = 1.0 / 45.0;
        let sd = (reps as f64 * p * (1.0 - p)).sqrt();
        for a in 0..10 {
            for b in (a + 1)..10 {
                let dev = (counts[a][b] as f64 - reps as f64 * p).abs();
                assert!(dev < 5.0 * sd, "pair ({a},{b}) count {}", counts[a][b]);
            }
        }
    }

    #[test]
    fn sigma_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            assert!((norm(sample_sigma(&mut rng)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let (v, v1) = (random_v(&mut rng), random_v(&mut rng));
            let (a, b) = collide(v, v1, sample_sigma(&mut rng));
            let scale_p = 1.0 + norm(v) + norm(v1);
            for k in 0..3 {
                assert!((a[k] + b[k] - v[k] - v1[k]).abs() <= 1e-12 * scale_p);
            }
            let e0 = dot(v, v) + dot(v1, v1);
            assert!((dot(a, a) + dot(b, b) - e0).abs() <= 1e-10 * (1.0 + e0));
        }
    }

    #[test]
    fn jacobian_with_fixed_directions_is_a() {
        // With zeta frozen, the map (v, v1) -> A(sigma, zeta)[v; v1] is what
        // the adjoint differentiates; compare A against central differences of
        // that map evaluated through `collide`'s formula.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = 1e-5;
        for _ in 0..100 {
            let (v, v1) = (random_v(&mut rng), random_v(&mut rng));
            let sigma = sample_sigma(&mut rng);
            let zeta = relative_direction(v, v1).unwrap();
            let frozen = |p: Vec3, q: Vec3| {
                let g = dot(sub(p, q), zeta);
                let mean = scale(add(p, q), 0.5);
                (add(mean, scale(sigma, 0.5 * g)), sub(mean, scale(sigma, 0.5 * g)))
            };
            let a = matrix_a(sigma, zeta).unwrap();
            for c in 0..6 {
                let (mut vp, mut v1p, mut vm, mut v1m) = (v, v1, v, v1);
                if c < 3 {
                    vp[c] += h;
                    vm[c] -= h;
                } else {
                    v1p[c - 3] += h;
                    v1m[c - 3] -= h;
                }
                let (pp, qp) = frozen(vp, v1p);
                let (pm, qm) = frozen(vm, v1m);
                for r in 0..3 {
                    let d_top = (pp[r] - pm[r]) / (2.0 * h);
                    let d_bot = (qp[r] - qm[r]) / (2.0 * h);
                    assert!((d_top - a.0[r][c]).abs() < 1e-6);
                    assert!((d_bot - a.0[r + 3][c]).abs() < 1e-6);
                }
            }
            let (p0, q0) = frozen(v, v1);
            let (pc, qc) = collide(v, v1, sigma);
            for r in 0..3 {
                assert!((p0[r] - pc[r]).abs() < 1e-12 && (q0[r] - qc[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn b_is_the_transpose_of_a_and_undoes_the_collision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (v, v1) = (random_v(&mut rng), random_v(&mut rng));
            let sigma = sample_sigma(&mut rng);
            let zeta = relative_direction(v, v1).unwrap();
            let a = matrix_a(sigma, zeta).unwrap();
            let b = matrix_b(sigma, zeta).unwrap();
            assert_eq!(b, a.transpose());
            let (p, q) = a.apply(v, v1);
            let (vb, v1b) = b.apply(p, q);
            for k in 0..3 {
                assert!((vb[k] - v[k]).abs() < 1e-12 * (1.0 + v[k].abs()));
                assert!((v1b[k] - v1[k]).abs() < 1e-12 * (1.0 + v1[k].abs()));
            }
        }
    }

    #[test]
    fn a_is_singular_so_b_a_is_a_projection() {
        // In (v + v1, v - v1) coordinates A keeps the sum and maps the
        // difference d to sigma (zeta . d): rank 4. B A is the identity on the
        // sum and the projection zeta zeta^T on the difference.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sigma = sample_sigma(&mut rng);
        let zeta = sample_sigma(&mut rng);
        let ba = matrix_b(sigma, zeta).unwrap().mul(&matrix_a(sigma, zeta).unwrap());
        assert!(ba.mul(&ba).max_abs_diff(&ba) < 1e-12);
        assert!(ba.max_abs_diff(&CollisionMatrix::identity()) > 0.1);
    }
}
