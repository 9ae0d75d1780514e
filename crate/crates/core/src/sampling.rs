//! Seeded random sampling in Euclidean balls.
//!
//! All randomized checks in this crate draw through these helpers with an
//! explicit [`ChaCha8Rng`], so every result is reproducible from a single
//! `u64` seed. Substreams (one per sample batch) come from
//! [`ChaCha8Rng::set_stream`], which decorrelates batches without any
//! seed arithmetic.

use crate::linalg::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// RNG seeded at `seed`, positioned on substream `stream`. Distinct streams
/// with the same seed produce independent sequences.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly distributed unit vector in dimension `n` (Gaussian direction).
pub fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_| rng.sample(StandardNormal));
        let norm = v.norm();
        // Resample on the (measure-zero, but float-possible) degenerate draw.
        if norm > 1e-12 {
            return v.scale(1.0 / norm);
        }
    }
}

/// Uniform sample from the closed ball of radius `radius` around `center`.
pub fn uniform_in_ball(rng: &mut ChaCha8Rng, center: &Vector, radius: f64) -> Vector {
    assert!(radius >= 0.0, "ball radius must be nonnegative");
    let n = center.dim();
    let dir = unit_direction(rng, n);
    // r = R·u^{1/n} gives the uniform radial law in dimension n.
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / n as f64);
    center.axpy(r, &dir)
}

/// A pair `(u, v)` with `u, v ∈ B(center, ball_radius)` and
/// `‖u − v‖ ≤ max_separation`: `u` uniform in the ball, `v = u + δ` with `δ`
/// uniform in the separation ball, re-drawn while `v` escapes. After 64
/// failed draws the pair degenerates to `(u, u)`, which any max-style
/// consumer treats as a harmless zero.
pub fn separated_pair(
    rng: &mut ChaCha8Rng,
    center: &Vector,
    ball_radius: f64,
    max_separation: f64,
) -> (Vector, Vector) {
    let origin = Vector::zeros(center.dim());
    let u = uniform_in_ball(rng, center, ball_radius);
    for _ in 0..64 {
        let v = u.add(&uniform_in_ball(rng, &origin, max_separation));
        if v.sub(center).norm() <= ball_radius {
            return (u, v);
        }
    }
    let v = u.clone();
    (u, v)
}
