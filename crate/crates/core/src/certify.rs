//! Certificate construction and validation.
//!
//! A [`Certificate`] packages the quantitative hypotheses under which the
//! solvers in this crate come with proofs: a bound `m` on the inverse
//! Jacobian at the anchor, a contraction parameter `q ∈ (0,1)`, the ball
//! radius `R` solving `m·ω(R) = q`, and the right-hand-side budget
//! `ρ = (1−q)·R/m`. Everything downstream (solver guarantees, the bounds
//! harness) consumes these numbers; nothing ever assumes a Lipschitz
//! Jacobian, only the modulus `ω`.

use crate::linalg::{inverse_operator_norm, operator_norm, SingularError, Vector};
use crate::problem::{ModulusModel, NonlinearProblem, ProblemInstance};
use crate::sampling::{separated_pair, substream, uniform_in_ball};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack separating genuine inequality violations from float noise.
pub const BOUND_SLACK: f64 = 1e-9;

/// Absolute slack on the budget comparison `delta + r ≤ rho`.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("invalid certificate parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Singular(#[from] SingularError),
    #[error(
        "no admissible radius: target q = {q} exceeds reachable m*omega = {max_reach:.6e} \
         over the searched range"
    )]
    NoRadius { q: f64, max_reach: f64 },
}

/// Quantitative solvability certificate for a problem anchored at `F(y) = f`.
///
/// Invariants (enforced by [`build_certificate`]): `m·ω(R) = q` to 1e-9
/// relative, `rho = (1−q)·R/m`, `q1 = q/(1−q)`, and `newton_mode ⇔ q < 1/2`.
/// Fields are public so that tests can corrupt copies deliberately; treat
/// real certificates as immutable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub m: f64,
    pub q: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub rho: f64,
    pub q1: f64,
    pub newton_mode: bool,
    pub modulus: ModulusModel,
}

impl Certificate {
    /// A certificate backed by a sampled (rather than analytic) modulus can
    /// undershoot the true continuity envelope; outputs label it heuristic.
    pub fn is_heuristic(&self) -> bool {
        self.modulus.is_empirical()
    }

    /// `m/(1−q)`: the certified bound on `‖[F′(u)]⁻¹‖` over `B(y, R)`.
    pub fn inverse_bound(&self) -> f64 {
        self.m / (1.0 - self.q)
    }
}

/// [`Certificate`] extended with the homotopy start data: `delta = ‖h − f‖`,
/// `r = ‖F(u₀) − h‖`, admissible iff `delta + r ≤ rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmCertificate {
    #[serde(flatten)]
    pub base: Certificate,
    pub delta: f64,
    pub r: f64,
    pub admissible: bool,
}

/// Sampling plan for the empirical modulus scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmpiricalModulusConfig {
    pub radii_count: usize,
    pub pairs_per_radius: usize,
    pub rng_seed: u64,
}

impl Default for EmpiricalModulusConfig {
    fn default() -> Self {
        Self {
            radii_count: 32,
            pairs_per_radius: 256,
            rng_seed: 0,
        }
    }
}

/// Outcome of a sampled inequality check: how many points were tested, the
/// worst value seen, and how many exceeded the certified bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheckSummary {
    pub bound: f64,
    pub max_observed: f64,
    pub violations: usize,
    pub samples: usize,
}

fn anchor(p: &NonlinearProblem) -> &Vector {
    p.known_solution()
        .expect("certification requires a problem with a known solution")
}

/// Tightest admissible bound on `‖[F′(y)]⁻¹‖`.
///
/// Panics if the problem has no known solution; fails if the Jacobian at the
/// anchor is numerically singular (no certificate exists then).
pub fn estimate_m(p: &NonlinearProblem) -> Result<f64, CertifyError> {
    let jy = p.jacobian(anchor(p));
    Ok(inverse_operator_norm(&jy)?)
}

/// Sampled continuity envelope for the Jacobian over `B(y, radius_max)`.
///
/// For each radius `r_k` on a geometric grid spanning
/// `[radius_max/16, radius_max]`, takes the max of `‖F′(u) − F′(v)‖` over
/// `pairs_per_radius` pairs with `‖u − v‖ ≤ r_k`. Pairs alternate between
/// probes anchored at `y` (where the catalog Jacobians vary fastest) and
/// free pairs anywhere in the ball. Values are made strictly increasing by a
/// running max plus a `1e-15·k` tie-break, so the result is always a valid
/// [`ModulusModel`]. Deterministic given `cfg.rng_seed`; each radius draws
/// from its own substream, so the grid may be scanned in any order.
pub fn sample_modulus(
    p: &NonlinearProblem,
    radius_max: f64,
    cfg: &EmpiricalModulusConfig,
) -> Result<ModulusModel, CertifyError> {
    if !(radius_max.is_finite() && radius_max > 0.0) {
        return Err(CertifyError::InvalidParameter(format!(
            "modulus scan radius must be positive, got {radius_max}"
        )));
    }
    if cfg.radii_count == 0 || cfg.pairs_per_radius == 0 {
        return Err(CertifyError::InvalidParameter(
            "modulus scan needs at least one radius and one pair per radius".to_string(),
        ));
    }
    let y = anchor(p);
    let jy = p.jacobian(y);

    const GRID_SPAN: f64 = 16.0;
    let k_last = cfg.radii_count - 1;
    let radii: Vec<f64> = (0..cfg.radii_count)
        .map(|k| {
            if k == k_last {
                radius_max
            } else {
                radius_max * GRID_SPAN.powf(-((k_last - k) as f64) / k_last as f64)
            }
        })
        .collect();

    let mut values = Vec::with_capacity(cfg.radii_count);
    for (k, &rk) in radii.iter().enumerate() {
        let mut rng = substream(cfg.rng_seed, k as u64);
        let mut worst = 0.0f64;
        for pair_idx in 0..cfg.pairs_per_radius {
            let gap = if pair_idx % 2 == 0 {
                // Anchored probe: v ∈ B(y, r_k) against the anchor itself.
                let v = uniform_in_ball(&mut rng, y, rk);
                p.jacobian(&v).sub(&jy)
            } else {
                let (u, v) = separated_pair(&mut rng, y, radius_max, rk);
                p.jacobian(&u).sub(&p.jacobian(&v))
            };
            worst = worst.max(operator_norm(&gap));
        }
        values.push(worst);
    }

    let mut running = 0.0f64;
    for (k, v) in values.iter_mut().enumerate() {
        running = running.max(*v);
        *v = running + 1e-15 * (k + 1) as f64;
    }

    Ok(ModulusModel::empirical(radii, values).expect("scan output is strictly increasing"))
}

/// The unique `R` with `m·ω(R) = q`, located by bisection on
/// `(0, min(r_max, domain of ω)]`.
///
/// `ω` strictly increasing makes the root unique and bisection
/// unconditionally convergent; the bracket is tightened to `1e-12` relative.
/// Fails with [`CertifyError::NoRadius`] when even the largest searchable
/// radius cannot reach `q/m`.
pub fn solve_radius(
    m: f64,
    w: &ModulusModel,
    q: f64,
    r_max: f64,
) -> Result<f64, CertifyError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(CertifyError::InvalidParameter(format!(
            "inverse bound m must be positive, got {m}"
        )));
    }
    if !(q.is_finite() && 0.0 < q && q < 1.0) {
        return Err(CertifyError::InvalidParameter(format!(
            "contraction parameter q must lie in (0, 1), got {q}"
        )));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(CertifyError::InvalidParameter(format!(
            "search radius must be positive, got {r_max}"
        )));
    }
    let hi_cap = match w.domain_max() {
        Some(d) => r_max.min(d),
        None => r_max,
    };
    let eval = |r: f64| m * w.eval(r).expect("radius clamped to modulus domain");
    let max_reach = eval(hi_cap);
    if max_reach < q {
        return Err(CertifyError::NoRadius { q, max_reach });
    }

    let (mut lo, mut hi) = (0.0f64, hi_cap);
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Assemble the full certificate: `m` from the anchor Jacobian, `ω` from the
/// problem's declared modulus (or a sampled scan when none is declared), `R`
/// from `m·ω(R) = q`, and the derived `rho`, `q1`, `newton_mode`.
pub fn build_certificate(
    p: &NonlinearProblem,
    q: f64,
    r_max: f64,
    cfg: &EmpiricalModulusConfig,
) -> Result<Certificate, CertifyError> {
    if !(q.is_finite() && 0.0 < q && q < 1.0) {
        return Err(CertifyError::InvalidParameter(format!(
            "contraction parameter q must lie in (0, 1), got {q}"
        )));
    }
    let m = estimate_m(p)?;
    let modulus = match p.known_modulus() {
        Some(w) => w.clone(),
        None => sample_modulus(p, r_max, cfg)?,
    };
    let radius = solve_radius(m, &modulus, q, r_max)?;
    Ok(Certificate {
        m,
        q,
        radius,
        rho: (1.0 - q) * radius / m,
        q1: q / (1.0 - q),
        newton_mode: q < 0.5,
        modulus,
    })
}

/// Is the right-hand side within the certified budget, `‖h − f‖ ≤ ρ`?
///
/// Panics if the problem has no recorded anchor right-hand side.
pub fn check_rhs_admissible(c: &Certificate, p: &NonlinearProblem, h: &Vector) -> bool {
    let f = p
        .known_rhs()
        .expect("rhs admissibility requires the anchor right-hand side");
    h.sub(f).norm() <= c.rho
}

/// Extend a certificate with the homotopy start data of an instance:
/// `delta = ‖h − f‖`, `r = ‖F(u₀) − h‖`, admissible iff `delta + r ≤ rho`
/// (with 1e-12 absolute slack).
pub fn build_dsm_certificate(c: &Certificate, inst: &ProblemInstance) -> DsmCertificate {
    let p = inst.problem();
    let f = p
        .known_rhs()
        .expect("homotopy certification requires the anchor right-hand side");
    let delta = inst.rhs().sub(f).norm();
    let r = inst.residual(inst.initial_guess());
    DsmCertificate {
        base: c.clone(),
        delta,
        r,
        admissible: delta + r <= c.rho + ADMISSIBILITY_SLACK,
    }
}

/// Sample `‖[F′(u)]⁻¹‖` over `B(y, R)` and compare against the certified
/// bound `m/(1−q)` (with 1e-9 relative slack). A numerically singular
/// Jacobian inside the certified ball counts as a violation.
pub fn check_inverse_bound(
    c: &Certificate,
    p: &NonlinearProblem,
    samples: usize,
    rng_seed: u64,
) -> BoundCheckSummary {
    let y = anchor(p);
    let bound = c.inverse_bound();
    let mut rng = substream(rng_seed, 0);
    let mut max_observed = 0.0f64;
    let mut violations = 0;
    for _ in 0..samples {
        let u = uniform_in_ball(&mut rng, y, c.radius);
        match inverse_operator_norm(&p.jacobian(&u)) {
            Ok(norm) => {
                max_observed = max_observed.max(norm);
                if norm > bound * (1.0 + BOUND_SLACK) {
                    violations += 1;
                }
            }
            Err(_) => violations += 1,
        }
    }
    BoundCheckSummary {
        bound,
        max_observed,
        violations,
        samples,
    }
}
