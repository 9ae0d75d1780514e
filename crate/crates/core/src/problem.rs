//! Nonlinear problem abstraction and a small catalog of test problems.
//!
//! A [`NonlinearProblem`] bundles the map `F`, its Jacobian, and (when known)
//! an anchor solution `y` with `F(y) = f` plus a continuity envelope for the
//! Jacobian. The catalog deliberately includes Hölder (non-Lipschitz)
//! Jacobians: the solvers and certificates in this crate only ever assume a
//! modulus of continuity, and the catalog is built to exercise exactly that
//! regime.

use crate::linalg::{Matrix, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn require(cond: bool, msg: &str) -> Result<(), ProblemError> {
    if cond {
        Ok(())
    } else {
        Err(ProblemError::InvalidParameter(msg.to_string()))
    }
}

// ─── Modulus of continuity ───────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModulusError {
    #[error("invalid modulus model: {0}")]
    Invalid(String),
    #[error("radius {r} outside empirical modulus domain [0, {domain_max}]")]
    OutOfDomain { r: f64, domain_max: f64 },
}

/// Modulus of continuity `ω(r)` for a Jacobian over a ball: strictly
/// increasing, continuous, `ω(0) = 0`. Either an analytic power law
/// `ω(r) = L·r^α` or an empirical piecewise-linear envelope through sampled
/// knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModulusRepr", into = "ModulusRepr")]
pub struct ModulusModel {
    kind: ModulusKind,
}

#[derive(Debug, Clone, PartialEq)]
enum ModulusKind {
    PowerLaw { l: f64, alpha: f64 },
    Empirical { radii: Vec<f64>, values: Vec<f64> },
}

impl ModulusModel {
    /// `ω(r) = l·r^alpha` with `l > 0`, `alpha ∈ (0, 1]`.
    pub fn power_law(l: f64, alpha: f64) -> Result<Self, ModulusError> {
        if !(l.is_finite() && l > 0.0) {
            return Err(ModulusError::Invalid(format!(
                "power-law coefficient must be positive and finite, got {l}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(ModulusError::Invalid(format!(
                "power-law exponent must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            kind: ModulusKind::PowerLaw { l, alpha },
        })
    }

    /// Piecewise-linear model through `(radii[i], values[i])`, linearly
    /// extended from `(0, 0)` below the first knot. Both lists must be
    /// strictly increasing; if `radii` starts at 0 the first value must be 0.
    pub fn empirical(radii: Vec<f64>, values: Vec<f64>) -> Result<Self, ModulusError> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(ModulusError::Invalid(
                "empirical model needs equal, nonzero knot counts".to_string(),
            ));
        }
        let finite = radii.iter().chain(&values).all(|x| x.is_finite());
        if !finite || radii[0] < 0.0 || values[0] < 0.0 {
            return Err(ModulusError::Invalid(
                "empirical knots must be finite and nonnegative".to_string(),
            ));
        }
        let strictly_inc = |xs: &[f64]| xs.windows(2).all(|w| w[0] < w[1]);
        if !strictly_inc(&radii) || !strictly_inc(&values) {
            return Err(ModulusError::Invalid(
                "empirical knots must be strictly increasing in both radius and value".to_string(),
            ));
        }
        if radii[0] == 0.0 && values[0] != 0.0 {
            return Err(ModulusError::Invalid(
                "empirical modulus must vanish at radius 0".to_string(),
            ));
        }
        Ok(Self {
            kind: ModulusKind::Empirical { radii, values },
        })
    }

    /// Evaluate `ω(r)`. Errors only for an empirical model queried beyond its
    /// last knot; the power law is defined for every `r ≥ 0`.
    pub fn eval(&self, r: f64) -> Result<f64, ModulusError> {
        assert!(
            r.is_finite() && r >= 0.0,
            "modulus argument must be a finite nonnegative radius"
        );
        match &self.kind {
            ModulusKind::PowerLaw { l, alpha } => Ok(l * r.powf(*alpha)),
            ModulusKind::Empirical { radii, values } => {
                let last = *radii.last().expect("nonempty by construction");
                if r > last {
                    return Err(ModulusError::OutOfDomain { r, domain_max: last });
                }
                let (mut r_prev, mut v_prev) = (0.0, 0.0);
                for (&rk, &vk) in radii.iter().zip(values) {
                    if r <= rk {
                        // rk == r_prev only at the r == 0 knot itself.
                        if rk == r_prev {
                            return Ok(vk);
                        }
                        let w = (r - r_prev) / (rk - r_prev);
                        return Ok(v_prev + w * (vk - v_prev));
                    }
                    (r_prev, v_prev) = (rk, vk);
                }
                unreachable!("r <= last knot is handled inside the loop")
            }
        }
    }

    /// Largest radius at which the model is defined; `None` when unbounded.
    pub fn domain_max(&self) -> Option<f64> {
        match &self.kind {
            ModulusKind::PowerLaw { .. } => None,
            ModulusKind::Empirical { radii, .. } => radii.last().copied(),
        }
    }

    /// Multiply the model pointwise by `factor > 0` (used to add headroom to
    /// sampled envelopes). Monotonicity is preserved.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(
            factor.is_finite() && factor > 0.0,
            "scaling factor must be positive"
        );
        let kind = match &self.kind {
            ModulusKind::PowerLaw { l, alpha } => ModulusKind::PowerLaw {
                l: l * factor,
                alpha: *alpha,
            },
            ModulusKind::Empirical { radii, values } => ModulusKind::Empirical {
                radii: radii.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
        };
        Self { kind }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.kind, ModulusKind::Empirical { .. })
    }

    pub fn as_power_law(&self) -> Option<(f64, f64)> {
        match self.kind {
            ModulusKind::PowerLaw { l, alpha } => Some((l, alpha)),
            _ => None,
        }
    }

    pub fn as_empirical(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            ModulusKind::Empirical { radii, values } => Some((radii, values)),
            _ => None,
        }
    }
}

// Wire format: {"type":"power-law","params":{"L":..,"alpha":..}} or
// {"type":"empirical","knots":[[r,v],...]}.
#[derive(Serialize, Deserialize, Clone)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum ModulusRepr {
    PowerLaw { params: PowerLawParams },
    Empirical { knots: Vec<(f64, f64)> },
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct PowerLawParams {
    #[serde(rename = "L")]
    l: f64,
    alpha: f64,
}

impl From<ModulusModel> for ModulusRepr {
    fn from(m: ModulusModel) -> Self {
        match m.kind {
            ModulusKind::PowerLaw { l, alpha } => ModulusRepr::PowerLaw {
                params: PowerLawParams { l, alpha },
            },
            ModulusKind::Empirical { radii, values } => ModulusRepr::Empirical {
                knots: radii.into_iter().zip(values).collect(),
            },
        }
    }
}

impl TryFrom<ModulusRepr> for ModulusModel {
    type Error = ModulusError;
    fn try_from(repr: ModulusRepr) -> Result<Self, ModulusError> {
        match repr {
            ModulusRepr::PowerLaw { params } => Self::power_law(params.l, params.alpha),
            ModulusRepr::Empirical { knots } => {
                let (radii, values) = knots.into_iter().unzip();
                Self::empirical(radii, values)
            }
        }
    }
}

// ─── Problem abstraction ─────────────────────────────────────────────────

type EvalFn = Box<dyn Fn(&Vector) -> Vector + Send + Sync>;
type JacobianFn = Box<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A square nonlinear system `F: ℝⁿ → ℝⁿ` with an evaluable Jacobian.
///
/// `known_solution` / `known_rhs` record an anchor pair `F(y) = f` when one
/// is available (every catalog problem has one); `known_modulus` is an upper
/// envelope for `‖F′(u) − F′(v)‖` as a function of `‖u − v‖` over the unit
/// ball around `y`. Evaluation closures must be pure: problems are shared
/// freely across threads.
pub struct NonlinearProblem {
    dim: usize,
    f: EvalFn,
    jacobian: JacobianFn,
    known_solution: Option<Vector>,
    known_rhs: Option<Vector>,
    known_modulus: Option<ModulusModel>,
}

impl std::fmt::Debug for NonlinearProblem {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("NonlinearProblem")
            .field("dim", &self.dim)
            .field("known_solution", &self.known_solution)
            .field("known_rhs", &self.known_rhs)
            .field("known_modulus", &self.known_modulus)
            .finish_non_exhaustive()
    }
}

impl NonlinearProblem {
    pub fn new(dim: usize, f: EvalFn, jacobian: JacobianFn) -> Self {
        assert!(dim >= 1, "problems have dimension >= 1");
        Self {
            dim,
            f,
            jacobian,
            known_solution: None,
            known_rhs: None,
            known_modulus: None,
        }
    }

    /// Record the anchor pair `F(y) = f`.
    pub fn with_anchor(mut self, y: Vector, f: Vector) -> Self {
        assert_eq!(y.dim(), self.dim, "anchor solution dimension mismatch");
        assert_eq!(f.dim(), self.dim, "anchor rhs dimension mismatch");
        self.known_solution = Some(y);
        self.known_rhs = Some(f);
        self
    }

    pub fn with_modulus(mut self, modulus: ModulusModel) -> Self {
        self.known_modulus = Some(modulus);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, u: &Vector) -> Vector {
        assert_eq!(u.dim(), self.dim, "eval: dimension mismatch");
        let out = (self.f)(u);
        assert_eq!(out.dim(), self.dim, "eval closure broke dimension");
        out
    }

    pub fn jacobian(&self, u: &Vector) -> Matrix {
        assert_eq!(u.dim(), self.dim, "jacobian: dimension mismatch");
        let out = (self.jacobian)(u);
        assert_eq!(out.dim(), self.dim, "jacobian closure broke dimension");
        out
    }

    pub fn known_solution(&self) -> Option<&Vector> {
        self.known_solution.as_ref()
    }

    pub fn known_rhs(&self) -> Option<&Vector> {
        self.known_rhs.as_ref()
    }

    pub fn known_modulus(&self) -> Option<&ModulusModel> {
        self.known_modulus.as_ref()
    }
}

/// A problem paired with the right-hand side to solve for and a start point.
#[derive(Debug)]
pub struct ProblemInstance {
    problem: NonlinearProblem,
    rhs: Vector,
    initial_guess: Vector,
}

impl ProblemInstance {
    pub fn new(
        problem: NonlinearProblem,
        rhs: Vector,
        initial_guess: Vector,
    ) -> Result<Self, ProblemError> {
        for v in [&rhs, &initial_guess] {
            if v.dim() != problem.dim() {
                return Err(ProblemError::DimensionMismatch {
                    expected: problem.dim(),
                    got: v.dim(),
                });
            }
        }
        Ok(Self {
            problem,
            rhs,
            initial_guess,
        })
    }

    pub fn problem(&self) -> &NonlinearProblem {
        &self.problem
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    pub fn initial_guess(&self) -> &Vector {
        &self.initial_guess
    }

    /// `‖F(u) − h‖`, the quantity every solver drives to zero.
    pub fn residual(&self, u: &Vector) -> f64 {
        self.problem.eval(u).sub(&self.rhs).norm()
    }
}

// ─── Catalog ─────────────────────────────────────────────────────────────

/// One-dimensional `F(u) = u + c·u·|u|^α/(1+α)` with `F′(u) = 1 + c·|u|^α`.
///
/// The Jacobian is α-Hölder but not Lipschitz at the solution `y = 0`: the
/// difference quotient `|F′(u) − F′(0)|/|u|` blows up as `u → 0`. The power
/// law `ω(r) = c·r^α` is exact (reverse triangle inequality on `|·|^α`).
pub fn catalog_scalar_hoelder(c: f64, alpha: f64) -> Result<NonlinearProblem, ProblemError> {
    require(c.is_finite() && c > 0.0, "scalar-hoelder: c must be positive")?;
    require(
        alpha.is_finite() && 0.0 < alpha && alpha < 1.0,
        "scalar-hoelder: alpha must lie in (0, 1)",
    )?;
    // u·|u|^α equals sign(u)·|u|^{1+α} and is exactly 0 at u = 0, so F is C¹
    // everywhere including the origin.
    let f = move |u: &Vector| {
        let x = u[0];
        Vector::new(vec![x + c * x * x.abs().powf(alpha) / (1.0 + alpha)])
    };
    let jac = move |u: &Vector| {
        let mut j = Matrix::zeros(1);
        j[(0, 0)] = 1.0 + c * u[0].abs().powf(alpha);
        j
    };
    let modulus = ModulusModel::power_law(c, alpha).expect("params validated above");
    Ok(NonlinearProblem::new(1, Box::new(f), Box::new(jac))
        .with_anchor(Vector::zeros(1), Vector::zeros(1))
        .with_modulus(modulus))
}

/// n-dimensional Hölder family: component `i` is the scalar map above in
/// `u_i`, plus a smooth cyclic coupling `coupling·sin(u_{i+1 mod n})` that
/// makes the Jacobian non-diagonal.
///
/// Modulus: `ω(r) = (c + coupling)·r^α`, valid for `r ≤ 1`. The Hölder part
/// contributes `c·r^α`; the coupling part is 1-Lipschitz per entry and sits
/// alone in its row and column, so its operator-norm contribution is at most
/// `coupling·r ≤ coupling·r^α` on `r ≤ 1`.
pub fn catalog_diag_hoelder(
    n: usize,
    c: f64,
    alpha: f64,
    coupling: f64,
) -> Result<NonlinearProblem, ProblemError> {
    require(n >= 1, "diag-hoelder: n must be at least 1")?;
    require(c.is_finite() && c > 0.0, "diag-hoelder: c must be positive")?;
    require(
        alpha.is_finite() && 0.0 < alpha && alpha < 1.0,
        "diag-hoelder: alpha must lie in (0, 1)",
    )?;
    require(
        coupling.is_finite() && (0.0..=0.1).contains(&coupling),
        "diag-hoelder: coupling must lie in [0, 0.1]",
    )?;
    let f = move |u: &Vector| {
        Vector::from_fn(n, |i| {
            let x = u[i];
            x + c * x * x.abs().powf(alpha) / (1.0 + alpha) + coupling * u[(i + 1) % n].sin()
        })
    };
    let jac = move |u: &Vector| {
        let mut j = Matrix::zeros(n);
        for i in 0..n {
            j[(i, i)] = 1.0 + c * u[i].abs().powf(alpha);
            // For n = 1 this lands on the diagonal; += keeps that case right.
            j[(i, (i + 1) % n)] += coupling * u[(i + 1) % n].cos();
        }
        j
    };
    let modulus = ModulusModel::power_law(c + coupling, alpha).expect("params validated above");
    Ok(NonlinearProblem::new(n, Box::new(f), Box::new(jac))
        .with_anchor(Vector::zeros(n), Vector::zeros(n))
        .with_modulus(modulus))
}

// Headroom applied to the sampled envelope of the Hammerstein problem so
// that an independent re-sampling (more pairs, different seed) still lands
// below it. The underlying Jacobian is smooth, so sampled maxima concentrate
// tightly and 35% is generous.
const HAMMERSTEIN_ENVELOPE_HEADROOM: f64 = 1.35;

/// Trapezoid discretization on `[0, 1]` of the integral equation
/// `u(x) + lam·x·∫₀¹ s·u³(s) ds = g(x)`: a smooth (Lipschitz-Jacobian)
/// baseline with a rank-one nonlinearity.
///
/// `F(0) = 0` exactly, so the anchor is `y = 0`, `f = 0`. No analytic
/// modulus is recorded; a sampled envelope over the unit ball (with safety
/// headroom) stands in, which downstream certificates treat as heuristic.
pub fn catalog_smooth_hammerstein(n: usize, lam: f64) -> Result<NonlinearProblem, ProblemError> {
    require(n >= 2, "hammerstein: n must be at least 2 (grid on [0,1])")?;
    require(
        lam.is_finite() && (0.0..1.0).contains(&lam),
        "hammerstein: lam must lie in [0, 1)",
    )?;
    let h = 1.0 / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let mut w = vec![h; n];
    w[0] = h / 2.0;
    w[n - 1] = h / 2.0;

    let (xf, wf) = (x.clone(), w.clone());
    let f = move |u: &Vector| {
        let s: f64 = (0..n).map(|j| wf[j] * xf[j] * u[j].powi(3)).sum();
        Vector::from_fn(n, |i| u[i] + lam * xf[i] * s)
    };
    let (xj, wj) = (x, w);
    let jac = move |u: &Vector| {
        Matrix::from_fn(n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id + 3.0 * lam * xj[i] * wj[j] * xj[j] * u[j] * u[j]
        })
    };

    let problem = NonlinearProblem::new(n, Box::new(f), Box::new(jac))
        .with_anchor(Vector::zeros(n), Vector::zeros(n));

    // Envelope sampled over the unit ball at construction; deterministic in
    // (n, lam) so equal parameters always yield the identical model.
    let cfg = crate::certify::EmpiricalModulusConfig {
        radii_count: 16,
        pairs_per_radius: 256,
        rng_seed: 0x4861_6d6d ^ (n as u64) ^ lam.to_bits().rotate_left(17),
    };
    let modulus = crate::certify::sample_modulus(&problem, 1.0, &cfg)
        .expect("anchor recorded above")
        .scaled(HAMMERSTEIN_ENVELOPE_HEADROOM);
    Ok(problem.with_modulus(modulus))
}

// ─── Jacobian consistency ────────────────────────────────────────────────

/// Worst relative deviation between the analytic Jacobian and a central
/// finite difference of `F` (step `1e-6`) over `points` samples drawn
/// uniformly from `B(center, radius)`. Deviation is measured entrywise
/// against `max(1, max|J|)`.
pub fn finite_difference_error(
    p: &NonlinearProblem,
    center: &Vector,
    radius: f64,
    points: usize,
    seed: u64,
) -> f64 {
    const STEP: f64 = 1e-6;
    let n = p.dim();
    let mut rng = crate::sampling::substream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let u = crate::sampling::uniform_in_ball(&mut rng, center, radius);
        let j = p.jacobian(&u);
        let scale = j.max_abs().max(1.0);
        for col in 0..n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[col] += STEP;
            dn[col] -= STEP;
            let diff = p.eval(&up).sub(&p.eval(&dn)).scale(1.0 / (2.0 * STEP));
            for row in 0..n {
                worst = worst.max((diff[row] - j[(row, col)]).abs() / scale);
            }
        }
    }
    worst
}
