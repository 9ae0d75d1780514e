//! The three solution procedures, all emitting bound-checkable traces.
//!
//! - [`newton_solve`]: the classical update `uₙ₊₁ = uₙ − [F′(uₙ)]⁻¹(F(uₙ)−h)`.
//! - [`contraction_solve`]: Picard iteration of `T(u) = u − Q·(F(u)−h)` with
//!   `Q = [F′(y)]⁻¹` frozen at the known solution; one factorization total.
//! - [`dsm_ode_solve`] / [`dsm_homotopy_solve`]: two independent
//!   realizations of the continuous Newton flow `u̇ = −[F′(u)]⁻¹(F(u)−h)`,
//!   whose exact solution keeps `F(u(t)) − h = e^{−t}·(F(u₀)−h)`. The first
//!   integrates the flow with fixed-step RK4; the second solves
//!   `F(u) = h + e^{−t_k}v₀` node by node with warm-started inner Newton
//!   steps. Agreement between the two is itself a checked property.
//!
//! Solvers never throw on numerical failure: divergence, stagnation, and
//! singular Jacobians are encoded in the trace so that the bounds harness
//! can inspect exactly what happened.

use crate::certify::Certificate;
use crate::linalg::{lu_factor, LuFactors, SingularError, Vector, DEFAULT_PIVOT_TOL};
use crate::problem::{NonlinearProblem, ProblemInstance};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("solver requires a problem with a known solution")]
    MissingKnownSolution,
    #[error(transparent)]
    Singular(#[from] SingularError),
    #[error("trajectory was truncated before reaching its final time")]
    TruncatedTrace,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Shared solver knobs. Deserializes from partial JSON; missing fields take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Stop when `‖F(u) − h‖` falls to this level.
    pub residual_tol: f64,
    /// Iteration cap for the discrete solvers.
    pub max_iter: usize,
    /// Final time for both continuous-flow realizations.
    pub dsm_t_end: f64,
    /// RK4 step for the direct integration.
    pub dsm_step: f64,
    /// Grid intervals for the homotopy realization.
    pub homotopy_nodes: usize,
    /// Declare divergence when the residual exceeds this multiple of its
    /// initial value.
    pub divergence_factor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            max_iter: 200,
            dsm_t_end: 30.0,
            dsm_step: 0.05,
            homotopy_nodes: 64,
            divergence_factor: 1e6,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("residual_tol", self.residual_tol),
            ("dsm_t_end", self.dsm_t_end),
            ("dsm_step", self.dsm_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_iter == 0 || self.homotopy_nodes == 0 {
            return Err(SolverError::InvalidConfig(
                "max_iter and homotopy_nodes must be at least 1".to_string(),
            ));
        }
        if !(self.divergence_factor.is_finite() && self.divergence_factor > 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "divergence_factor must exceed 1, got {}",
                self.divergence_factor
            )));
        }
        Ok(())
    }
}

/// Why an iteration stopped. `ResidualTol` is the only success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ResidualTol,
    MaxIter,
    Diverged,
    SingularJacobian,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::ResidualTol => "residual tolerance reached",
            StopReason::MaxIter => "iteration cap reached",
            StopReason::Diverged => "residual diverged",
            StopReason::SingularJacobian => "singular Jacobian",
        };
        fmt.write_str(s)
    }
}

/// One discrete iterate: its index, the point, the residual `‖F(u) − h‖`,
/// and (when the problem has a known solution) the distance to it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStep {
    pub index: usize,
    pub u: Vector,
    pub residual: f64,
    pub dist_to_solution: Option<f64>,
}

/// Full record of a discrete solve. Step 0 is always the initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl IterationTrace {
    pub fn final_step(&self) -> &IterationStep {
        self.steps.last().expect("traces hold at least the start")
    }

    /// Number of updates applied (one less than recorded steps).
    pub fn iterations(&self) -> usize {
        self.steps.len() - 1
    }
}

/// One node of a continuous-flow trace: time, point, `‖u̇‖`, the residual
/// against the original right-hand side, and the distance to the known
/// solution when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNode {
    pub t: f64,
    pub u: Vector,
    pub udot_norm: f64,
    pub residual: f64,
    pub dist_to_solution: Option<f64>,
}

/// Record of a continuous-flow solve. `truncated` marks a trace cut short by
/// a singular Jacobian or failed inner solve; `r0 = ‖F(u₀) − h‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTrace {
    pub nodes: Vec<TrajectoryNode>,
    pub u_final: Vector,
    pub r0: f64,
    pub truncated: bool,
}

impl TrajectoryTrace {
    pub fn t_final(&self) -> Option<f64> {
        self.nodes.last().map(|n| n.t)
    }
}

/// Certified enclosure of the flow's limit: the limit lies within
/// `tail_bound` of `u_inf_estimate`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    pub u_inf_estimate: Vector,
    pub tail_bound: f64,
}

// ─── Discrete solvers ────────────────────────────────────────────────────

fn make_step(inst: &ProblemInstance, index: usize, u: Vector) -> IterationStep {
    let residual = inst.residual(&u);
    let dist_to_solution = inst
        .problem()
        .known_solution()
        .map(|y| u.sub(y).norm());
    IterationStep {
        index,
        u,
        residual,
        dist_to_solution,
    }
}

// Shared stopping logic: record the start, then apply `update` until the
// residual meets tolerance, exceeds the divergence threshold (or goes
// non-finite), the cap is hit, or a factorization fails.
fn drive_iteration(
    inst: &ProblemInstance,
    cfg: &SolveConfig,
    mut update: impl FnMut(&Vector) -> Result<Vector, SingularError>,
) -> IterationTrace {
    let mut steps = vec![make_step(inst, 0, inst.initial_guess().clone())];
    let r0 = steps[0].residual;
    let stop_reason = loop {
        let last = steps.last().expect("nonempty");
        if last.residual <= cfg.residual_tol {
            break StopReason::ResidualTol;
        }
        if !last.residual.is_finite() || last.residual > cfg.divergence_factor * r0 {
            break StopReason::Diverged;
        }
        if steps.len() > cfg.max_iter {
            break StopReason::MaxIter;
        }
        match update(&last.u) {
            Ok(next) => {
                let index = steps.len();
                steps.push(make_step(inst, index, next));
            }
            Err(_) => break StopReason::SingularJacobian,
        }
    };
    IterationTrace {
        steps,
        converged: stop_reason == StopReason::ResidualTol,
        stop_reason,
    }
}

/// Newton iteration for `F(u) = h` from the instance's initial guess.
///
/// All failure modes land in the trace's `stop_reason`; nothing is thrown.
pub fn newton_solve(inst: &ProblemInstance, cfg: &SolveConfig) -> IterationTrace {
    let p = inst.problem();
    drive_iteration(inst, cfg, |u| {
        let factors = lu_factor(&p.jacobian(u), DEFAULT_PIVOT_TOL)?;
        let step = factors.solve(&p.eval(u).sub(inst.rhs()));
        Ok(u.sub(&step))
    })
}

/// Picard iteration of the frozen-Jacobian map `T(u) = u − Q·(F(u) − h)`,
/// `Q = [F′(y)]⁻¹`. Needs a known solution to freeze at; a singular `F′(y)`
/// is reported through the trace like every other failure.
pub fn contraction_solve(
    inst: &ProblemInstance,
    cfg: &SolveConfig,
) -> Result<IterationTrace, SolverError> {
    let p = inst.problem();
    let y = p
        .known_solution()
        .ok_or(SolverError::MissingKnownSolution)?;
    let frozen: Result<LuFactors, SingularError> = lu_factor(&p.jacobian(y), DEFAULT_PIVOT_TOL);
    Ok(drive_iteration(inst, cfg, |u| {
        let q = frozen.as_ref().map_err(Clone::clone)?;
        Ok(u.sub(&q.solve(&p.eval(u).sub(inst.rhs()))))
    }))
}

// ─── Continuous solvers ──────────────────────────────────────────────────

// Newton vector field: φ(u) = −[F′(u)]⁻¹(F(u) − h), returned with the
// residual ‖F(u) − h‖ so node recording reuses the evaluation.
fn newton_field(
    inst: &ProblemInstance,
    u: &Vector,
) -> Result<(Vector, f64), SingularError> {
    let p = inst.problem();
    let gap = p.eval(u).sub(inst.rhs());
    let residual = gap.norm();
    let factors = lu_factor(&p.jacobian(u), DEFAULT_PIVOT_TOL)?;
    Ok((factors.solve(&gap).scale(-1.0), residual))
}

fn trajectory_node(
    inst: &ProblemInstance,
    t: f64,
    u: Vector,
    udot_norm: f64,
    residual: f64,
) -> TrajectoryNode {
    let dist_to_solution = inst
        .problem()
        .known_solution()
        .map(|y| u.sub(y).norm());
    TrajectoryNode {
        t,
        u,
        udot_norm,
        residual,
        dist_to_solution,
    }
}

fn finish_trajectory(nodes: Vec<TrajectoryNode>, r0: f64, truncated: bool) -> TrajectoryTrace {
    let u_final = nodes
        .last()
        .map(|n| n.u.clone())
        .unwrap_or_else(|| Vector::zeros(1));
    TrajectoryTrace {
        nodes,
        u_final,
        r0,
        truncated,
    }
}

/// Integrate the Newton flow with classical fixed-step RK4 up to
/// `cfg.dsm_t_end`, recording a node every step. A singular Jacobian (or a
/// non-finite state) truncates the trace; nodes before the failure survive.
pub fn dsm_ode_solve(inst: &ProblemInstance, cfg: &SolveConfig) -> TrajectoryTrace {
    let r0 = inst.residual(inst.initial_guess());
    let n_steps = ((cfg.dsm_t_end / cfg.dsm_step).round() as usize).max(1);
    let dt = cfg.dsm_t_end / n_steps as f64;

    let (mut k1, _) = match newton_field(inst, inst.initial_guess()) {
        Ok(v) => v,
        Err(_) => return finish_trajectory(Vec::new(), r0, true),
    };
    let mut u = inst.initial_guess().clone();
    let mut nodes = vec![trajectory_node(inst, 0.0, u.clone(), k1.norm(), r0)];

    for i in 0..n_steps {
        let half = 0.5 * dt;
        let stage = |v: &Vector| newton_field(inst, v).map(|(du, _)| du);
        let Ok(k2) = stage(&u.axpy(half, &k1)) else {
            return finish_trajectory(nodes, r0, true);
        };
        let Ok(k3) = stage(&u.axpy(half, &k2)) else {
            return finish_trajectory(nodes, r0, true);
        };
        let Ok(k4) = stage(&u.axpy(dt, &k3)) else {
            return finish_trajectory(nodes, r0, true);
        };
        let mut incr = k1.add(&k4);
        incr = incr.axpy(2.0, &k2);
        incr = incr.axpy(2.0, &k3);
        let next = u.axpy(dt / 6.0, &incr);
        if !next.is_finite() {
            return finish_trajectory(nodes, r0, true);
        }
        // The field at the new node doubles as the next step's first stage.
        let Ok((k1_next, residual)) = newton_field(inst, &next) else {
            return finish_trajectory(nodes, r0, true);
        };
        u = next;
        k1 = k1_next;
        let t = dt * (i + 1) as f64;
        nodes.push(trajectory_node(inst, t, u.clone(), k1.norm(), residual));
    }
    finish_trajectory(nodes, r0, false)
}

// Newton iteration toward F(u) = target, warm-started; used per homotopy
// node. Errors on singular Jacobian, non-finite state, or cap exhaustion.
fn inner_newton(
    p: &NonlinearProblem,
    target: &Vector,
    start: &Vector,
    tol: f64,
    cap: usize,
) -> Result<Vector, SolverError> {
    let mut u = start.clone();
    for _ in 0..=cap {
        let gap = p.eval(&u).sub(target);
        if gap.norm() <= tol {
            return Ok(u);
        }
        let factors = lu_factor(&p.jacobian(&u), DEFAULT_PIVOT_TOL)?;
        u = u.sub(&factors.solve(&gap));
        if !u.is_finite() {
            return Err(SolverError::TruncatedTrace);
        }
    }
    Err(SolverError::TruncatedTrace)
}

// Inner-solve cap per homotopy node. Consecutive targets differ by
// O(r0/homotopy_nodes), so warm starts converge in a handful of steps.
const HOMOTOPY_INNER_CAP: usize = 50;

/// Follow the residual schedule `F(u(t)) = h + e^{−t}·v₀`, `v₀ = F(u₀) − h`,
/// on a uniform grid of `cfg.homotopy_nodes` intervals over
/// `[0, cfg.dsm_t_end]`, solving each node by warm-started Newton to
/// `cfg.residual_tol`.
///
/// `udot_norm` at each node is `‖[F′(u)]⁻¹·e^{−t}v₀‖`: differentiating the
/// schedule in `t` gives `F′(u)·u̇ = −e^{−t}v₀`, so this is the exact speed
/// of the path the node sits on. A failed inner solve truncates the trace.
pub fn dsm_homotopy_solve(inst: &ProblemInstance, cfg: &SolveConfig) -> TrajectoryTrace {
    let p = inst.problem();
    let v0 = p.eval(inst.initial_guess()).sub(inst.rhs());
    let r0 = v0.norm();
    let dt = cfg.dsm_t_end / cfg.homotopy_nodes as f64;

    let mut nodes = Vec::with_capacity(cfg.homotopy_nodes + 1);
    let mut u = inst.initial_guess().clone();
    for k in 0..=cfg.homotopy_nodes {
        let t = dt * k as f64;
        let decay = (-t).exp();
        if k > 0 {
            let target = inst.rhs().axpy(decay, &v0);
            match inner_newton(p, &target, &u, cfg.residual_tol, HOMOTOPY_INNER_CAP) {
                Ok(next) => u = next,
                Err(_) => return finish_trajectory(nodes, r0, true),
            }
        }
        let Ok(factors) = lu_factor(&p.jacobian(&u), DEFAULT_PIVOT_TOL) else {
            return finish_trajectory(nodes, r0, true);
        };
        let udot_norm = factors.solve(&v0.scale(decay)).norm();
        let residual = inst.residual(&u);
        nodes.push(trajectory_node(inst, t, u.clone(), udot_norm, residual));
    }
    finish_trajectory(nodes, r0, false)
}

/// Instantaneous path velocity from the defining relation of a parametrized
/// family `F(u(t)) = h(t)`: differentiation gives `F′(u)·u̇ = ḣ`, so
/// `u̇ = [F′(u)]⁻¹·ḣ`.
pub fn path_derivative(
    p: &NonlinearProblem,
    u_t: &Vector,
    hdot: &Vector,
) -> Result<Vector, SolverError> {
    let factors = lu_factor(&p.jacobian(u_t), DEFAULT_PIVOT_TOL)?;
    Ok(factors.solve(hdot))
}

/// Enclose the flow's limit from a completed trace: the limit lies within
/// `m·r0/(1−q)·e^{−t_end}` of the final point (integrating the certified
/// velocity bound from `t_end` to infinity).
pub fn limit_extrapolate(
    traj: &TrajectoryTrace,
    c: &Certificate,
) -> Result<LimitEstimate, SolverError> {
    if traj.truncated || traj.nodes.is_empty() {
        return Err(SolverError::TruncatedTrace);
    }
    let t_end = traj.t_final().expect("nonempty");
    Ok(LimitEstimate {
        u_inf_estimate: traj.u_final.clone(),
        tail_bound: c.m * traj.r0 / (1.0 - c.q) * (-t_end).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{build_certificate, EmpiricalModulusConfig};
    use crate::linalg::Matrix;
    use crate::problem::catalog_scalar_hoelder;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn identity_problem(n: usize) -> NonlinearProblem {
        let f = move |u: &Vector| u.clone();
        let jac = move |_: &Vector| Matrix::identity(n);
        NonlinearProblem::new(n, Box::new(f), Box::new(jac))
            .with_anchor(Vector::zeros(n), Vector::zeros(n))
    }

    fn instance(p: NonlinearProblem, h: f64, z: f64) -> ProblemInstance {
        ProblemInstance::new(p, Vector::new(vec![h]), Vector::new(vec![z])).unwrap()
    }

    #[test]
    fn newton_exact_on_affine_maps() {
        let inst = instance(identity_problem(1), 0.3, 1.0);
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.steps[0].u.as_slice(), &[1.0]);
        assert_abs_diff_eq!(trace.final_step().u[0], 0.3);
        assert_eq!(trace.stop_reason, StopReason::ResidualTol);
    }

    #[test]
    fn newton_fixed_point_start() {
        let inst = instance(identity_problem(1), 0.0, 0.0);
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 0);
        assert_eq!(trace.final_step().residual, 0.0);
    }

    #[test]
    fn newton_rate_on_hoelder_problem() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let inst = instance(p, 0.0, 0.04);
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert!(trace.converged);
        let a: Vec<f64> = trace
            .steps
            .iter()
            .map(|s| s.dist_to_solution.unwrap())
            .collect();
        for w in a.windows(2) {
            assert!(
                w[1] <= w[0] / 3.0 * (1.0 + 1e-9),
                "rate exceeded q/(1-q): {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        // F(u) = u² has F′(0) = 0: the first factorization fails.
        let f = |u: &Vector| Vector::new(vec![u[0] * u[0]]);
        let jac = |u: &Vector| {
            let mut j = Matrix::zeros(1);
            j[(0, 0)] = 2.0 * u[0];
            j
        };
        let p = NonlinearProblem::new(1, Box::new(f), Box::new(jac));
        let inst = instance(p, 1.0, 0.0);
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert!(!trace.converged);
        assert_eq!(trace.stop_reason, StopReason::SingularJacobian);
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn newton_detects_divergence_via_nan() {
        // ln(u) from u=3 jumps negative, where the map is undefined.
        let f = |u: &Vector| Vector::new(vec![u[0].ln()]);
        let jac = |u: &Vector| {
            let mut j = Matrix::zeros(1);
            j[(0, 0)] = 1.0 / u[0];
            j
        };
        let p = NonlinearProblem::new(1, Box::new(f), Box::new(jac));
        let inst = instance(p, 0.0, 3.0);
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert_eq!(trace.stop_reason, StopReason::Diverged);
    }

    #[test]
    fn newton_respects_iteration_cap() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let inst = instance(p, 0.0, 0.04);
        let cfg = SolveConfig {
            max_iter: 2,
            residual_tol: 1e-30,
            ..Default::default()
        };
        let trace = newton_solve(&inst, &cfg);
        assert_eq!(trace.stop_reason, StopReason::MaxIter);
        assert_eq!(trace.iterations(), 2);
    }

    #[test]
    fn contraction_exact_on_affine_maps() {
        let inst = instance(identity_problem(1), 0.3, -2.0);
        let trace = contraction_solve(&inst, &SolveConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
        assert_abs_diff_eq!(trace.final_step().u[0], 0.3);
    }

    #[test]
    fn contraction_zero_steps_at_solution() {
        let inst = instance(identity_problem(1), 0.0, 0.0);
        let trace = contraction_solve(&inst, &SolveConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 0);
    }

    #[test]
    fn contraction_rate_matches_q() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let inst = instance(p, 0.0, 0.05);
        let trace = contraction_solve(&inst, &SolveConfig::default()).unwrap();
        assert!(trace.converged);
        // q = m·ω(R) with R = 0.0625 covers starts in that ball; distances
        // to the fixed point must contract at least that fast.
        let q = 0.25;
        let a: Vec<f64> = trace
            .steps
            .iter()
            .map(|s| s.dist_to_solution.unwrap())
            .collect();
        for w in a.windows(2) {
            assert!(w[1] <= q * w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn contraction_requires_known_solution() {
        let f = |u: &Vector| u.clone();
        let jac = |_: &Vector| Matrix::identity(1);
        let p = NonlinearProblem::new(1, Box::new(f), Box::new(jac));
        let inst = instance(p, 0.3, 1.0);
        assert!(matches!(
            contraction_solve(&inst, &SolveConfig::default()),
            Err(SolverError::MissingKnownSolution)
        ));
    }

    #[test]
    fn contraction_flags_singular_frozen_jacobian() {
        let f = |u: &Vector| Vector::new(vec![u[0] * u[0]]);
        let jac = |u: &Vector| {
            let mut j = Matrix::zeros(1);
            j[(0, 0)] = 2.0 * u[0];
            j
        };
        // Anchor at the degenerate point: F′(0) = 0.
        let p = NonlinearProblem::new(1, Box::new(f), Box::new(jac))
            .with_anchor(Vector::zeros(1), Vector::zeros(1));
        let inst = instance(p, 1.0, 0.5);
        let trace = contraction_solve(&inst, &SolveConfig::default()).unwrap();
        assert_eq!(trace.stop_reason, StopReason::SingularJacobian);
    }

    #[test]
    fn ode_flow_matches_exponential_decay() {
        let inst = instance(identity_problem(1), 0.0, 1.0);
        let cfg = SolveConfig {
            dsm_t_end: 5.0,
            ..Default::default()
        };
        let traj = dsm_ode_solve(&inst, &cfg);
        assert!(!traj.truncated);
        assert_eq!(traj.nodes.len(), 101);
        assert_abs_diff_eq!(traj.u_final[0], (-5.0f64).exp(), epsilon = 1e-8);
        assert_eq!(traj.r0, 1.0);
        assert_eq!(traj.nodes[0].u.as_slice(), &[1.0]);
    }

    #[test]
    fn ode_flow_stays_at_equilibrium() {
        let inst = instance(identity_problem(1), 0.0, 0.0);
        let traj = dsm_ode_solve(&inst, &SolveConfig::default());
        assert!(traj.nodes.iter().all(|n| n.udot_norm == 0.0 && n.u[0] == 0.0));
    }

    #[test]
    fn ode_residual_follows_schedule() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let inst = instance(p, 0.0, 0.04);
        let traj = dsm_ode_solve(&inst, &SolveConfig::default());
        assert!(!traj.truncated);
        for node in &traj.nodes {
            let expected = traj.r0 * (-node.t).exp();
            assert!(
                node.residual <= expected * (1.0 + 1e-4),
                "t={}: {} vs {}",
                node.t,
                node.residual,
                expected
            );
        }
    }

    #[test]
    fn homotopy_exact_on_affine_maps() {
        let inst = instance(identity_problem(1), 0.0, 1.0);
        let traj = dsm_homotopy_solve(&inst, &SolveConfig::default());
        assert!(!traj.truncated);
        assert_eq!(traj.nodes.len(), 65);
        for node in &traj.nodes {
            assert_abs_diff_eq!(node.u[0], (-node.t).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn homotopy_constant_path_at_solution() {
        let inst = instance(identity_problem(1), 0.0, 0.0);
        let traj = dsm_homotopy_solve(&inst, &SolveConfig::default());
        assert_eq!(traj.r0, 0.0);
        assert!(traj.nodes.iter().all(|n| n.u[0] == 0.0 && n.udot_norm == 0.0));
    }

    #[test]
    fn homotopy_enforces_defining_relation() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let inst = instance(p, 0.0, 0.04);
        let cfg = SolveConfig::default();
        let traj = dsm_homotopy_solve(&inst, &cfg);
        assert!(!traj.truncated);
        let v0 = inst.problem().eval(inst.initial_guess()).sub(inst.rhs());
        for node in &traj.nodes {
            let target = inst.rhs().axpy((-node.t).exp(), &v0);
            let defect = inst.problem().eval(&node.u).sub(&target).norm();
            assert!(defect <= cfg.residual_tol, "defect {defect} at t={}", node.t);
        }
    }

    #[test]
    fn path_derivative_trivial_cases() {
        let p = identity_problem(2);
        let u = Vector::zeros(2);
        let hdot = Vector::new(vec![1.0, 2.0]);
        assert_eq!(path_derivative(&p, &u, &hdot).unwrap(), hdot);
        let zero = Vector::zeros(2);
        assert_eq!(path_derivative(&p, &u, &zero).unwrap(), zero);
    }

    #[test]
    fn limit_tail_bound_formula() {
        let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
        let c = build_certificate(&p, 0.25, 1.0, &EmpiricalModulusConfig::default()).unwrap();
        let inst = instance(catalog_scalar_hoelder(1.0, 0.5).unwrap(), 0.0, 0.02);
        let traj = dsm_homotopy_solve(&inst, &SolveConfig::default());
        let est = limit_extrapolate(&traj, &c).unwrap();
        let r0 = traj.r0;
        assert_relative_eq!(
            est.tail_bound,
            r0 / 0.75 * (-30.0f64).exp(),
            max_relative = 1e-12
        );
        assert!(est.tail_bound < 3e-15);
        assert_eq!(est.u_inf_estimate, traj.u_final);
    }

    #[test]
    fn limit_bound_contains_linear_flow() {
        let inst = instance(identity_problem(1), 0.0, 1.0);
        let cfg = SolveConfig {
            dsm_t_end: 10.0,
            ..Default::default()
        };
        let traj = dsm_ode_solve(&inst, &cfg);
        let c = Certificate {
            m: 1.0,
            q: 0.01,
            radius: 1.0,
            rho: 0.99,
            q1: 0.01 / 0.99,
            newton_mode: true,
            modulus: crate::problem::ModulusModel::power_law(0.01, 1.0).unwrap(),
        };
        let est = limit_extrapolate(&traj, &c).unwrap();
        // The limit is 0 exactly; the distance from u(10) must sit under
        // the certified tail.
        assert!(traj.u_final.norm() <= est.tail_bound);
    }

    #[test]
    fn limit_rejects_truncated_traces() {
        let c = Certificate {
            m: 1.0,
            q: 0.25,
            radius: 1.0,
            rho: 0.75,
            q1: 1.0 / 3.0,
            newton_mode: true,
            modulus: crate::problem::ModulusModel::power_law(0.25, 1.0).unwrap(),
        };
        let traj = TrajectoryTrace {
            nodes: Vec::new(),
            u_final: Vector::zeros(1),
            r0: 1.0,
            truncated: true,
        };
        assert!(matches!(
            limit_extrapolate(&traj, &c),
            Err(SolverError::TruncatedTrace)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::default().validate().is_ok());
        let bad = SolveConfig {
            dsm_step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolveConfig {
            divergence_factor: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_deserializes_partially() {
        let cfg: SolveConfig = serde_json::from_str(r#"{"max_iter": 7}"#).unwrap();
        assert_eq!(cfg.max_iter, 7);
        assert_eq!(cfg.residual_tol, 1e-12);
        assert!(serde_json::from_str::<SolveConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
