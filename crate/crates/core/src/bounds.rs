//! A-posteriori verification of every certified inequality against recorded
//! traces and fresh samples.
//!
//! The harness treats violations as data, not exceptions: each check
//! produces a [`BoundEntry`] with a count of evaluations, a count of
//! violations, and the worst margin seen. Errors are reserved for inputs the
//! checks cannot be evaluated on at all (missing distances, inadmissible
//! hypotheses, truncated trajectories).
//!
//! Margins are `slacked_bound − observed`, so positive means pass and the
//! most negative entry identifies the worst offender. Slack defaults
//! distinguish purely algebraic inequalities (`1e-9`, float roundoff only)
//! from discretization-limited ones (velocity `1e-6`, limit residual
//! `1e-4`); all are configurable through [`BoundSlacks`].

use crate::certify::{check_inverse_bound, Certificate, DsmCertificate, BOUND_SLACK};
use crate::linalg::{lu_factor, SingularError, Vector, DEFAULT_PIVOT_TOL};
use crate::problem::NonlinearProblem;
use crate::sampling::{separated_pair, substream};
use crate::solvers::{limit_extrapolate, IterationTrace, TrajectoryTrace};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

// Margins are clamped here so that a pathological sample cannot put an
// infinity into a JSON report.
const MARGIN_FLOOR: f64 = -1e308;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("iteration trace lacks distances to the solution; anchor the problem first")]
    MissingDistance,
    #[error("certificate has q >= 1/2, Newton rate bounds do not apply")]
    NotNewtonMode,
    #[error("instance violates the admissibility hypothesis; its flow bounds are not certified")]
    NotAdmissible,
    #[error("trajectory was truncated; flow bounds need a completed trace")]
    TruncatedTrace,
    #[error(transparent)]
    Singular(#[from] SingularError),
}

/// Identifies one certified inequality. Names are stable identifiers used in
/// reports and the CLI; serialization uses the variant name verbatim.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum BoundId {
    /// Inverse-Jacobian norm bound `‖[F′(u)]⁻¹‖ ≤ m/(1−q)` on the ball.
    Inv21,
    /// Contraction factor of the frozen-Jacobian map: ratio ≤ q.
    Contr24,
    /// The frozen-Jacobian map sends the ball into itself.
    Ball23,
    /// Flow speed bound `‖u̇(t)‖ ≤ m·r₀/(1−q)·e^{−t}`.
    Vel34,
    /// Total displacement bound `‖u(t) − u₀‖ ≤ m·r₀/(1−q)`.
    Disp35,
    /// Tail bound: the limit stays within the integrated speed bound.
    Tail36,
    /// Newton step ratio `aₙ₊₁ ≤ q₁·aₙ`.
    Rate44,
    /// Geometric envelope `aₙ ≤ q₁ⁿ⁻¹·R`.
    Geo45,
    /// Iterates / trajectory stay inside the certified ball.
    Containment,
    /// Final residual matches the scheduled decay `r₀·e^{−t_end}`.
    Limit37,
}

impl std::fmt::Display for BoundId {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fmt, "{self:?}")
    }
}

/// Outcome of evaluating one bound over many points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub bound_id: BoundId,
    #[serde(rename = "checked")]
    pub checked_count: usize,
    #[serde(rename = "violations")]
    pub violation_count: usize,
    /// Most negative `slacked_bound − observed` seen; positive means every
    /// evaluation passed.
    pub worst_margin: f64,
}

/// Aggregated verdict. `overall_pass` holds exactly when no entry records a
/// violation; each bound appears at most once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub overall_pass: bool,
}

impl BoundReport {
    fn from_entries(mut entries: Vec<BoundEntry>) -> Self {
        entries.sort_by_key(|e| e.bound_id);
        let overall_pass = entries.iter().all(|e| e.violation_count == 0);
        BoundReport {
            entries,
            overall_pass,
        }
    }

    pub fn entry(&self, id: BoundId) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.bound_id == id)
    }
}

/// Merge reports from several checks into one, summing counts per bound and
/// keeping the worst margin. Entry order follows the [`BoundId`] ordering,
/// so merging is deterministic.
pub fn merge_reports<'a>(reports: impl IntoIterator<Item = &'a BoundReport>) -> BoundReport {
    let mut acc: BTreeMap<BoundId, (usize, usize, f64)> = BTreeMap::new();
    for report in reports {
        for e in &report.entries {
            let slot = acc.entry(e.bound_id).or_insert((0, 0, f64::INFINITY));
            slot.0 += e.checked_count;
            slot.1 += e.violation_count;
            slot.2 = slot.2.min(e.worst_margin);
        }
    }
    let entries = acc
        .into_iter()
        .map(|(bound_id, (checked_count, violation_count, worst_margin))| BoundEntry {
            bound_id,
            checked_count,
            violation_count,
            worst_margin,
        })
        .collect();
    BoundReport::from_entries(entries)
}

/// Relative slack applied to each bound before comparison.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSlacks {
    /// For inequalities exact in real arithmetic.
    pub algebraic: f64,
    /// For the flow speed bound, which sees integrator error.
    pub velocity: f64,
    /// For the final-residual schedule, which sees accumulated drift.
    pub limit: f64,
    /// Absolute floor for the final residual: inner solves stop here, so no
    /// smaller residual can be demanded.
    pub residual_floor: f64,
}

impl Default for BoundSlacks {
    fn default() -> Self {
        Self {
            algebraic: BOUND_SLACK,
            velocity: 1e-6,
            limit: 1e-4,
            residual_floor: 1e-12,
        }
    }
}

// Running tally for one bound. Entries are only emitted for bounds that
// were actually evaluated.
struct Tally {
    id: BoundId,
    checked: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new(id: BoundId) -> Self {
        Tally {
            id,
            checked: 0,
            violations: 0,
            worst: f64::INFINITY,
        }
    }

    fn record(&mut self, margin: f64) {
        self.checked += 1;
        if margin < 0.0 {
            self.violations += 1;
        }
        let clamped = if margin.is_nan() { MARGIN_FLOOR } else { margin.max(MARGIN_FLOOR) };
        self.worst = self.worst.min(clamped);
    }

    fn entry(self) -> Option<BoundEntry> {
        (self.checked > 0).then_some(BoundEntry {
            bound_id: self.id,
            checked_count: self.checked,
            violation_count: self.violations,
            worst_margin: self.worst,
        })
    }
}

fn collect(tallies: Vec<Tally>) -> BoundReport {
    BoundReport::from_entries(tallies.into_iter().filter_map(Tally::entry).collect())
}

/// Check a Newton trace against the certified rate, the geometric envelope,
/// and ball containment.
///
/// Requires a Newton-mode certificate and distances to the solution on every
/// step; the distances only measure the certified quantity when the trace
/// was run against the anchored right-hand side.
pub fn check_newton_trace(
    trace: &IterationTrace,
    c: &Certificate,
    slacks: &BoundSlacks,
) -> Result<BoundReport, BoundsError> {
    if !c.newton_mode {
        return Err(BoundsError::NotNewtonMode);
    }
    let a: Vec<f64> = trace
        .steps
        .iter()
        .map(|s| s.dist_to_solution.ok_or(BoundsError::MissingDistance))
        .collect::<Result<_, _>>()?;

    let s = slacks.algebraic;
    let mut rate = Tally::new(BoundId::Rate44);
    for w in a.windows(2) {
        rate.record(c.q1 * w[0] * (1.0 + s) - w[1]);
    }
    let mut geo = Tally::new(BoundId::Geo45);
    for (n, &an) in a.iter().enumerate() {
        let bound = c.q1.powi(n as i32 - 1) * c.radius;
        geo.record(bound * (1.0 + s) - an);
    }
    // The start may sit outside the ball (only q₁·a₀ ≤ R is assumed), so
    // containment applies from the first update on.
    let mut ball = Tally::new(BoundId::Containment);
    for &an in a.iter().skip(1) {
        ball.record(c.radius * (1.0 + s) - an);
    }
    Ok(collect(vec![rate, geo, ball]))
}

/// Check a continuous-flow trace against the certified speed, displacement,
/// tail, containment, and final-residual bounds.
///
/// The instance must satisfy the admissibility hypothesis (see
/// [`DsmCertificate`]) and the trace must have run to completion.
pub fn check_dsm_trace(
    traj: &TrajectoryTrace,
    c: &Certificate,
    dc: &DsmCertificate,
    slacks: &BoundSlacks,
) -> Result<BoundReport, BoundsError> {
    if !dc.admissible {
        return Err(BoundsError::NotAdmissible);
    }
    if traj.truncated || traj.nodes.is_empty() {
        return Err(BoundsError::TruncatedTrace);
    }
    let amp = c.m * traj.r0 / (1.0 - c.q);
    let u0 = &traj.nodes[0].u;
    let limit = limit_extrapolate(traj, c).expect("trace verified complete");
    let t_end = traj.t_final().expect("nonempty");
    // Computed nodes sit within ‖J⁻¹‖·residual_floor of the exact path, so
    // distances between nodes see up to twice that on top of the true
    // bound. A zero-residual start never invokes an inner solve, so its
    // nodes are exact and get no allowance.
    let pos_slack = if traj.r0 > 0.0 {
        2.0 * c.inverse_bound() * slacks.residual_floor
    } else {
        0.0
    };

    let mut vel = Tally::new(BoundId::Vel34);
    let mut disp = Tally::new(BoundId::Disp35);
    let mut tail = Tally::new(BoundId::Tail36);
    let mut ball = Tally::new(BoundId::Containment);
    for node in &traj.nodes {
        let decay = (-node.t).exp();
        vel.record(amp * decay * (1.0 + slacks.velocity) - node.udot_norm);
        disp.record(amp * (1.0 + slacks.algebraic) - node.u.sub(u0).norm());
        // The limit sits within tail_bound of the final point, so any node
        // is within amp·(e^{−t} + e^{−t_end}) of it.
        let tail_obs = limit.u_inf_estimate.sub(&node.u).norm();
        let tail_bound = amp * decay + limit.tail_bound;
        tail.record(tail_bound * (1.0 + slacks.algebraic) + pos_slack - tail_obs);
        if let Some(dist) = node.dist_to_solution {
            ball.record(c.radius * (1.0 + slacks.algebraic) - dist);
        }
    }
    // The solvers guarantee the defect against the scheduled target, so the
    // residual against h is bounded by the schedule plus that floor.
    let mut lim = Tally::new(BoundId::Limit37);
    let scheduled = traj.r0 * (-t_end).exp() * (1.0 + slacks.limit);
    let final_residual = traj.nodes.last().expect("nonempty").residual;
    lim.record(scheduled + slacks.residual_floor - final_residual);

    Ok(collect(vec![vel, disp, tail, ball, lim]))
}

/// Sample the frozen-Jacobian map on the certified ball and check the
/// contraction factor, ball invariance, and the inverse-norm bound.
///
/// `pairs` point pairs are drawn inside `B(y, R)` from a dedicated RNG
/// stream, so results are reproducible from `rng_seed` alone. The problem
/// must carry the anchor the certificate was built around.
pub fn check_contraction(
    c: &Certificate,
    p: &NonlinearProblem,
    h: &Vector,
    pairs: usize,
    rng_seed: u64,
    slacks: &BoundSlacks,
) -> Result<BoundReport, BoundsError> {
    let y = p
        .known_solution()
        .expect("contraction checks need the anchored solution");
    let frozen = lu_factor(&p.jacobian(y), DEFAULT_PIVOT_TOL)?;
    let map = |u: &Vector| u.sub(&frozen.solve(&p.eval(u).sub(h)));

    let s = slacks.algebraic;
    let mut rng = substream(rng_seed, 0);
    let mut contr = Tally::new(BoundId::Contr24);
    let mut ball = Tally::new(BoundId::Ball23);
    for _ in 0..pairs {
        let (u, v) = separated_pair(&mut rng, y, c.radius, 2.0 * c.radius);
        let tu = map(&u);
        let tv = map(&v);
        ball.record(c.radius * (1.0 + s) - tu.sub(y).norm());
        ball.record(c.radius * (1.0 + s) - tv.sub(y).norm());
        let d = u.sub(&v).norm();
        if d > 0.0 {
            // Ratio units, so the margin is comparable across pairs.
            contr.record(c.q * (1.0 + s) - tu.sub(&tv).norm() / d);
        }
    }

    let inv_summary = check_inverse_bound(c, p, pairs, rng_seed.wrapping_add(1));
    let mut inv = Tally::new(BoundId::Inv21);
    inv.checked = inv_summary.samples;
    inv.violations = inv_summary.violations;
    inv.worst = inv_summary.bound * (1.0 + s) - inv_summary.max_observed;

    Ok(collect(vec![contr, ball, inv]))
}
