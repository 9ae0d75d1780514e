//! End-to-end acceptance gate for the library: one line per criterion,
//! every tolerance pinned in code. Each criterion runs in isolation so a
//! failure in one never hides the verdict of another.

use newton_universal::certify::{
    build_certificate, build_dsm_certificate, Certificate, EmpiricalModulusConfig,
};
use newton_universal::linalg::{lu_factor, Matrix, Vector, DEFAULT_PIVOT_TOL};
use newton_universal::problem::{
    catalog_diag_hoelder, catalog_scalar_hoelder, catalog_smooth_hammerstein,
    NonlinearProblem, ProblemInstance,
};
use newton_universal::sampling::{substream, uniform_in_ball, unit_direction};
use newton_universal::solvers::{
    contraction_solve, dsm_homotopy_solve, dsm_ode_solve, newton_solve, path_derivative,
    SolveConfig,
};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

// Pinned tolerances. Algebraic inequalities get float-roundoff slack only;
// discretization-limited quantities get the slack their integrators earn.
const RATE_SLACK: f64 = 1e-9;
const VELOCITY_SLACK: f64 = 1e-6;
const LIMIT_SLACK: f64 = 1e-4;
const FLOW_AGREEMENT_TOL: f64 = 1e-6;
const FD_RELATIVE_TOL: f64 = 1e-5;
const LINEAR_FLOW_TOL: f64 = 1e-8;

fn assert_within(elapsed: Duration, cap: Duration, what: &str) {
    assert!(
        elapsed <= cap,
        "{what} took {elapsed:?}, cap is {cap:?}"
    );
}

fn scalar_cert(alpha: f64, q: f64) -> (NonlinearProblem, Certificate) {
    let p = catalog_scalar_hoelder(1.0, alpha).expect("valid params");
    let c = build_certificate(&p, q, 1.0, &EmpiricalModulusConfig::default())
        .expect("certifiable");
    (p, c)
}

fn instance(p: NonlinearProblem, h: Vector, z: Vector) -> ProblemInstance {
    ProblemInstance::new(p, h, z).expect("dimensions agree")
}

// Newton from `count` random starts with q₁‖z−y‖ ≤ R; assert the certified
// per-step ratio and the geometric envelope on every trace, raw except for
// the pinned ratio slack.
fn assert_newton_rates(alpha: f64, q: f64, count: usize, seed: u64) {
    let (_, c) = scalar_cert(alpha, q);
    let y = Vector::zeros(1);
    let mut rng = substream(seed, 0);
    for _ in 0..count {
        let z = uniform_in_ball(&mut rng, &y, c.radius / c.q1);
        let inst = instance(
            catalog_scalar_hoelder(1.0, alpha).unwrap(),
            Vector::zeros(1),
            z,
        );
        let trace = newton_solve(&inst, &SolveConfig::default());
        assert!(trace.converged, "alpha={alpha}: {:?}", trace.stop_reason);
        let a: Vec<f64> = trace
            .steps
            .iter()
            .map(|s| s.dist_to_solution.expect("anchored"))
            .collect();
        for w in a.windows(2) {
            assert!(
                w[1] <= c.q1 * w[0] * (1.0 + RATE_SLACK),
                "alpha={alpha}: step ratio {} -> {} exceeds q1={}",
                w[0],
                w[1],
                c.q1
            );
        }
        for (n, &an) in a.iter().enumerate() {
            let envelope = c.q1.powi(n as i32 - 1) * c.radius;
            assert!(
                an <= envelope,
                "alpha={alpha}: a_{n} = {an} above geometric envelope {envelope}"
            );
        }
    }
}

fn criterion_1_newton_rate_baseline() {
    let t0 = Instant::now();
    let (_, c) = scalar_cert(0.5, 0.25);
    assert!((c.radius - 0.0625).abs() <= 1e-9 * 0.0625);
    assert!((c.q1 - 1.0 / 3.0).abs() <= 1e-12);
    assert_newton_rates(0.5, 0.25, 20, 0xACC1);
    assert_within(t0.elapsed(), Duration::from_secs(1), "criterion 1");
}

fn criterion_2_newton_rate_alpha_family() {
    let t0 = Instant::now();
    for (i, alpha) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        assert_newton_rates(alpha, 0.25, 20, 0xACC2 + i as u64);
        // The operator is genuinely non-Lipschitz at the solution: the
        // difference quotient of the Jacobian blows up as probes shrink.
        let p = catalog_scalar_hoelder(1.0, alpha).unwrap();
        let jy = p.jacobian(&Vector::zeros(1))[(0, 0)];
        let quotient = |d: f64| (p.jacobian(&Vector::new(vec![d]))[(0, 0)] - jy).abs() / d;
        let (q2, q4, q6) = (quotient(1e-2), quotient(1e-4), quotient(1e-6));
        assert!(
            q2 < q4 && q4 < q6,
            "alpha={alpha}: quotients {q2}, {q4}, {q6} fail to increase"
        );
    }
    assert_within(t0.elapsed(), Duration::from_secs(5), "criterion 2");
}

fn criterion_3_contraction_and_inverse() {
    let t0 = Instant::now();
    let (p, c) = scalar_cert(0.5, 0.25);
    assert!((c.rho - 0.046875).abs() <= 1e-12);
    let y = Vector::zeros(1);
    let frozen = lu_factor(&p.jacobian(&y), DEFAULT_PIVOT_TOL).unwrap();

    for (k, offset) in [0.0, 0.5 * c.rho, c.rho].into_iter().enumerate() {
        let h = Vector::new(vec![offset]);
        let map = |u: &Vector| u.sub(&frozen.solve(&p.eval(u).sub(&h)));
        let mut rng = substream(0xACC3, k as u64);
        for _ in 0..500 {
            let u = uniform_in_ball(&mut rng, &y, c.radius);
            let v = uniform_in_ball(&mut rng, &y, c.radius);
            let (tu, tv) = (map(&u), map(&v));
            let d = u.sub(&v).norm();
            assert!(
                tu.sub(&tv).norm() <= c.q * d * (1.0 + RATE_SLACK),
                "contraction factor exceeded at offset {offset}"
            );
            assert!(
                tu.sub(&y).norm() <= c.radius,
                "map left the ball at offset {offset}"
            );
        }
    }

    let mut rng = substream(0xACC3, 10);
    let bound = c.inverse_bound();
    assert!((bound - 4.0 / 3.0).abs() <= 1e-12);
    for _ in 0..500 {
        let u = uniform_in_ball(&mut rng, &y, c.radius);
        let inv_norm = 1.0 / p.jacobian(&u)[(0, 0)].abs();
        assert!(inv_norm <= bound * (1.0 + RATE_SLACK));
    }
    assert_within(t0.elapsed(), Duration::from_secs(2), "criterion 3");
}

// The three families the flow criteria run on, each with an admissible
// start. Sizes are small enough for debug builds, large enough to exercise
// coupling and dense solves.
fn flow_instances() -> Vec<(String, ProblemInstance, Certificate)> {
    let mut out = Vec::new();

    let (_, c) = scalar_cert(0.5, 0.25);
    let inst = instance(
        catalog_scalar_hoelder(1.0, 0.5).unwrap(),
        Vector::zeros(1),
        Vector::new(vec![0.04]),
    );
    out.push(("scalar-hoelder".to_string(), inst, c));

    let p = catalog_diag_hoelder(4, 1.0, 0.5, 0.05).unwrap();
    let c = build_certificate(&p, 0.25, 1.0, &EmpiricalModulusConfig::default()).unwrap();
    let mut rng = substream(0xF10, 1);
    let z = unit_direction(&mut rng, 4).scale(0.02);
    let inst = instance(p, Vector::zeros(4), z);
    out.push(("diag-hoelder".to_string(), inst, c));

    let p = catalog_smooth_hammerstein(21, 0.1).unwrap();
    let c = build_certificate(&p, 0.01, 1.0, &EmpiricalModulusConfig::default()).unwrap();
    let mut rng = substream(0xF10, 2);
    let z = unit_direction(&mut rng, 21).scale(0.05);
    let inst = instance(p, Vector::zeros(21), z);
    out.push(("hammerstein".to_string(), inst, c));

    out
}

fn criterion_4_homotopy_flow_bounds() {
    let t0 = Instant::now();
    let cfg = SolveConfig::default();
    for (label, inst, c) in flow_instances() {
        let dc = build_dsm_certificate(&c, &inst);
        assert!(dc.admissible, "{label}: start not admissible");
        let traj = dsm_homotopy_solve(&inst, &cfg);
        assert!(!traj.truncated, "{label}: trace truncated");
        let amp = c.m * traj.r0 / (1.0 - c.q);
        let u0 = &traj.nodes[0].u;
        for node in &traj.nodes {
            assert!(
                node.udot_norm <= amp * (-node.t).exp() * (1.0 + VELOCITY_SLACK),
                "{label}: speed bound failed at t={}",
                node.t
            );
            assert!(
                node.u.sub(u0).norm() <= amp,
                "{label}: displacement bound failed at t={}",
                node.t
            );
        }
        let final_residual = traj.nodes.last().unwrap().residual;
        let scheduled = traj.r0 * (-cfg.dsm_t_end).exp() * (1.0 + LIMIT_SLACK);
        assert!(
            final_residual <= scheduled.max(cfg.residual_tol),
            "{label}: final residual {final_residual} above schedule"
        );
    }
    assert_within(t0.elapsed(), Duration::from_secs(5), "criterion 4");
}

fn flow_agreement_catalog() -> Vec<(String, ProblemInstance)> {
    let mut out = Vec::new();
    for (alpha, z) in [(0.3, 0.02), (0.5, 0.04), (0.8, 0.04)] {
        out.push((
            format!("scalar-hoelder alpha={alpha}"),
            instance(
                catalog_scalar_hoelder(1.0, alpha).unwrap(),
                Vector::zeros(1),
                Vector::new(vec![z]),
            ),
        ));
    }
    let diag_cases: [(usize, f64, f64, f64); 3] =
        [(1, 1.0, 0.5, 0.0), (4, 1.0, 0.5, 0.05), (6, 1.2, 0.4, 0.1)];
    for (i, (n, c, alpha, coupling)) in diag_cases.into_iter().enumerate() {
        let p = catalog_diag_hoelder(n, c, alpha, coupling).unwrap();
        let mut rng = substream(0xF11, i as u64);
        let z = unit_direction(&mut rng, n).scale(0.02);
        out.push((
            format!("diag-hoelder n={n}"),
            instance(p, Vector::zeros(n), z),
        ));
    }
    for (i, (n, lam)) in [(21, 0.1), (8, 0.0)].into_iter().enumerate() {
        let p = catalog_smooth_hammerstein(n, lam).unwrap();
        let mut rng = substream(0xF12, i as u64);
        let z = unit_direction(&mut rng, n).scale(0.05);
        out.push((
            format!("hammerstein n={n} lam={lam}"),
            instance(p, Vector::zeros(n), z),
        ));
    }
    out
}

fn criterion_5_flow_realizations_agree() {
    let cfg = SolveConfig::default();
    for (label, inst) in flow_agreement_catalog() {
        let ode = dsm_ode_solve(&inst, &cfg);
        let hom = dsm_homotopy_solve(&inst, &cfg);
        assert!(!ode.truncated && !hom.truncated, "{label}: truncated");
        let gap = ode.u_final.sub(&hom.u_final).norm();
        assert!(
            gap <= FLOW_AGREEMENT_TOL,
            "{label}: realizations disagree by {gap}"
        );
    }
}

fn criterion_6_path_derivative_vs_differences() {
    let p = catalog_scalar_hoelder(1.0, 0.5).unwrap();
    let inst = instance(
        catalog_scalar_hoelder(1.0, 0.5).unwrap(),
        Vector::zeros(1),
        Vector::new(vec![0.04]),
    );
    // Tight inner tolerance so node accuracy does not pollute the stencil.
    let cfg = SolveConfig {
        residual_tol: 1e-14,
        ..Default::default()
    };
    let traj = dsm_homotopy_solve(&inst, &cfg);
    assert!(!traj.truncated);
    let v0 = inst.problem().eval(inst.initial_guess()).sub(inst.rhs());

    // Solve F(u) = h + e^{−t}·v₀ to full accuracy from a warm start.
    let point_at = |t: f64, warm: &Vector| -> Vector {
        let rhs = inst.rhs().axpy((-t).exp(), &v0);
        let probe = instance(
            catalog_scalar_hoelder(1.0, 0.5).unwrap(),
            rhs,
            warm.clone(),
        );
        let trace = newton_solve(&probe, &cfg);
        assert!(trace.converged, "probe solve at t={t} failed");
        trace.final_step().u.clone()
    };

    let k = 1e-4;
    for node in &traj.nodes[1..=10] {
        let hdot = v0.scale(-(-node.t).exp());
        let analytic = path_derivative(&p, &node.u, &hdot).unwrap();
        let fd = point_at(node.t + k, &node.u)
            .sub(&point_at(node.t - k, &node.u))
            .scale(1.0 / (2.0 * k));
        let rel = fd.sub(&analytic).norm() / analytic.norm();
        assert!(
            rel <= FD_RELATIVE_TOL,
            "t={}: derivative mismatch {rel}",
            node.t
        );
    }
}

fn identity_instance(h: Vector, z: Vector) -> ProblemInstance {
    let n = h.dim();
    let f = move |u: &Vector| u.clone();
    let jac = move |_: &Vector| Matrix::identity(n);
    let p = NonlinearProblem::new(n, Box::new(f), Box::new(jac))
        .with_anchor(Vector::zeros(n), Vector::zeros(n));
    instance(p, h, z)
}

fn criterion_7_identity_map_degeneracies() {
    let h = Vector::new(vec![0.2, -0.1, 0.3]);
    let z = Vector::new(vec![1.0, 1.0, 1.0]);

    let newton = newton_solve(&identity_instance(h.clone(), z.clone()), &SolveConfig::default());
    assert!(newton.converged && newton.iterations() == 1);
    assert!(newton.final_step().u.sub(&h).norm() <= 1e-15);

    let picard = contraction_solve(&identity_instance(h.clone(), z.clone()), &SolveConfig::default())
        .unwrap();
    assert!(picard.converged && picard.iterations() == 1);

    let cfg = SolveConfig {
        dsm_t_end: 5.0,
        ..Default::default()
    };
    let exact_at = |t: f64| h.axpy((-t).exp(), &z.sub(&h));
    let ode = dsm_ode_solve(&identity_instance(h.clone(), z.clone()), &cfg);
    let gap = ode.u_final.sub(&exact_at(cfg.dsm_t_end)).norm();
    assert!(gap <= LINEAR_FLOW_TOL, "rk4: off the exact flow by {gap}");
    let hom = dsm_homotopy_solve(&identity_instance(h.clone(), z.clone()), &cfg);
    for node in &hom.nodes {
        let gap = node.u.sub(&exact_at(node.t)).norm();
        assert!(gap <= 1e-12, "homotopy: off by {gap} at t={}", node.t);
    }
}

#[test]
fn acceptance() {
    let criteria: &[(&str, fn())] = &[
        ("newton rate, baseline", criterion_1_newton_rate_baseline),
        ("newton rate, alpha family", criterion_2_newton_rate_alpha_family),
        ("contraction and inverse bounds", criterion_3_contraction_and_inverse),
        ("homotopy flow bounds", criterion_4_homotopy_flow_bounds),
        ("flow realizations agree", criterion_5_flow_realizations_agree),
        ("path derivative vs differences", criterion_6_path_derivative_vs_differences),
        ("identity map degeneracies", criterion_7_identity_map_degeneracies),
    ];

    let mut failures = Vec::new();
    for (i, (label, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(()) => println!("criterion {n} ({label}): PASS"),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "opaque panic".to_string());
                println!("criterion {n} ({label}): FAIL ({msg})");
                failures.push(format!("criterion {n} ({label}): {msg}"));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
