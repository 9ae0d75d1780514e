//! Subcommand implementations: certify, solve, sweep.
//!
//! Every run follows the same pipeline: build the catalog problem, certify
//! it at the requested q, materialize the instance (right-hand side and
//! start point), then solve and check. Failures keep their outputs: traces
//! and reports are written before the exit code is decided, so a failing
//! run leaves everything needed to diagnose it.

use crate::config::{
    build_initial_guess, build_problem, build_rhs, RunConfig, SolverChoice, STREAM_CONTRACTION,
    STREAM_SWEEP_BASE,
};
use crate::CliError;
use newton_universal::bounds::{
    check_contraction, check_dsm_trace, check_newton_trace, merge_reports, BoundReport,
    BoundSlacks,
};
use newton_universal::certify::{
    build_certificate, build_dsm_certificate, Certificate, CertifyError, DsmCertificate,
    EmpiricalModulusConfig,
};
use newton_universal::problem::ProblemInstance;
use newton_universal::sampling::{substream, unit_direction};
use newton_universal::solvers::{
    contraction_solve, dsm_homotopy_solve, dsm_ode_solve, newton_solve, IterationTrace,
    TrajectoryTrace,
};
use newton_universal::trace_io::{fmt_f64, iteration_csv_string, trajectory_csv_string};
use std::path::{Path, PathBuf};

// Fresh point pairs drawn when sampling the contraction and inverse bounds.
const CONTRACTION_PAIRS: usize = 200;

pub struct RunContext {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub quiet: bool,
}

impl RunContext {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn map_certify_error(e: CertifyError) -> CliError {
    match e {
        CertifyError::InvalidParameter(_) => CliError::Config(e.to_string()),
        CertifyError::Singular(_) | CertifyError::NoRadius { .. } => {
            CliError::Certification(e.to_string())
        }
    }
}

fn modulus_cfg(seed: u64) -> EmpiricalModulusConfig {
    EmpiricalModulusConfig {
        rng_seed: seed,
        ..Default::default()
    }
}

// The checks must not demand residuals below what the solvers were asked
// to deliver.
fn slacks_for(cfg: &RunConfig) -> BoundSlacks {
    BoundSlacks {
        residual_floor: cfg.solve.residual_tol,
        ..Default::default()
    }
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

// Problem + certificate + concrete instance, shared by certify and solve.
fn certify_pipeline(
    ctx: &RunContext,
) -> Result<(Certificate, DsmCertificate, ProblemInstance), CliError> {
    let problem = build_problem(&ctx.cfg.problem, None)?;
    let cert = build_certificate(&problem, ctx.cfg.q, ctx.cfg.r_max, &modulus_cfg(ctx.seed))
        .map_err(map_certify_error)?;
    let h = build_rhs(&ctx.cfg, &problem, ctx.seed)?;
    let z = build_initial_guess(&ctx.cfg, &problem, &cert, ctx.seed)?;
    let inst =
        ProblemInstance::new(problem, h, z).map_err(|e| CliError::Config(e.to_string()))?;
    let dc = build_dsm_certificate(&cert, &inst);
    Ok((cert, dc, inst))
}

fn describe_certificate(cert: &Certificate, dc: &DsmCertificate) -> Vec<String> {
    let mut lines = vec![format!(
        "certificate: m = {}, q = {}, R = {}, rho = {}, q1 = {}",
        fmt_f64(cert.m),
        fmt_f64(cert.q),
        fmt_f64(cert.radius),
        fmt_f64(cert.rho),
        fmt_f64(cert.q1),
    )];
    lines.push(format!(
        "newton mode: {}{}",
        cert.newton_mode,
        if cert.is_heuristic() {
            " (heuristic: sampled modulus, bounds are best-effort)"
        } else {
            ""
        }
    ));
    lines.push(format!(
        "instance: |h - f| = {}, start residual = {}, admissible = {}",
        fmt_f64(dc.delta),
        fmt_f64(dc.r),
        dc.admissible
    ));
    lines
}

pub fn cmd_certify(ctx: &RunContext) -> Result<(), CliError> {
    let (cert, dc, _inst) = certify_pipeline(ctx)?;
    write_output(&ctx.out_dir, "certificate.json", &json_pretty(&dc))?;
    for line in describe_certificate(&cert, &dc) {
        ctx.say(line);
    }
    ctx.say(format!(
        "wrote {}",
        ctx.out_dir.join("certificate.json").display()
    ));
    Ok(())
}

pub fn cmd_solve(ctx: &RunContext) -> Result<(), CliError> {
    let (cert, dc, inst) = certify_pipeline(ctx)?;
    let choice = ctx.cfg.solver;
    if choice.includes(SolverChoice::Newton) && !cert.newton_mode {
        return Err(CliError::Certification(format!(
            "the Newton solver requires q < 1/2; certified q = {}",
            fmt_f64(cert.q)
        )));
    }
    for line in describe_certificate(&cert, &dc) {
        ctx.say(line);
    }

    let scfg = &ctx.cfg.solve;
    let slacks = slacks_for(&ctx.cfg);
    let mut unconverged: Vec<String> = Vec::new();
    let mut reports: Vec<BoundReport> = Vec::new();

    let note_iteration = |name: &str, trace: &IterationTrace| {
        ctx.say(format!(
            "{name}: {} after {} iterations ({}), final residual {}",
            if trace.converged { "converged" } else { "stopped" },
            trace.iterations(),
            trace.stop_reason,
            fmt_f64(trace.final_step().residual)
        ));
    };
    let note_flow = |name: &str, traj: &TrajectoryTrace| {
        ctx.say(format!(
            "{name}: {} nodes{}, final residual {}",
            traj.nodes.len(),
            if traj.truncated { " (truncated)" } else { "" },
            fmt_f64(traj.nodes.last().map(|n| n.residual).unwrap_or(f64::NAN))
        ));
    };

    if choice.includes(SolverChoice::Newton) {
        let trace = newton_solve(&inst, scfg);
        write_output(&ctx.out_dir, "newton.csv", &iteration_csv_string(&trace))?;
        note_iteration("newton", &trace);
        if !trace.converged {
            unconverged.push(format!("newton ({})", trace.stop_reason));
        }
        if ctx.cfg.rhs_offset.is_zero() {
            let report = check_newton_trace(&trace, &cert, &slacks)
                .expect("anchored newton-mode trace is checkable");
            reports.push(report);
        } else {
            ctx.say("newton: rate bounds skipped (rhs differs from the anchored one)");
        }
    }

    if choice.includes(SolverChoice::Contraction) {
        let trace = contraction_solve(&inst, scfg).expect("catalog problems are anchored");
        write_output(
            &ctx.out_dir,
            "contraction.csv",
            &iteration_csv_string(&trace),
        )?;
        note_iteration("contraction", &trace);
        if !trace.converged {
            unconverged.push(format!("contraction ({})", trace.stop_reason));
        }
        let report = check_contraction(
            &cert,
            inst.problem(),
            inst.rhs(),
            CONTRACTION_PAIRS,
            ctx.seed.wrapping_add(STREAM_CONTRACTION),
            &slacks,
        )
        .map_err(|e| CliError::Certification(e.to_string()))?;
        reports.push(report);
    }

    let flow = |name: &'static str,
                    traj: TrajectoryTrace,
                    unconverged: &mut Vec<String>,
                    reports: &mut Vec<BoundReport>|
     -> Result<(), CliError> {
        write_output(
            &ctx.out_dir,
            &format!("{name}.csv"),
            &trajectory_csv_string(&traj),
        )?;
        note_flow(name, &traj);
        if traj.truncated {
            unconverged.push(format!("{name} (truncated)"));
        } else if dc.admissible {
            let report = check_dsm_trace(&traj, &cert, &dc, &slacks)
                .expect("admissible complete trace is checkable");
            reports.push(report);
        } else {
            ctx.say(format!(
                "{name}: flow bounds skipped (instance violates the admissibility hypothesis)"
            ));
        }
        Ok(())
    };
    if choice.includes(SolverChoice::DsmOde) {
        flow("dsm_ode", dsm_ode_solve(&inst, scfg), &mut unconverged, &mut reports)?;
    }
    if choice.includes(SolverChoice::DsmHomotopy) {
        flow(
            "dsm_homotopy",
            dsm_homotopy_solve(&inst, scfg),
            &mut unconverged,
            &mut reports,
        )?;
    }

    let merged = merge_reports(&reports);
    write_output(&ctx.out_dir, "report.json", &json_pretty(&merged))?;
    ctx.say(format!(
        "bounds: {} entries, overall_pass = {}",
        merged.entries.len(),
        merged.overall_pass
    ));

    if !unconverged.is_empty() {
        return Err(CliError::NonConvergence(format!(
            "solver(s) failed to converge: {}",
            unconverged.join(", ")
        )));
    }
    if !merged.overall_pass {
        let violated: Vec<String> = merged
            .entries
            .iter()
            .filter(|e| e.violation_count > 0)
            .map(|e| format!("{} ({} of {})", e.bound_id, e.violation_count, e.checked_count))
            .collect();
        return Err(CliError::BoundViolation(format!(
            "certified bounds violated: {}",
            violated.join(", ")
        )));
    }
    let dsm_requested = choice.includes(SolverChoice::DsmOde)
        || choice.includes(SolverChoice::DsmHomotopy);
    if dsm_requested && !dc.admissible {
        return Err(CliError::BoundViolation(format!(
            "instance violates the admissibility hypothesis: |h - f| + r = {} exceeds rho = {}",
            fmt_f64(dc.delta + dc.r),
            fmt_f64(cert.rho)
        )));
    }
    Ok(())
}

struct SweepRow {
    alpha: f64,
    q: f64,
    q1: f64,
    observed_rate: Option<f64>,
    passed: bool,
}

impl SweepRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt_f64(self.alpha),
            fmt_f64(self.q),
            fmt_f64(self.q1),
            self.observed_rate.map(fmt_f64).unwrap_or_default(),
            self.passed
        )
    }
}

// Exit precedence across cells: config beats certification beats
// non-convergence beats bound violations.
fn keep_worst(worst: &mut Option<CliError>, candidate: CliError) {
    let replace = match worst {
        None => true,
        Some(current) => candidate.exit_code() < current.exit_code(),
    };
    if replace {
        *worst = Some(candidate);
    }
}

fn run_sweep_cell(
    ctx: &RunContext,
    alpha: f64,
    q: f64,
    cell: u64,
) -> Result<(SweepRow, Option<CliError>), CliError> {
    let q1 = q / (1.0 - q);
    let mut row = SweepRow {
        alpha,
        q,
        q1,
        observed_rate: None,
        passed: false,
    };
    let problem = build_problem(&ctx.cfg.problem, Some(alpha))?;
    let cert = match build_certificate(&problem, q, ctx.cfg.r_max, &modulus_cfg(ctx.seed)) {
        Ok(c) => c,
        Err(e) => return Ok((row, Some(map_certify_error(e)))),
    };
    if !cert.newton_mode {
        return Ok((
            row,
            Some(CliError::Certification(format!(
                "sweep cell alpha = {alpha}, q = {q}: Newton rate bounds need q < 1/2"
            ))),
        ));
    }
    let y = problem
        .known_solution()
        .expect("catalog problems are anchored")
        .clone();
    let f = problem
        .known_rhs()
        .expect("catalog problems are anchored")
        .clone();
    let mut rng = substream(ctx.seed, STREAM_SWEEP_BASE + cell);
    let z = y.axpy(0.9 * cert.radius, &unit_direction(&mut rng, problem.dim()));
    let inst = ProblemInstance::new(problem, f, z).expect("dimensions agree");
    let trace = newton_solve(&inst, &ctx.cfg.solve);
    let mut rate: Option<f64> = None;
    for w in trace.steps.windows(2) {
        let a0 = w[0].dist_to_solution.expect("anchored");
        let a1 = w[1].dist_to_solution.expect("anchored");
        if a0 > 0.0 {
            let r = a1 / a0;
            rate = Some(rate.map_or(r, |best| best.max(r)));
        }
    }
    row.observed_rate = rate;
    let report = check_newton_trace(&trace, &cert, &slacks_for(&ctx.cfg))
        .expect("anchored newton-mode trace is checkable");
    row.passed = trace.converged && report.overall_pass;
    let err = if !trace.converged {
        Some(CliError::NonConvergence(format!(
            "sweep cell alpha = {alpha}, q = {q}: newton did not converge ({})",
            trace.stop_reason
        )))
    } else if !report.overall_pass {
        Some(CliError::BoundViolation(format!(
            "sweep cell alpha = {alpha}, q = {q}: certified bounds violated"
        )))
    } else {
        None
    };
    Ok((row, err))
}

pub fn cmd_sweep(ctx: &RunContext) -> Result<(), CliError> {
    let grid = ctx.cfg.sweep.as_ref().ok_or_else(|| {
        CliError::Config("sweep requires a sweep section with alpha and q grids".to_string())
    })?;
    if grid.alpha.is_empty() || grid.q.is_empty() {
        return Err(CliError::Config("sweep grid is empty".to_string()));
    }
    for &alpha in &grid.alpha {
        if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
            return Err(CliError::Config(format!(
                "sweep alpha values must lie in (0, 1), got {alpha}"
            )));
        }
    }
    for &q in &grid.q {
        if !(q.is_finite() && 0.0 < q && q < 1.0) {
            return Err(CliError::Config(format!(
                "sweep q values must lie in (0, 1), got {q}"
            )));
        }
    }

    let mut csv = String::from("alpha,q,q1,observed_rate,passed\n");
    let mut worst: Option<CliError> = None;
    let mut passed_cells = 0usize;
    let total = grid.alpha.len() * grid.q.len();
    for (i, &alpha) in grid.alpha.iter().enumerate() {
        for (j, &q) in grid.q.iter().enumerate() {
            let cell = (i * grid.q.len() + j) as u64;
            let (row, err) = run_sweep_cell(ctx, alpha, q, cell)?;
            if row.passed {
                passed_cells += 1;
            }
            csv.push_str(&row.to_csv());
            csv.push('\n');
            if let Some(e) = err {
                keep_worst(&mut worst, e);
            }
        }
    }
    write_output(&ctx.out_dir, "sweep.csv", &csv)?;
    ctx.say(format!(
        "sweep: {passed_cells}/{total} cells passed, wrote {}",
        ctx.out_dir.join("sweep.csv").display()
    ));
    match worst {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
