//! Run configuration: a single JSON document describing the problem, the
//! certification target, the instance to solve, and solver knobs.
//!
//! Unknown fields are rejected everywhere so a typo fails loudly instead of
//! silently running defaults.

use crate::CliError;
use newton_universal::certify::Certificate;
use newton_universal::linalg::Vector;
use newton_universal::problem::{
    catalog_diag_hoelder, catalog_scalar_hoelder, catalog_smooth_hammerstein, NonlinearProblem,
};
use newton_universal::sampling::{substream, uniform_in_ball, unit_direction};
use newton_universal::solvers::SolveConfig;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

// Dedicated RNG streams per randomized ingredient, so adding one never
// shifts another.
const STREAM_RHS: u64 = 1;
const STREAM_GUESS: u64 = 2;
pub const STREAM_CONTRACTION: u64 = 3;
pub const STREAM_SWEEP_BASE: u64 = 100;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Target contraction factor for certification; must lie in (0, 1).
    pub q: f64,
    /// Cap for the certified radius search.
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// Offset of the right-hand side from the anchored value `f`: either a
    /// magnitude (applied along a seeded random direction) or an explicit
    /// vector.
    #[serde(default)]
    pub rhs_offset: RhsOffset,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
    /// Grid for the sweep subcommand; ignored elsewhere.
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

fn default_r_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RhsOffset {
    Magnitude(f64),
    Vector(Vec<f64>),
}

impl Default for RhsOffset {
    fn default() -> Self {
        RhsOffset::Magnitude(0.0)
    }
}

impl RhsOffset {
    /// Exactly the anchored right-hand side, no offset at all.
    pub fn is_zero(&self) -> bool {
        matches!(self, RhsOffset::Magnitude(0.0))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialGuess {
    Strategy(GuessStrategy),
    Point(Vec<f64>),
}

impl Default for InitialGuess {
    fn default() -> Self {
        InitialGuess::Strategy(GuessStrategy::Offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessStrategy {
    /// Start exactly at the known solution.
    AtSolution,
    /// Start at distance R/2 from the solution along the diagonal.
    Offset,
    /// Start uniformly in the certified ball.
    RandomInBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Newton,
    Contraction,
    DsmOde,
    DsmHomotopy,
    #[default]
    All,
}

impl SolverChoice {
    pub fn includes(self, other: SolverChoice) -> bool {
        self == SolverChoice::All || self == other
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub q: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.q.is_finite() && 0.0 < self.q && self.q < 1.0) {
            return Err(CliError::Config(format!(
                "q must lie in the open range (0, 1), got {}",
                self.q
            )));
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(CliError::Config(format!(
                "r_max must be positive, got {}",
                self.r_max
            )));
        }
        if let RhsOffset::Magnitude(m) = self.rhs_offset {
            if !(m.is_finite() && m >= 0.0) {
                return Err(CliError::Config(format!(
                    "rhs_offset magnitude must be nonnegative, got {m}"
                )));
            }
        }
        self.solve
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

// Typed access to the free-form params map, rejecting unknown keys so a
// misspelled parameter cannot silently fall back to its default.
struct Params<'a> {
    id: &'a str,
    map: &'a BTreeMap<String, serde_json::Value>,
    known: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn new(id: &'a str, map: &'a BTreeMap<String, serde_json::Value>) -> Self {
        Params {
            id,
            map,
            known: Vec::new(),
        }
    }

    fn float(&mut self, key: &'static str, default: f64) -> Result<f64, CliError> {
        self.known.push(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| {
                CliError::Config(format!("{}: param {key} must be a number", self.id))
            }),
        }
    }

    fn size(&mut self, key: &'static str, default: usize) -> Result<usize, CliError> {
        self.known.push(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{}: param {key} must be a nonnegative integer",
                        self.id
                    ))
                }),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        for key in self.map.keys() {
            if !self.known.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "{}: unknown param {key} (expected one of {})",
                    self.id,
                    self.known.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Instantiate the catalog problem named in the config, optionally forcing
/// the exponent (used by sweeps).
pub fn build_problem(
    chosen: &ProblemSpec,
    alpha_override: Option<f64>,
) -> Result<NonlinearProblem, CliError> {
    let mut p = Params::new(&chosen.id, &chosen.params);
    let bad_param = |e: newton_universal::problem::ProblemError| CliError::Config(e.to_string());
    let problem = match chosen.id.as_str() {
        "scalar-hoelder" => {
            let c = p.float("c", 1.0)?;
            let alpha = alpha_override.unwrap_or(p.float("alpha", 0.5)?);
            p.finish()?;
            catalog_scalar_hoelder(c, alpha).map_err(bad_param)?
        }
        "diag-hoelder" => {
            let n = p.size("n", 4)?;
            let c = p.float("c", 1.0)?;
            let alpha = alpha_override.unwrap_or(p.float("alpha", 0.5)?);
            let coupling = p.float("coupling", 0.0)?;
            p.finish()?;
            catalog_diag_hoelder(n, c, alpha, coupling).map_err(bad_param)?
        }
        "hammerstein" => {
            if alpha_override.is_some() {
                return Err(CliError::Config(
                    "hammerstein has no alpha parameter; sweep needs a hoelder problem"
                        .to_string(),
                ));
            }
            let n = p.size("n", 21)?;
            let lam = p.float("lam", 0.1)?;
            p.finish()?;
            catalog_smooth_hammerstein(n, lam).map_err(bad_param)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown problem id {other:?} (expected scalar-hoelder, diag-hoelder, or hammerstein)"
            )))
        }
    };
    Ok(problem)
}

/// Materialize the right-hand side from the anchored value and the
/// configured offset. Stream `STREAM_RHS` of the run seed supplies the
/// direction for magnitude offsets.
pub fn build_rhs(
    cfg: &RunConfig,
    problem: &NonlinearProblem,
    seed: u64,
) -> Result<Vector, CliError> {
    let f = problem
        .known_rhs()
        .expect("catalog problems are anchored")
        .clone();
    match &cfg.rhs_offset {
        RhsOffset::Magnitude(0.0) => Ok(f),
        RhsOffset::Magnitude(m) => {
            let mut rng = substream(seed, STREAM_RHS);
            let dir = unit_direction(&mut rng, problem.dim());
            Ok(f.axpy(*m, &dir))
        }
        RhsOffset::Vector(v) => {
            if v.len() != problem.dim() {
                return Err(CliError::Config(format!(
                    "rhs_offset has dimension {}, problem has {}",
                    v.len(),
                    problem.dim()
                )));
            }
            Ok(f.add(&Vector::new(v.clone())))
        }
    }
}

/// Materialize the start point. Strategies are relative to the certificate:
/// stream `STREAM_GUESS` supplies randomness for `random-in-ball`.
pub fn build_initial_guess(
    cfg: &RunConfig,
    problem: &NonlinearProblem,
    cert: &Certificate,
    seed: u64,
) -> Result<Vector, CliError> {
    let y = problem
        .known_solution()
        .expect("catalog problems are anchored");
    match &cfg.initial_guess {
        InitialGuess::Strategy(GuessStrategy::AtSolution) => Ok(y.clone()),
        InitialGuess::Strategy(GuessStrategy::Offset) => {
            let n = problem.dim();
            let step = 0.5 * cert.radius / (n as f64).sqrt();
            Ok(y.add(&Vector::from_fn(n, |_| step)))
        }
        InitialGuess::Strategy(GuessStrategy::RandomInBall) => {
            let mut rng = substream(seed, STREAM_GUESS);
            Ok(uniform_in_ball(&mut rng, y, cert.radius))
        }
        InitialGuess::Point(v) => {
            if v.len() != problem.dim() {
                return Err(CliError::Config(format!(
                    "initial_guess has dimension {}, problem has {}",
                    v.len(),
                    problem.dim()
                )));
            }
            Ok(Vector::new(v.clone()))
        }
    }
}
