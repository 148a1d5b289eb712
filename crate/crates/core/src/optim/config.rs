use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduced::JacobianVariant;

/// Optimizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Alternating minimization: exact `c`, then one damped step on `a`.
    Alternating,
    /// Block coordinate descent with gradient steps on each block.
    Bcd,
    /// Levenberg-Marquardt on `(c, a)` jointly.
    Joint,
    /// Variable projection with Levenberg-Marquardt damping.
    Vp,
    /// Variable projection with the large-residual Hessian correction.
    Vplr,
}

impl Method {
    /// Column order of the comparison tables.
    pub const ALL: [Method; 5] = [Self::Alternating, Self::Bcd, Self::Joint, Self::Vp, Self::Vplr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Alternating => "am",
            Self::Bcd => "bcd",
            Self::Joint => "joint",
            Self::Vp => "vp",
            Self::Vplr => "vplr",
        }
    }

    /// Column heading used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Alternating => "ALS",
            Self::Bcd => "BCD",
            Self::Joint => "Joint",
            Self::Vp => "VP",
            Self::Vplr => "VPLR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vp" => Ok(Self::Vp),
            "vplr" => Ok(Self::Vplr),
            "joint" => Ok(Self::Joint),
            "am" | "als" | "alternating" => Ok(Self::Alternating),
            "bcd" => Ok(Self::Bcd),
            other => Err(Error::InvalidInput(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Run controls shared by every optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub jacobian: JacobianVariant,
    /// Tolerance on both the objective change and the step norm.
    pub epsilon: f64,
    /// Iteration budget.
    pub max_iters: usize,
    /// Initial damping, relative to the largest diagonal entry of `JᵀJ`.
    pub lm_damping_init: f64,
    /// Damping multiplier after a rejected full step.
    pub lm_damping_growth: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Relative threshold below which a correction update is skipped.
    pub skip_tol: f64,
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Vp,
            jacobian: JacobianVariant::GolubPereyra,
            epsilon: 1e-8,
            max_iters: 200,
            lm_damping_init: 1e-3,
            lm_damping_growth: 4.0,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            skip_tol: 1e-8,
            rank_tol: crate::linalg::DEFAULT_RANK_TOL,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad(format!("armijo_c1 must lie in (0, 1), got {}", self.armijo_c1));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        if !(self.lm_damping_init >= 0.0) || !(self.lm_damping_growth > 1.0) {
            return bad("damping must start non-negative and grow by a factor above 1".into());
        }
        if !(self.skip_tol > 0.0) || !(self.rank_tol > 0.0) {
            return bad("skip_tol and rank_tol must be positive".into());
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    ObjectiveDelta,
    StepNorm,
    Budget,
    LineSearchFailure,
}

/// One row of a convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step_norm: f64,
    pub damping: f64,
    /// Wall-clock seconds since the run started.
    pub elapsed: f64,
}

/// Bookkeeping of the correction matrix over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub updates_applied: usize,
    pub updates_skipped: usize,
    /// Largest `‖T s − ĝ‖ / (1 + ‖ĝ‖)` right after an accepted update.
    pub max_secant_residual: f64,
    /// Largest `‖T − Tᵀ‖ / (1 + ‖T‖)` seen during the run.
    pub max_asymmetry: f64,
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub a_final: DVector<f64>,
    pub c_final: DVector<f64>,
    /// Objective recorded at the last trace entry.
    pub objective: f64,
    pub trace: Vec<TraceRecord>,
    /// Nonlinear parameters after each trace entry.
    pub iterates: Vec<DVector<f64>>,
    pub termination: Termination,
    pub correction: Option<CorrectionSummary>,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.last().map(|r| r.iteration).unwrap_or(0)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }
}
