//! Optimizers for separable least squares: projected (VP, VPLR) and
//! unreduced baselines (joint LM, alternating, block coordinate descent).

mod baselines;
mod config;
mod correction;
mod driver;
mod line_search;

use nalgebra::{DMatrix, DVector};

pub use baselines::{run_alternating, run_bcd, run_joint};
pub use config::{CorrectionSummary, FitResult, Method, OptimizerConfig, Termination, TraceRecord};
pub use correction::{update_correction, CorrectionState};
pub use line_search::{backtrack, backtracking_search, AcceptedStep, LineSearchFailure, LineSearchParams};

use crate::error::{Error, Result};
use crate::reduced::{JacobianVariant, ReducedEvaluation, SeparableProblem};
use driver::{minimize, Curvature, Subproblem};

fn expect_method(cfg: &OptimizerConfig, method: Method) -> Result<()> {
    cfg.validate()?;
    if cfg.method != method {
        return Err(Error::InvalidInput(format!(
            "configuration selects '{}' but the '{}' runner was called",
            cfg.method, method
        )));
    }
    Ok(())
}

/// The reduced problem `½‖P⊥(a) y‖²` in `a` alone.
struct Projected<'p, 'a> {
    problem: &'p SeparableProblem<'a>,
    variant: JacobianVariant,
}

impl Subproblem for Projected<'_, '_> {
    type State = ReducedEvaluation;

    fn evaluate(&self, a: &DVector<f64>) -> Result<ReducedEvaluation> {
        self.problem.evaluate_reduced(a)
    }

    fn objective(&self, state: &ReducedEvaluation) -> f64 {
        state.objective
    }

    fn residual<'s>(&self, state: &'s ReducedEvaluation) -> &'s DVector<f64> {
        &state.r2
    }

    fn jacobian(&self, state: &ReducedEvaluation) -> Result<DMatrix<f64>> {
        self.problem.jacobian(state, self.variant)
    }
}

fn run_projected(
    problem: &SeparableProblem<'_>,
    a0: &DVector<f64>,
    cfg: &OptimizerConfig,
    method: Method,
    curvature: Curvature,
) -> Result<FitResult> {
    expect_method(cfg, method)?;
    problem.check_bounds(a0)?;
    let sub = Projected {
        problem,
        variant: cfg.jacobian,
    };
    let run = minimize(&sub, a0, cfg, curvature)?;
    Ok(FitResult {
        method,
        objective: run.state.objective,
        a_final: run.x,
        c_final: run.state.c,
        trace: run.recorder.trace,
        iterates: run.recorder.iterates,
        termination: run.termination,
        correction: run.correction,
    })
}

/// Variable projection with Levenberg-Marquardt damping on the reduced problem.
pub fn run_vp(problem: &SeparableProblem<'_>, a0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<FitResult> {
    run_projected(problem, a0, cfg, Method::Vp, Curvature::Levenberg)
}

/// Variable projection whose model Hessian `JᵀJ + T` carries a secant
/// estimate of the second-order residual term.
pub fn run_vplr(problem: &SeparableProblem<'_>, a0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<FitResult> {
    run_projected(problem, a0, cfg, Method::Vplr, Curvature::Corrected)
}

/// Runs the method selected by `cfg`. The joint method starts from `c = Φ(a0)† y`.
pub fn fit(problem: &SeparableProblem<'_>, a0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<FitResult> {
    match cfg.method {
        Method::Vp => run_vp(problem, a0, cfg),
        Method::Vplr => run_vplr(problem, a0, cfg),
        Method::Joint => {
            problem.check_bounds(a0)?;
            let c0 = problem.evaluate_reduced(a0)?.c;
            run_joint(problem, a0, &c0, cfg)
        }
        Method::Alternating => run_alternating(problem, a0, cfg),
        Method::Bcd => run_bcd(problem, a0, cfg),
    }
}
