//! Methods that keep `c` as an explicit unknown.

use nalgebra::{DMatrix, DVector};

use super::driver::{levenberg_direction, minimize, stop_reason, Curvature, Damping, Recorder, Subproblem};
use super::line_search::{backtrack, LineSearchParams};
use super::{expect_method, FitResult, Method, OptimizerConfig, Termination};
use crate::error::{check_len, Result};
use crate::reduced::SeparableProblem;

pub(crate) struct FullState {
    a: DVector<f64>,
    c: DVector<f64>,
    residual: DVector<f64>,
    objective: f64,
}

fn full_state(problem: &SeparableProblem<'_>, a: &DVector<f64>, c: &DVector<f64>) -> Result<FullState> {
    let residual = problem.full_residual(a, c)?;
    Ok(FullState {
        a: a.clone(),
        c: c.clone(),
        objective: 0.5 * residual.norm_squared(),
        residual,
    })
}

/// Columns `−Φₖ c` of `∂r/∂a` for `r = y − Φ(a) c`.
fn nonlinear_block(problem: &SeparableProblem<'_>, state: &FullState) -> Result<DMatrix<f64>> {
    let derivs = problem.basis_derivatives(&state.a)?;
    let mut jac = DMatrix::zeros(state.residual.len(), derivs.len());
    for (k, dk) in derivs.iter().enumerate() {
        jac.set_column(k, &-(dk * &state.c));
    }
    Ok(jac)
}

/// `½‖y − Φ(a) c‖²` over `θ = (c, a)`.
struct Joint<'p, 'a> {
    problem: &'p SeparableProblem<'a>,
}

impl Subproblem for Joint<'_, '_> {
    type State = FullState;

    fn evaluate(&self, theta: &DVector<f64>) -> Result<FullState> {
        let n = self.problem.n_linear();
        let c = theta.rows(0, n).into_owned();
        let a = theta.rows(n, theta.len() - n).into_owned();
        full_state(self.problem, &a, &c)
    }

    fn objective(&self, state: &FullState) -> f64 {
        state.objective
    }

    fn residual<'s>(&self, state: &'s FullState) -> &'s DVector<f64> {
        &state.residual
    }

    fn jacobian(&self, state: &FullState) -> Result<DMatrix<f64>> {
        let phi = self.problem.basis(&state.a)?;
        let block = nonlinear_block(self.problem, state)?;
        let n = phi.ncols();
        let mut jac = DMatrix::zeros(phi.nrows(), n + block.ncols());
        jac.columns_mut(0, n).copy_from(&-phi);
        jac.columns_mut(n, block.ncols()).copy_from(&block);
        Ok(jac)
    }
}

/// `½‖y − Φ(a) c‖²` over `a` with `c` held fixed.
struct Frozen<'p, 'a> {
    problem: &'p SeparableProblem<'a>,
    c: DVector<f64>,
}

impl Subproblem for Frozen<'_, '_> {
    type State = FullState;

    fn evaluate(&self, a: &DVector<f64>) -> Result<FullState> {
        full_state(self.problem, a, &self.c)
    }

    fn objective(&self, state: &FullState) -> f64 {
        state.objective
    }

    fn residual<'s>(&self, state: &'s FullState) -> &'s DVector<f64> {
        &state.residual
    }

    fn jacobian(&self, state: &FullState) -> Result<DMatrix<f64>> {
        nonlinear_block(self.problem, state)
    }
}

/// Levenberg-Marquardt on all parameters jointly, from `(a0, c0)`.
pub fn run_joint(
    problem: &SeparableProblem<'_>,
    a0: &DVector<f64>,
    c0: &DVector<f64>,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    expect_method(cfg, Method::Joint)?;
    problem.check_bounds(a0)?;
    check_len("linear parameters", problem.n_linear(), c0.len())?;
    let n = problem.n_linear();
    let theta0 = DVector::from_iterator(n + a0.len(), c0.iter().chain(a0.iter()).copied());
    let run = minimize(&Joint { problem }, &theta0, cfg, Curvature::Levenberg)?;
    let iterates = run
        .recorder
        .iterates
        .iter()
        .map(|t| t.rows(n, t.len() - n).into_owned())
        .collect();
    Ok(FitResult {
        method: Method::Joint,
        objective: run.state.objective,
        a_final: run.state.a,
        c_final: run.state.c,
        trace: run.recorder.trace,
        iterates,
        termination: run.termination,
        correction: None,
    })
}

fn theta_distance(da: &DVector<f64>, dc: &DVector<f64>) -> f64 {
    (da.norm_squared() + dc.norm_squared()).sqrt()
}

/// Alternates an exact solve for `c` with one damped Gauss-Newton step on `a`.
///
/// Trace objectives are taken after the `a` step, with `c` from the preceding solve.
pub fn run_alternating(problem: &SeparableProblem<'_>, a0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<FitResult> {
    expect_method(cfg, Method::Alternating)?;
    problem.check_bounds(a0)?;
    let params = LineSearchParams::from(cfg);
    let mut rec = Recorder::new();

    let eval0 = problem.evaluate_reduced(a0)?;
    let mut a = a0.clone();
    let mut c = eval0.c;
    let mut f = eval0.objective;
    let start = Frozen { problem, c: c.clone() };
    let state0 = start.evaluate(&a)?;
    let jac0 = start.jacobian(&state0)?;
    let mut damping = Damping::new(cfg, &jac0.tr_mul(&jac0));
    rec.push(0, f, jac0.tr_mul(&state0.residual).norm(), 0.0, damping.mu, &a);

    let mut termination = Termination::Budget;
    for k in 1..=cfg.max_iters {
        let c_prev = c;
        c = problem.evaluate_reduced(&a)?.c;
        let sub = Frozen { problem, c: c.clone() };
        let state = sub.evaluate(&a)?;
        let jac = sub.jacobian(&state)?;
        let grad = jac.tr_mul(&state.residual);
        let Some(d) = levenberg_direction(&jac.tr_mul(&jac), &grad, &mut damping)? else {
            termination = Termination::LineSearchFailure;
            break;
        };
        let dc = &c - &c_prev;
        let trial = |x: &DVector<f64>| {
            let s = sub.evaluate(x).ok()?;
            Some((s.objective, s))
        };
        let accepted = if d.norm() == 0.0 {
            None
        } else {
            backtrack(trial, &a, state.objective, &d, &grad, params).ok()
        };
        let Some(step) = accepted else {
            if theta_distance(&d, &dc) < cfg.epsilon {
                rec.push(
                    k,
                    state.objective,
                    grad.norm(),
                    theta_distance(&DVector::zeros(a.len()), &dc),
                    damping.mu,
                    &a,
                );
                termination = Termination::StepNorm;
            } else {
                termination = Termination::LineSearchFailure;
            }
            f = state.objective;
            break;
        };
        damping.after_step(step.beta);
        let new_grad = sub.jacobian(&step.state)?.tr_mul(&step.state.residual);
        let step_norm = theta_distance(&(&step.point - &a), &dc);
        rec.push(k, step.value, new_grad.norm(), step_norm, damping.mu, &step.point);
        let stop = stop_reason(step_norm, f, step.value, k, cfg);
        a = step.point;
        f = step.value;
        if let Some(t) = stop {
            termination = t;
            break;
        }
    }

    Ok(FitResult {
        method: Method::Alternating,
        a_final: a,
        c_final: c,
        objective: f,
        trace: rec.trace,
        iterates: rec.iterates,
        termination,
        correction: None,
    })
}

/// Block coordinate descent: an Armijo gradient step on `c`, then one on `a`.
pub fn run_bcd(problem: &SeparableProblem<'_>, a0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<FitResult> {
    expect_method(cfg, Method::Bcd)?;
    problem.check_bounds(a0)?;
    let params = LineSearchParams::from(cfg);
    let y = problem.y();
    let mut rec = Recorder::new();

    let mut a = a0.clone();
    let mut c = problem.evaluate_reduced(a0)?.c;
    let mut f = problem.original_objective(&a, &c)?;
    let block_gradients = |a: &DVector<f64>, c: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let state = full_state(problem, a, c)?;
        let g_c = -problem.basis(a)?.tr_mul(&state.residual);
        let g_a = nonlinear_block(problem, &state)?.tr_mul(&state.residual);
        Ok((g_c, g_a))
    };
    let (g_c, g_a) = block_gradients(&a, &c)?;
    rec.push(0, f, theta_distance(&g_a, &g_c), 0.0, 0.0, &a);

    let mut termination = Termination::Budget;
    for k in 1..=cfg.max_iters {
        let phi = problem.basis(&a)?;
        let r = y - &phi * &c;
        let g_c = -phi.tr_mul(&r);
        let c_obj = |x: &DVector<f64>| Some((0.5 * (y - &phi * x).norm_squared(), ()));
        let c_step = if g_c.norm() > 0.0 {
            backtrack(c_obj, &c, f, &-&g_c, &g_c, params).ok()
        } else {
            None
        };
        let (c_new, f_mid) = match &c_step {
            Some(s) => (s.point.clone(), s.value),
            None => (c.clone(), f),
        };

        let sub = Frozen {
            problem,
            c: c_new.clone(),
        };
        let state = sub.evaluate(&a)?;
        let g_a = sub.jacobian(&state)?.tr_mul(&state.residual);
        let trial = |x: &DVector<f64>| {
            let s = sub.evaluate(x).ok()?;
            Some((s.objective, s))
        };
        let a_step = if g_a.norm() > 0.0 {
            backtrack(trial, &a, f_mid, &-&g_a, &g_a, params).ok()
        } else {
            None
        };

        if c_step.is_none() && a_step.is_none() {
            if theta_distance(&g_a, &g_c) < cfg.epsilon {
                rec.push(k, f, theta_distance(&g_a, &g_c), 0.0, 0.0, &a);
                termination = Termination::StepNorm;
            } else {
                termination = Termination::LineSearchFailure;
            }
            break;
        }
        let (a_new, f_new) = match a_step {
            Some(s) => (s.point, s.value),
            None => (a.clone(), f_mid),
        };
        let step_norm = theta_distance(&(&a_new - &a), &(&c_new - &c));
        let (gc_new, ga_new) = block_gradients(&a_new, &c_new)?;
        rec.push(k, f_new, theta_distance(&ga_new, &gc_new), step_norm, 0.0, &a_new);
        let stop = stop_reason(step_norm, f, f_new, k, cfg);
        a = a_new;
        c = c_new;
        f = f_new;
        if let Some(t) = stop {
            termination = t;
            break;
        }
    }

    Ok(FitResult {
        method: Method::Bcd,
        a_final: a,
        c_final: c,
        objective: f,
        trace: rec.trace,
        iterates: rec.iterates,
        termination,
        correction: None,
    })
}
