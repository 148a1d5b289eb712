//! Damped Gauss-Newton loop shared by the projected and joint formulations.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::correction::{update_correction, CorrectionState};
use super::line_search::{backtrack, LineSearchParams};
use super::{CorrectionSummary, OptimizerConfig, Termination, TraceRecord};
use crate::error::Result;
use crate::linalg::{solve_regularized_normal, NormalStep};

const MAX_DAMPING_RETRIES: usize = 80;
const DAMPING_FLOOR: f64 = 1e-12;

/// A nonlinear least-squares problem `min ½‖r(x)‖²`.
pub(crate) trait Subproblem {
    type State;
    fn evaluate(&self, x: &DVector<f64>) -> Result<Self::State>;
    fn objective(&self, state: &Self::State) -> f64;
    fn residual<'s>(&self, state: &'s Self::State) -> &'s DVector<f64>;
    fn jacobian(&self, state: &Self::State) -> Result<DMatrix<f64>>;
}

fn damping_scale(jtj: &DMatrix<f64>) -> f64 {
    let s = jtj.diagonal().max();
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Levenberg damping `μ`, scaled by the largest diagonal entry of the first `JᵀJ`.
pub(crate) struct Damping {
    pub mu: f64,
    scale: f64,
    floor: f64,
    growth: f64,
}

impl Damping {
    pub fn new(cfg: &OptimizerConfig, jtj: &DMatrix<f64>) -> Self {
        let scale = damping_scale(jtj);
        Self {
            mu: cfg.lm_damping_init * scale,
            scale,
            floor: DAMPING_FLOOR * scale,
            growth: cfg.lm_damping_growth,
        }
    }

    pub fn grow(&mut self) {
        self.mu = (self.mu * self.growth).max(self.floor);
    }

    pub fn relax(&mut self) {
        self.mu = (self.mu * 0.5).max(self.floor);
    }

    /// Full steps relax the damping, shortened ones tighten it.
    pub fn after_step(&mut self, beta: f64) {
        if beta == 1.0 {
            self.relax();
        } else {
            self.grow();
        }
    }
}

/// Solves `(JᵀJ + μI) d = −g`, raising `μ` until the result is a descent direction.
pub(crate) fn levenberg_direction(
    jtj: &DMatrix<f64>,
    g: &DVector<f64>,
    damping: &mut Damping,
) -> Result<Option<DVector<f64>>> {
    for _ in 0..MAX_DAMPING_RETRIES {
        match solve_regularized_normal(jtj, g, damping.mu)? {
            NormalStep::Descent(d) => return Ok(Some(d)),
            NormalStep::NeedsDamping => damping.grow(),
        }
    }
    Ok(None)
}

/// Solves `(JᵀJ + T + μI) d = −g` with the current damping, doubling `μ`
/// from the configured initial level while the system fails.
fn corrected_direction(
    jtj: &DMatrix<f64>,
    t: &DMatrix<f64>,
    g: &DVector<f64>,
    damping: &Damping,
    cfg: &OptimizerConfig,
) -> Result<Option<(DVector<f64>, f64)>> {
    let h = jtj + t;
    let fallback = cfg.lm_damping_init.max(DAMPING_FLOOR) * damping.scale;
    let mut mu = damping.mu;
    for _ in 0..MAX_DAMPING_RETRIES {
        match solve_regularized_normal(&h, g, mu)? {
            NormalStep::Descent(d) => return Ok(Some((d, mu))),
            NormalStep::NeedsDamping => mu = (mu * 2.0).max(fallback),
        }
    }
    Ok(None)
}

/// Accumulates trace rows and iterates.
pub(crate) struct Recorder {
    start: Instant,
    pub trace: Vec<TraceRecord>,
    pub iterates: Vec<DVector<f64>>,
}

impl Recorder {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            trace: Vec::new(),
            iterates: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        iteration: usize,
        objective: f64,
        gradient_norm: f64,
        step_norm: f64,
        damping: f64,
        x: &DVector<f64>,
    ) {
        self.trace.push(TraceRecord {
            iteration,
            objective,
            gradient_norm,
            step_norm,
            damping,
            elapsed: self.start.elapsed().as_secs_f64(),
        });
        self.iterates.push(x.clone());
    }
}

/// Step test first, then objective change, then budget.
pub(crate) fn stop_reason(
    step_norm: f64,
    f_prev: f64,
    f_new: f64,
    k: usize,
    cfg: &OptimizerConfig,
) -> Option<Termination> {
    if step_norm < cfg.epsilon {
        Some(Termination::StepNorm)
    } else if (f_new - f_prev).abs() < cfg.epsilon {
        Some(Termination::ObjectiveDelta)
    } else if k >= cfg.max_iters {
        Some(Termination::Budget)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Curvature {
    /// `JᵀJ + μI` with adaptive `μ`.
    Levenberg,
    /// `JᵀJ + T + μI` with the secant-updated `T` and the same `μ` schedule.
    Corrected,
}

pub(crate) struct DriverRun<S> {
    pub state: S,
    pub x: DVector<f64>,
    pub recorder: Recorder,
    pub termination: Termination,
    pub correction: Option<CorrectionSummary>,
}

pub(crate) fn minimize<P: Subproblem>(
    p: &P,
    x0: &DVector<f64>,
    cfg: &OptimizerConfig,
    curvature: Curvature,
) -> Result<DriverRun<P::State>> {
    let mut rec = Recorder::new();
    let mut x = x0.clone();
    let mut state = p.evaluate(&x)?;
    let mut f = p.objective(&state);
    let mut jac = p.jacobian(&state)?;
    let mut grad = jac.tr_mul(p.residual(&state));
    let mut damping = Damping::new(cfg, &jac.tr_mul(&jac));
    let mut correction = (curvature == Curvature::Corrected).then(|| {
        (
            CorrectionState::zeros(x.len()),
            CorrectionSummary {
                updates_applied: 0,
                updates_skipped: 0,
                max_secant_residual: 0.0,
                max_asymmetry: 0.0,
            },
        )
    });
    rec.push(0, f, grad.norm(), 0.0, damping.mu, &x);

    let params = LineSearchParams::from(cfg);
    let mut termination = Termination::Budget;
    for k in 1..=cfg.max_iters {
        let jtj = jac.tr_mul(&jac);
        let direction = match &correction {
            None => levenberg_direction(&jtj, &grad, &mut damping)?.map(|d| (d, damping.mu)),
            Some((c, _)) => corrected_direction(&jtj, &c.t, &grad, &damping, cfg)?,
        };
        let Some((d, mu_used)) = direction else {
            termination = Termination::LineSearchFailure;
            break;
        };
        let d_norm = d.norm();
        let accepted = if d_norm == 0.0 {
            None
        } else {
            let trial = |xx: &DVector<f64>| {
                let s = p.evaluate(xx).ok()?;
                Some((p.objective(&s), s))
            };
            backtrack(trial, &x, f, &d, &grad, params).ok()
        };
        let Some(step) = accepted else {
            // A direction shorter than the step tolerance converges whether or not it is taken.
            if d_norm < cfg.epsilon {
                rec.push(k, f, grad.norm(), 0.0, mu_used, &x);
                termination = Termination::StepNorm;
            } else {
                termination = Termination::LineSearchFailure;
            }
            break;
        };
        damping.after_step(step.beta);

        let new_jac = p.jacobian(&step.state)?;
        let r_new = p.residual(&step.state);
        let new_grad = new_jac.tr_mul(r_new);
        let s = &step.point - &x;
        if let Some((c, summary)) = correction.as_mut() {
            let g_hat = &new_grad - jac.tr_mul(r_new);
            let next = update_correction(c, &s, &g_hat, cfg.skip_tol)?;
            if next.updates_applied > c.updates_applied {
                summary.max_secant_residual = summary.max_secant_residual.max(next.secant_residual(&s, &g_hat));
            }
            summary.max_asymmetry = summary.max_asymmetry.max(next.asymmetry());
            summary.updates_applied = next.updates_applied;
            summary.updates_skipped = next.updates_skipped;
            *c = next;
        }

        let step_norm = s.norm();
        let f_new = step.value;
        rec.push(k, f_new, new_grad.norm(), step_norm, mu_used, &step.point);
        let stop = stop_reason(step_norm, f, f_new, k, cfg);
        x = step.point;
        state = step.state;
        f = f_new;
        jac = new_jac;
        grad = new_grad;
        if let Some(t) = stop {
            termination = t;
            break;
        }
    }

    Ok(DriverRun {
        state,
        x,
        recorder: rec,
        termination,
        correction: correction.map(|(_, s)| s),
    })
}
