use nalgebra::DVector;

use super::OptimizerConfig;

/// Armijo backtracking controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub c1: f64,
    pub factor: f64,
    pub max_backtracks: usize,
}

impl From<&OptimizerConfig> for LineSearchParams {
    fn from(cfg: &OptimizerConfig) -> Self {
        Self {
            c1: cfg.armijo_c1,
            factor: cfg.backtrack_factor,
            max_backtracks: cfg.max_backtracks,
        }
    }
}

/// An accepted trial point together with whatever the objective computed there.
#[derive(Debug, Clone)]
pub struct AcceptedStep<S> {
    pub beta: f64,
    pub point: DVector<f64>,
    pub value: f64,
    pub state: S,
}

/// No step size in `{1, ρ, …, ρ^max_backtracks}` gave sufficient decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("line search failed to find sufficient decrease")]
pub struct LineSearchFailure;

/// Backtracking over `β ∈ {1, ρ, ρ², …}` until
/// `f(a + βd) ≤ f(a) + c₁ β gᵀd`.
///
/// `f` returns `None` where the objective cannot be evaluated; such trials
/// count as rejected.
pub fn backtrack<S, F>(
    mut f: F,
    a: &DVector<f64>,
    f_a: f64,
    d: &DVector<f64>,
    g: &DVector<f64>,
    params: LineSearchParams,
) -> Result<AcceptedStep<S>, LineSearchFailure>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, S)>,
{
    let slope = g.dot(d);
    if !(slope < 0.0) {
        return Err(LineSearchFailure);
    }
    let mut beta = 1.0;
    for _ in 0..=params.max_backtracks {
        let point = a + d * beta;
        if let Some((value, state)) = f(&point) {
            if value.is_finite() && value <= f_a + params.c1 * beta * slope {
                return Ok(AcceptedStep {
                    beta,
                    point,
                    value,
                    state,
                });
            }
        }
        beta *= params.factor;
    }
    Err(LineSearchFailure)
}

/// Scalar-objective form: returns the accepted `β` and `a + βd`.
pub fn backtracking_search<F>(
    mut objective: F,
    a: &DVector<f64>,
    d: &DVector<f64>,
    g: &DVector<f64>,
    cfg: &OptimizerConfig,
) -> Result<(f64, DVector<f64>), LineSearchFailure>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let f_a = objective(a);
    let step = backtrack(|x| Some((objective(x), ())), a, f_a, d, g, cfg.into())?;
    Ok((step.beta, step.point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half_norm(x: &DVector<f64>) -> f64 {
        0.5 * x.norm_squared()
    }

    #[test]
    fn newton_step_on_quadratic_is_accepted() {
        let a = DVector::from_vec(vec![3.0, -1.0]);
        let (beta, x) = backtracking_search(half_norm, &a, &-&a, &a, &OptimizerConfig::default()).unwrap();
        assert_eq!(beta, 1.0);
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn overshooting_direction_is_shortened() {
        let a = DVector::from_vec(vec![1.0]);
        let d = DVector::from_vec(vec![-10.0]);
        let cfg = OptimizerConfig::default();
        let (beta, x) = backtracking_search(half_norm, &a, &d, &a, &cfg).unwrap();
        assert!(beta < 1.0);
        assert!(half_norm(&x) <= half_norm(&a) + cfg.armijo_c1 * beta * a.dot(&d));
    }

    #[test]
    fn ascent_direction_fails() {
        let a = DVector::from_vec(vec![1.0]);
        assert!(backtracking_search(half_norm, &a, &a.clone(), &a, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn accepted_steps_satisfy_armijo_on_random_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = OptimizerConfig::default();
        for _ in 0..50 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let q = b.transpose() * &b + DMatrix::identity(4, 4) * 0.1;
            let f = |x: &DVector<f64>| 0.5 * x.dot(&(&q * x));
            let a = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let g = &q * &a;
            let d = -&g * rng.random_range(0.1..20.0);
            let (beta, x) = backtracking_search(f, &a, &d, &g, &cfg).unwrap();
            // Independent recheck of the sufficient-decrease inequality.
            assert!(f(&x) <= f(&a) + cfg.armijo_c1 * beta * g.dot(&d));
            assert!((&x - (&a + &d * beta)).norm() == 0.0);
        }
    }
}
