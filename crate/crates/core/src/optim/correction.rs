//! Secant-updated correction `T ≈ Σ r₂ⱼ ∇²r₂ⱼ` for large-residual problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};

/// Relative secant error above which an update is discarded as numerically unreliable.
const SECANT_GUARD: f64 = 1e-10;

/// The correction matrix and its update counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionState {
    pub t: DMatrix<f64>,
    pub updates_applied: usize,
    pub updates_skipped: usize,
}

impl CorrectionState {
    /// `T⁰ = 0`, so the first corrected step is a plain Gauss-Newton step.
    pub fn zeros(k: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(k, k))
    }

    pub fn from_matrix(t: DMatrix<f64>) -> Self {
        Self {
            t,
            updates_applied: 0,
            updates_skipped: 0,
        }
    }

    /// `‖T s − ĝ‖ / (1 + ‖ĝ‖)`.
    pub fn secant_residual(&self, s: &DVector<f64>, g_hat: &DVector<f64>) -> f64 {
        (&self.t * s - g_hat).norm() / (1.0 + g_hat.norm())
    }

    /// `‖T − Tᵀ‖ / (1 + ‖T‖)`.
    pub fn asymmetry(&self) -> f64 {
        (&self.t - self.t.transpose()).norm() / (1.0 + self.t.norm())
    }

    fn skipped(&self) -> Self {
        let mut next = self.clone();
        next.updates_skipped += 1;
        next
    }
}

/// Rank-two secant update
/// `T' = T − (T s sᵀ T)/(sᵀ T s) + (ĝ ĝᵀ)/(ĝᵀ s)`, which gives `T' s = ĝ`.
///
/// The update is skipped (and counted) when `ĝᵀs` or `sᵀTs` is too small
/// relative to the vectors involved. When `T s = 0` exactly, as for the
/// zero starting matrix, the first correction term vanishes and only the
/// `ĝ` term is added.
pub fn update_correction(
    state: &CorrectionState,
    s: &DVector<f64>,
    g_hat: &DVector<f64>,
    skip_tol: f64,
) -> Result<CorrectionState> {
    let k = state.t.nrows();
    check_len("correction step", k, s.len())?;
    check_len("correction target", k, g_hat.len())?;

    let s_norm = s.norm();
    let g_norm = g_hat.norm();
    let gs = g_hat.dot(s);
    if !(gs > skip_tol * g_norm * s_norm) {
        return Ok(state.skipped());
    }

    let ts = &state.t * s;
    let mut t_next = state.t.clone();
    if ts.iter().any(|&v| v != 0.0) {
        let sts = s.dot(&ts);
        if !(sts > skip_tol * s_norm * s_norm * (1.0 + state.t.norm())) {
            return Ok(state.skipped());
        }
        t_next -= &ts * ts.transpose() / sts;
    }
    t_next += g_hat * g_hat.transpose() / gs;
    let t_next = (&t_next + t_next.transpose()) * 0.5;

    let next = CorrectionState {
        t: t_next,
        updates_applied: state.updates_applied + 1,
        updates_skipped: state.updates_skipped,
    };
    if !next.t.iter().all(|v| v.is_finite()) || next.secant_residual(s, g_hat) > SECANT_GUARD {
        return Ok(state.skipped());
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e1(k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(k);
        v[0] = 1.0;
        v
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let state = CorrectionState::from_matrix(DMatrix::identity(3, 3));
        let next = update_correction(&state, &e1(3), &e1(3), 1e-8).unwrap();
        assert!((&next.t - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        assert_eq!(next.updates_applied, 1);
    }

    #[test]
    fn negative_curvature_pair_is_skipped() {
        let state = CorrectionState::from_matrix(DMatrix::identity(2, 2));
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let g = DVector::from_vec(vec![-1.0, 0.5]);
        let next = update_correction(&state, &s, &g, 1e-8).unwrap();
        assert_eq!(next.t, state.t);
        assert_eq!(next.updates_skipped, 1);
        assert_eq!(next.updates_applied, 0);
    }

    #[test]
    fn zero_start_takes_the_rank_one_term() {
        let state = CorrectionState::zeros(2);
        let s = DVector::from_vec(vec![1.0, 2.0]);
        let g = DVector::from_vec(vec![3.0, 1.0]);
        let next = update_correction(&state, &s, &g, 1e-8).unwrap();
        assert_eq!(next.updates_applied, 1);
        assert!(next.secant_residual(&s, &g) < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let state = CorrectionState::zeros(2);
        assert!(update_correction(&state, &DVector::zeros(3), &DVector::zeros(2), 1e-8).is_err());
    }

    proptest! {
        #[test]
        fn accepted_updates_satisfy_secant_and_stay_symmetric(
            seed_t in proptest::collection::vec(-1.0f64..1.0, 16),
            s in proptest::collection::vec(-1.0f64..1.0, 4),
            g in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let b = DMatrix::from_vec(4, 4, seed_t);
            let state = CorrectionState::from_matrix(b.transpose() * &b);
            let s = DVector::from_vec(s);
            let g = DVector::from_vec(g);
            let next = update_correction(&state, &s, &g, 1e-8).unwrap();
            prop_assert!(next.asymmetry() <= 1e-12);
            if next.updates_applied == 1 {
                prop_assert!(next.secant_residual(&s, &g) <= 1e-10);
            } else {
                prop_assert_eq!(&next.t, &state.t);
            }
        }
    }
}
