use nalgebra::{DMatrix, DVector};

use super::{check_features, check_params, Dataset, SeparableModel, TrueParameters};
use crate::error::Result;

/// Generating decay rate and amplitude of the bundled 1-D problem.
pub const EXP_DECAY_RATE: f64 = 2.5;
pub const EXP_DECAY_AMPLITUDE: f64 = 1.7;

/// Single exponential `ŷ = c · exp(−a x)`; one linear and one nonlinear parameter.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpDecayModel;

pub fn exp_decay_model() -> ExpDecayModel {
    ExpDecayModel
}

/// 20 sample points `0.1, 0.2, …, 2.0`.
pub fn exp_decay_inputs() -> DMatrix<f64> {
    DMatrix::from_fn(20, 1, |i, _| 0.1 * (i + 1) as f64)
}

pub fn exp_decay_truth(noise_sigma: f64) -> TrueParameters {
    TrueParameters {
        c_true: DVector::from_element(1, EXP_DECAY_AMPLITUDE),
        a_true: DVector::from_element(1, EXP_DECAY_RATE),
        noise_sigma,
    }
}

impl SeparableModel for ExpDecayModel {
    fn name(&self) -> String {
        "exp-decay".into()
    }

    fn n_linear(&self) -> usize {
        1
    }

    fn n_nonlinear(&self) -> usize {
        1
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 20.0)]
    }

    fn basis(&self, a: &DVector<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
        check_params(self, a)?;
        check_features("exp-decay", 1, data)?;
        let phi = DMatrix::from_iterator(
            data.len(),
            1,
            data.inputs().column(0).iter().map(|&x| (-a[0] * x).exp()),
        );
        crate::linalg::ensure_finite_matrix("exp-decay basis", &phi)?;
        Ok(phi)
    }

    fn basis_derivatives(&self, a: &DVector<f64>, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        check_params(self, a)?;
        check_features("exp-decay", 1, data)?;
        let d = DMatrix::from_iterator(
            data.len(),
            1,
            data.inputs().column(0).iter().map(|&x| -x * (-a[0] * x).exp()),
        );
        Ok(vec![d])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::max_derivative_error;

    #[test]
    fn derivative_matches_finite_differences() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.1);
        let data = Dataset::tabular(x, DVector::zeros(20)).unwrap();
        for a in [0.1, 1.0, 3.5, 12.0] {
            assert!(max_derivative_error(&ExpDecayModel, &DVector::from_element(1, a), &data) < 1e-6);
        }
    }
}
