use nalgebra::{DMatrix, DVector};

use super::{check_features, check_params, Dataset, SeparableModel, TrueParameters};
use crate::error::Result;

/// Generating linear coefficients of the complex exponential benchmark.
pub const COMPLEX_EXP_LINEAR: [f64; 3] = [2.0, 3.0, 2.0];
/// Generating nonlinear parameters of the complex exponential benchmark.
pub const COMPLEX_EXP_NONLINEAR: [f64; 4] = [10.0, 15.0, 30.0, 8.0];

/// Three damped oscillations sharing four nonlinear parameters:
///
/// ```text
/// φ₁ = exp(−a₂x²) cos(a₃x)
/// φ₂ = exp(−a₁x²) cos(a₂x)
/// φ₃ = exp(−a₄x²) sin(a₁x)
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexExponentialModel;

pub fn complex_exponential_model() -> ComplexExponentialModel {
    ComplexExponentialModel
}

/// 200 sample points `0, 0.005, …, 0.995`.
pub fn complex_exponential_inputs() -> DMatrix<f64> {
    DMatrix::from_fn(200, 1, |i, _| i as f64 * 0.005)
}

pub fn complex_exponential_truth(noise_sigma: f64) -> TrueParameters {
    TrueParameters {
        c_true: DVector::from_row_slice(&COMPLEX_EXP_LINEAR),
        a_true: DVector::from_row_slice(&COMPLEX_EXP_NONLINEAR),
        noise_sigma,
    }
}

impl SeparableModel for ComplexExponentialModel {
    fn name(&self) -> String {
        "complex-exp".into()
    }

    fn n_linear(&self) -> usize {
        3
    }

    fn n_nonlinear(&self) -> usize {
        4
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, f64::INFINITY); 4]
    }

    fn basis(&self, a: &DVector<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
        check_params(self, a)?;
        check_features("complex-exp", 1, data)?;
        let x = data.inputs().column(0);
        let mut phi = DMatrix::zeros(x.len(), 3);
        for (i, &xi) in x.iter().enumerate() {
            let x2 = xi * xi;
            phi[(i, 0)] = (-a[1] * x2).exp() * (a[2] * xi).cos();
            phi[(i, 1)] = (-a[0] * x2).exp() * (a[1] * xi).cos();
            phi[(i, 2)] = (-a[3] * x2).exp() * (a[0] * xi).sin();
        }
        crate::linalg::ensure_finite_matrix("complex-exp basis", &phi)?;
        Ok(phi)
    }

    fn basis_derivatives(&self, a: &DVector<f64>, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        check_params(self, a)?;
        check_features("complex-exp", 1, data)?;
        let x = data.inputs().column(0);
        let m = x.len();
        let mut d = vec![DMatrix::zeros(m, 3); 4];
        for (i, &xi) in x.iter().enumerate() {
            let x2 = xi * xi;
            let e1 = (-a[0] * x2).exp();
            let e2 = (-a[1] * x2).exp();
            let e4 = (-a[3] * x2).exp();
            let phi1 = e2 * (a[2] * xi).cos();
            let phi2 = e1 * (a[1] * xi).cos();
            let phi3 = e4 * (a[0] * xi).sin();

            d[0][(i, 1)] = -x2 * phi2;
            d[0][(i, 2)] = e4 * xi * (a[0] * xi).cos();

            d[1][(i, 0)] = -x2 * phi1;
            d[1][(i, 1)] = -e1 * xi * (a[1] * xi).sin();

            d[2][(i, 0)] = -e2 * xi * (a[2] * xi).sin();

            d[3][(i, 2)] = -x2 * phi3;
        }
        Ok(d)
    }
}
