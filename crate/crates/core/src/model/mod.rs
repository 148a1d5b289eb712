//! Separable models `y ≈ Φ(a) c` and the data they are fitted to.

mod complex_exp;
mod data;
mod decay;
mod rbf_ar;
mod rbf_network;
pub mod surrogate;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use complex_exp::{
    complex_exponential_inputs, complex_exponential_model, complex_exponential_truth, ComplexExponentialModel,
    COMPLEX_EXP_LINEAR, COMPLEX_EXP_NONLINEAR,
};
pub use data::{load_csv_dataset, ozone_transform, split_dataset, CsvSchema, Standardizer};
pub use decay::{
    exp_decay_inputs, exp_decay_model, exp_decay_truth, ExpDecayModel, EXP_DECAY_AMPLITUDE, EXP_DECAY_RATE,
};
pub use rbf_ar::{rbf_ar_model, RbfArModel};
pub use rbf_network::{rbf_network_model, RbfNetworkModel};

/// Whether a dataset is a set of independent rows or a single ordered series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Tabular,
    TimeSeries,
}

/// Observations `{(xᵢ, yᵢ)}`. A time series keeps its values in `targets`
/// and has no feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    kind: DatasetKind,
}

impl Dataset {
    pub fn tabular(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidInput("dataset has no observations".into()));
        }
        check_len("dataset input rows", targets.len(), inputs.nrows())?;
        Ok(Self {
            inputs,
            targets,
            kind: DatasetKind::Tabular,
        })
    }

    pub fn time_series(series: DVector<f64>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidInput("time series is empty".into()));
        }
        Ok(Self {
            inputs: DMatrix::zeros(series.len(), 0),
            targets: series,
            kind: DatasetKind::TimeSeries,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    /// Rows `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let inputs = self.inputs.select_rows(indices);
        let targets = self.targets.select_rows(indices);
        match self.kind {
            DatasetKind::Tabular => Self::tabular(inputs, targets),
            DatasetKind::TimeSeries => Self::time_series(targets),
        }
    }

    pub(crate) fn with_targets(&self, targets: DVector<f64>) -> Result<Self> {
        check_len("replacement targets", self.len(), targets.len())?;
        Ok(Self {
            inputs: self.inputs.clone(),
            targets,
            kind: self.kind,
        })
    }
}

/// Generating parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub c_true: DVector<f64>,
    pub a_true: DVector<f64>,
    pub noise_sigma: f64,
}

/// A model whose prediction is linear in `c` once `a` is fixed:
/// `ŷ = Φ(a) c`.
pub trait SeparableModel: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Dimension of `c`.
    fn n_linear(&self) -> usize;

    /// Dimension of `a`.
    fn n_nonlinear(&self) -> usize;

    /// Per-coordinate bounds for starting points. Infinite ends mean
    /// unbounded. Optimizers do not constrain later iterates.
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.n_nonlinear()]
    }

    /// True when rows of `Φ` are built from lagged targets.
    fn is_autoregressive(&self) -> bool {
        false
    }

    /// Targets aligned with the rows of `Φ`.
    fn response(&self, data: &Dataset) -> Result<DVector<f64>> {
        Ok(data.targets().clone())
    }

    /// `Φ(a)`, one row per usable sample and `n_linear` columns.
    fn basis(&self, a: &DVector<f64>, data: &Dataset) -> Result<DMatrix<f64>>;

    /// `∂Φ/∂aₖ` for every `k`, each with the shape of `Φ`.
    fn basis_derivatives(&self, a: &DVector<f64>, data: &Dataset) -> Result<Vec<DMatrix<f64>>>;
}

pub(crate) fn check_params(model: &dyn SeparableModel, a: &DVector<f64>) -> Result<()> {
    check_len("nonlinear parameters", model.n_nonlinear(), a.len())?;
    if let Some(i) = a.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "nonlinear parameters",
            row: i,
            col: 0,
        });
    }
    Ok(())
}

pub(crate) fn check_features(model: &str, expected: usize, data: &Dataset) -> Result<()> {
    if data.kind() != DatasetKind::Tabular || data.n_features() != expected {
        return Err(Error::InvalidInput(format!(
            "{model} needs a tabular dataset with {expected} feature column(s), got {:?} with {}",
            data.kind(),
            data.n_features()
        )));
    }
    Ok(())
}

/// Draws `targets = Φ(a_true) c_true + ε` with `ε ~ N(0, σ²)` from a ChaCha8 stream seeded by `seed`.
pub fn generate_synthetic(
    model: &dyn SeparableModel,
    truth: &TrueParameters,
    inputs: &DMatrix<f64>,
    seed: u64,
) -> Result<Dataset> {
    if model.is_autoregressive() {
        return Err(Error::InvalidInput(format!(
            "{} builds its regressors from the series itself; simulate it instead",
            model.name()
        )));
    }
    check_len("true linear parameters", model.n_linear(), truth.c_true.len())?;
    if !(truth.noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be non-negative, got {}",
            truth.noise_sigma
        )));
    }
    let skeleton = Dataset::tabular(inputs.clone(), DVector::zeros(inputs.nrows()))?;
    let phi = model.basis(&truth.a_true, &skeleton)?;
    let mut targets = phi * &truth.c_true;
    if truth.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, truth.noise_sigma).expect("sigma checked above");
        for t in targets.iter_mut() {
            *t += normal.sample(&mut rng);
        }
    }
    skeleton.with_targets(targets)
}

pub(crate) fn sq_dist(x: impl Iterator<Item = f64>, z: impl Iterator<Item = f64>) -> f64 {
    x.zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::linalg::finite_difference_jacobian;

    /// Largest column-wise relative gap between analytic `∂Φ/∂aₖ` and central differences of `Φ`.
    pub fn max_derivative_error(model: &dyn SeparableModel, a: &DVector<f64>, data: &Dataset) -> f64 {
        let derivs = model.basis_derivatives(a, data).unwrap();
        assert_eq!(derivs.len(), model.n_nonlinear());
        let phi = model.basis(a, data).unwrap();
        let h = 1e-6 * a.amax().max(1.0);
        let mut worst = 0.0_f64;
        for col in 0..model.n_linear() {
            let fd = finite_difference_jacobian(|x| Ok(model.basis(x, data)?.column(col).into_owned()), a, h).unwrap();
            for (k, dk) in derivs.iter().enumerate() {
                assert_eq!(dk.shape(), phi.shape());
                let exact = dk.column(col);
                let approx = fd.column(k);
                let scale = exact.norm().max(phi.column(col).norm() * 1e-3).max(1e-12);
                worst = worst.max((exact - approx).norm() / scale);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_gives_exact_model_output() {
        let model = complex_exponential_model();
        let truth = complex_exponential_truth(0.0);
        let inputs = complex_exponential_inputs();
        let data = generate_synthetic(&model, &truth, &inputs, 1).unwrap();
        let skeleton = Dataset::tabular(inputs, DVector::zeros(200)).unwrap();
        let exact = model.basis(&truth.a_true, &skeleton).unwrap() * &truth.c_true;
        assert_eq!(data.targets(), &exact);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let model = complex_exponential_model();
        let truth = complex_exponential_truth(0.1);
        let inputs = complex_exponential_inputs();
        let a = generate_synthetic(&model, &truth, &inputs, 42).unwrap();
        let b = generate_synthetic(&model, &truth, &inputs, 42).unwrap();
        let c = generate_synthetic(&model, &truth, &inputs, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_then_linear_solve_recovers_c() {
        let model = complex_exponential_model();
        let truth = complex_exponential_truth(0.0);
        let data = generate_synthetic(&model, &truth, &complex_exponential_inputs(), 0).unwrap();
        let phi = model.basis(&truth.a_true, &data).unwrap();
        let fac = crate::linalg::factorize_least_squares(&phi, 1e-12).unwrap();
        let c = fac.apply_pseudo_inverse(data.targets()).unwrap();
        assert_relative_eq!(c, truth.c_true, max_relative = 1e-8);
    }

    #[test]
    fn generate_rejects_autoregressive_models() {
        let model = rbf_ar_model(2, 1, 2).unwrap();
        let truth = TrueParameters {
            c_true: DVector::zeros(model.n_linear()),
            a_true: DVector::zeros(model.n_nonlinear()),
            noise_sigma: 0.0,
        };
        assert!(generate_synthetic(&model, &truth, &DMatrix::zeros(10, 1), 0).is_err());
    }

    #[test]
    fn select_rows_preserves_kind() {
        let ts = Dataset::time_series(DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let sub = ts.select_rows(&[0, 2]).unwrap();
        assert_eq!(sub.kind(), DatasetKind::TimeSeries);
        assert_eq!(sub.targets().as_slice(), &[1.0, 3.0]);
        assert!(ts.select_rows(&[3]).is_err());
    }
}
