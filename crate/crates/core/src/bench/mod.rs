//! Experiments, error metrics, forecasting and convergence-order estimation.

mod experiment;
mod rates;
mod report;

use nalgebra::DVector;

pub use experiment::{
    large_deviation_init, run_experiment, ExperimentDescriptor, ExperimentKind, InitSpec, MethodRun,
    PreparedExperiment, Provenance, COMPLEX_NOISE_SIGMA, CONCRETE_CENTERS, DECAY_NOISE_SIGMA,
    DEFAULT_EXPERIMENT_BUDGET, OZONE_ORDER, OZONE_TRAIN, SURROGATE_SEED,
};
pub use rates::{
    errors_against_reference, estimate_convergence_order, rate_floor, rate_study, RateEstimate, RateStudy,
    ResidualRegime, ThresholdComparison,
};
pub use report::{format_mse_table, write_trace_csv, ExperimentReport, TRACE_CSV_HEADER};

use crate::error::{check_len, Error, Result};
use crate::model::RbfArModel;

/// `(1/n) Σ (yᵢ − ŷᵢ)²`.
pub fn mse(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check_len("predictions", y.len(), y_hat.len())?;
    if y.is_empty() {
        return Err(Error::InvalidInput("mean squared error of an empty vector".into()));
    }
    Ok((y - y_hat).norm_squared() / y.len() as f64)
}

/// One-step-ahead predictions of `series[t]` for `t` in `start..series.len()`,
/// each built from the observed values before `t`.
pub fn rbf_ar_forecast(
    model: &RbfArModel,
    a: &DVector<f64>,
    c: &DVector<f64>,
    series: &DVector<f64>,
    start: usize,
) -> Result<DVector<f64>> {
    if start < model.start() || start >= series.len() {
        return Err(Error::InvalidInput(format!(
            "forecast start {start} needs at least {} earlier observations and a later one (series has {})",
            model.start(),
            series.len()
        )));
    }
    let values = series.as_slice();
    let preds = (start..series.len())
        .map(|t| model.predict_at(a, c, values, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(preds))
}
