use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    complex_exponential_inputs, complex_exponential_model, complex_exponential_truth, generate_synthetic,
};
use crate::optim::{fit, FitResult, Method, OptimizerConfig};
use crate::reduced::{JacobianVariant, SeparableProblem};

const MIN_PAIRS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualRegime {
    Small,
    Large,
}

impl std::str::FromStr for ResidualRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Self::Small),
            "large" => Ok(Self::Large),
            other => Err(Error::InvalidInput(format!("unknown residual regime '{other}'"))),
        }
    }
}

/// Fit of `log e_{i+1} = log K + q log e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub order: f64,
    /// `K`.
    pub linear_factor: f64,
    /// First and last error index used, inclusive.
    pub window: (usize, usize),
    pub pairs: usize,
    /// Root-mean-square residual of the log-log regression.
    pub fit_residual: f64,
    pub regime: ResidualRegime,
}

/// Errors below this are treated as rounding noise.
pub fn rate_floor(scale: f64) -> f64 {
    1e2 * f64::EPSILON * scale.max(1.0)
}

/// `‖aᵢ − a*‖` for every iterate.
pub fn errors_against_reference(iterates: &[DVector<f64>], a_star: &DVector<f64>) -> Vec<f64> {
    iterates.iter().map(|a| (a - a_star).norm()).collect()
}

/// Fits the convergence order over the last strictly decreasing run of
/// errors that stay above `floor`.
pub fn estimate_convergence_order(errors: &[f64], floor: f64, regime: ResidualRegime) -> Result<RateEstimate> {
    let usable = |e: f64| e.is_finite() && e > floor;
    let Some(end) = errors.iter().rposition(|&e| usable(e)) else {
        return Err(Error::InvalidInput("no error above the noise floor".into()));
    };
    let mut start = end;
    while start > 0 && usable(errors[start - 1]) && errors[start - 1] > errors[start] {
        start -= 1;
    }
    let pairs = end - start;
    if pairs < MIN_PAIRS {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least {MIN_PAIRS} decreasing error pairs, found {pairs}"
        )));
    }

    let xs: Vec<f64> = errors[start..end].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors[start + 1..=end].iter().map(|e| e.ln()).collect();
    let n = pairs as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("errors in the fit window do not vary".into()));
    }
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - order * x).powi(2))
        .sum();
    Ok(RateEstimate {
        order,
        linear_factor: intercept.exp(),
        window: (start, end),
        pairs,
        fit_residual: (sse / n).sqrt(),
        regime,
    })
}

/// Iterations each method needed to get within a relative margin of the best final objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdComparison {
    pub threshold: f64,
    pub vp_iterations: Option<usize>,
    pub vplr_iterations: Option<usize>,
}

/// Side-by-side rate probe of the Golub-Pereyra and Kaufman Jacobians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub regime: ResidualRegime,
    pub seed: u64,
    pub noise_sigma: f64,
    pub a0: Vec<f64>,
    /// One entry per Jacobian variant; `Err` holds the reason a fit was rejected.
    pub estimates: Vec<(JacobianVariant, std::result::Result<RateEstimate, String>)>,
    pub threshold: Option<ThresholdComparison>,
}

/// Noise level of the large-residual probe.
const LARGE_RESIDUAL_SIGMA: f64 = 1.0;
/// Relative start perturbation of the probes.
const SMALL_PERTURBATION: f64 = 0.2;
const LARGE_PERTURBATION: f64 = 0.2;
/// Relative margin above the best final objective counted as reaching it.
const THRESHOLD_MARGIN: f64 = 1e-4;

fn first_below(fit: &FitResult, threshold: f64) -> Option<usize> {
    fit.trace.iter().find(|r| r.objective <= threshold).map(|r| r.iteration)
}

/// Undamped Gauss-Newton runs on the complex exponential problem.
///
/// The reference `a*` for each variant is the endpoint of a rerun with a
/// tolerance ten times tighter.
pub fn rate_study(regime: ResidualRegime, seed: u64) -> Result<RateStudy> {
    let model = complex_exponential_model();
    let (sigma, spread) = match regime {
        ResidualRegime::Small => (0.0, SMALL_PERTURBATION),
        ResidualRegime::Large => (LARGE_RESIDUAL_SIGMA, LARGE_PERTURBATION),
    };
    let truth = complex_exponential_truth(sigma);
    let data = generate_synthetic(&model, &truth, &complex_exponential_inputs(), seed)?;
    let problem = SeparableProblem::new(&model, &data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let a0 = truth.a_true.map(|v| v * (1.0 + spread * rng.random_range(-1.0..1.0)));

    let base = OptimizerConfig {
        epsilon: 1e-10,
        max_iters: 200,
        lm_damping_init: 0.0,
        seed,
        ..OptimizerConfig::default()
    };
    let floor = rate_floor(truth.a_true.norm());
    let mut estimates = Vec::new();
    for variant in [JacobianVariant::GolubPereyra, JacobianVariant::Kaufman] {
        let cfg = OptimizerConfig {
            jacobian: variant,
            ..base.clone()
        };
        let run = fit(&problem, &a0, &cfg)?;
        let reference = fit(
            &problem,
            &a0,
            &OptimizerConfig {
                epsilon: cfg.epsilon / 10.0,
                ..cfg.clone()
            },
        )?;
        let errors = errors_against_reference(&run.iterates, &reference.a_final);
        let estimate = estimate_convergence_order(&errors, floor, regime).map_err(|e| e.to_string());
        estimates.push((variant, estimate));
    }

    let threshold = match regime {
        ResidualRegime::Small => None,
        ResidualRegime::Large => {
            let vp = fit(&problem, &a0, &base.clone().with_method(Method::Vp))?;
            let vplr = fit(&problem, &a0, &base.clone().with_method(Method::Vplr))?;
            let best = vp.objective.min(vplr.objective);
            let threshold = best + THRESHOLD_MARGIN * best.abs();
            Some(ThresholdComparison {
                threshold,
                vp_iterations: first_below(&vp, threshold),
                vplr_iterations: first_below(&vplr, threshold),
            })
        }
    };

    Ok(RateStudy {
        regime,
        seed,
        noise_sigma: sigma,
        a0: a0.as_slice().to_vec(),
        estimates,
        threshold,
    })
}
