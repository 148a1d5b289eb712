use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::ExperimentReport;
use super::{mse, rbf_ar_forecast};
use crate::error::{check_len, Error, Result};
use crate::model::surrogate::{concrete_dataset, ozone_series};
use crate::model::{
    complex_exponential_inputs, complex_exponential_model, complex_exponential_truth, exp_decay_inputs,
    exp_decay_model, exp_decay_truth, generate_synthetic, load_csv_dataset, ozone_transform, rbf_ar_model,
    rbf_network_model, split_dataset, ComplexExponentialModel, CsvSchema, Dataset, ExpDecayModel, RbfArModel,
    RbfNetworkModel, SeparableModel, Standardizer, TrueParameters,
};
use crate::optim::{fit, CorrectionSummary, FitResult, Method, OptimizerConfig, Termination, TraceRecord};
use crate::reduced::SeparableProblem;

pub const COMPLEX_NOISE_SIGMA: f64 = 0.1;
pub const DECAY_NOISE_SIGMA: f64 = 0.05;
/// RBF-AR orders `(p, m, d)` of the ozone experiment.
pub const OZONE_ORDER: (usize, usize, usize) = (8, 1, 3);
pub const OZONE_TRAIN: usize = 450;
pub const CONCRETE_CENTERS: usize = 8;
const CONCRETE_TRAIN_FRACTION: f64 = 0.8;
/// Seed of the bundled stand-in datasets; fixed so that runs with different
/// seeds vary only the split and the starting point.
pub const SURROGATE_SEED: u64 = 2024;
/// Relative spread of the default complex exponential start.
const LARGE_DEVIATION: f64 = 0.5;
/// Iteration budget shared by every method unless overridden.
pub const DEFAULT_EXPERIMENT_BUDGET: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "exp-complex")]
    Complex,
    #[serde(rename = "exp-ozone")]
    Ozone,
    #[serde(rename = "exp-concrete")]
    Concrete,
    /// Single exponential decay with one parameter of each kind.
    #[serde(rename = "exp-decay")]
    Decay,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [Self::Complex, Self::Ozone, Self::Concrete, Self::Decay];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Complex => "exp-complex",
            Self::Ozone => "exp-ozone",
            Self::Concrete => "exp-concrete",
            Self::Decay => "exp-decay",
        }
    }

    /// Name of the model fitted by this experiment.
    pub fn model_name(&self) -> &'static str {
        match self {
            Self::Complex => "complex-exp",
            Self::Ozone => "rbf-ar",
            Self::Concrete => "rbf-network",
            Self::Decay => "exp-decay",
        }
    }

    pub fn from_model_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.model_name() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model '{name}'")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown experiment '{s}'")))
    }
}

/// How the shared starting point is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    /// The experiment's seeded default.
    Seeded,
    Explicit(Vec<f64>),
}

/// Where the data of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic { seed: u64, noise_sigma: f64 },
    File { path: String },
    Surrogate { seed: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub kind: ExperimentKind,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub data_path: Option<PathBuf>,
    /// Fraction of rows used for training. `None` keeps the experiment's
    /// default split, which for the synthetic problems is no held-out data.
    #[serde(default)]
    pub train_split: Option<f64>,
    pub init: InitSpec,
    /// Settings shared by all runs; `method` is replaced per run.
    pub base: OptimizerConfig,
}

impl ExperimentDescriptor {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            methods: Method::ALL.to_vec(),
            seed: 0,
            data_path: None,
            train_split: None,
            init: InitSpec::Seeded,
            base: OptimizerConfig {
                max_iters: DEFAULT_EXPERIMENT_BUDGET,
                ..OptimizerConfig::default()
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.base.seed = seed;
        self
    }
}

/// `a_true · (1 + 0.5 u)` with `u` uniform on `[−1, 1]` per coordinate.
pub fn large_deviation_init(a_true: &DVector<f64>, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    a_true.map(|v| v * (1.0 + LARGE_DEVIATION * rng.random_range(-1.0..1.0)))
}

#[derive(Debug, Clone)]
enum ExperimentModel {
    Complex(ComplexExponentialModel),
    Ozone(RbfArModel),
    Concrete(RbfNetworkModel),
    Decay(ExpDecayModel),
}

/// Data, model and starting point of one experiment, ready to fit.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub kind: ExperimentKind,
    model: ExperimentModel,
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// The whole transformed series, for forecasting past the training prefix.
    full_series: Option<DVector<f64>>,
    pub a0: DVector<f64>,
    pub provenance: Provenance,
}

impl PreparedExperiment {
    pub fn prepare(desc: &ExperimentDescriptor) -> Result<Self> {
        if let Some(f) = desc.train_split {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "train split must lie strictly between 0 and 1, got {f}"
                )));
            }
        }
        let mut prepared = match desc.kind {
            ExperimentKind::Complex => {
                let truth = complex_exponential_truth(COMPLEX_NOISE_SIGMA);
                let model = complex_exponential_model();
                prepare_synthetic(
                    desc,
                    &model,
                    truth,
                    &complex_exponential_inputs(),
                    ExperimentModel::Complex(model),
                )?
            }
            ExperimentKind::Decay => {
                let truth = exp_decay_truth(DECAY_NOISE_SIGMA);
                let model = exp_decay_model();
                prepare_synthetic(desc, &model, truth, &exp_decay_inputs(), ExperimentModel::Decay(model))?
            }
            ExperimentKind::Ozone => prepare_ozone(desc)?,
            ExperimentKind::Concrete => prepare_concrete(desc)?,
        };
        if let InitSpec::Explicit(a0) = &desc.init {
            check_len("initial nonlinear parameters", prepared.model().n_nonlinear(), a0.len())?;
            prepared.a0 = DVector::from_vec(a0.clone());
        }
        Ok(prepared)
    }

    pub fn model(&self) -> &dyn SeparableModel {
        match &self.model {
            ExperimentModel::Complex(m) => m,
            ExperimentModel::Ozone(m) => m,
            ExperimentModel::Concrete(m) => m,
            ExperimentModel::Decay(m) => m,
        }
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_test(&self) -> usize {
        self.test.as_ref().map_or(0, Dataset::len)
    }

    pub fn train_mse(&self, a: &DVector<f64>, c: &DVector<f64>) -> Result<f64> {
        let problem = SeparableProblem::new(self.model(), &self.train)?;
        mse(problem.y(), &(problem.basis(a)? * c))
    }

    /// `None` when the experiment has no held-out data.
    pub fn test_mse(&self, a: &DVector<f64>, c: &DVector<f64>) -> Result<Option<f64>> {
        let Some(test) = &self.test else {
            return Ok(None);
        };
        match (&self.model, &self.full_series) {
            (ExperimentModel::Ozone(model), Some(series)) => {
                let preds = rbf_ar_forecast(model, a, c, series, self.train.len())?;
                Ok(Some(mse(test.targets(), &preds)?))
            }
            _ => {
                let phi = self.model().basis(a, test)?;
                Ok(Some(mse(test.targets(), &(phi * c))?))
            }
        }
    }
}

fn split_count(len: usize, fraction: f64) -> usize {
    (len as f64 * fraction).round() as usize
}

/// Seeded draws from the generating model, or a user file with the same
/// column layout. The start is the seeded large-deviation perturbation of
/// the generating parameters either way.
fn prepare_synthetic(
    desc: &ExperimentDescriptor,
    model: &dyn SeparableModel,
    truth: TrueParameters,
    inputs: &DMatrix<f64>,
    wrapped: ExperimentModel,
) -> Result<PreparedExperiment> {
    let (data, provenance) = match &desc.data_path {
        Some(path) => (
            load_csv_dataset(path, CsvSchema::Tabular)?,
            Provenance::File {
                path: path.display().to_string(),
            },
        ),
        None => (
            generate_synthetic(model, &truth, inputs, desc.seed)?,
            Provenance::Synthetic {
                seed: desc.seed,
                noise_sigma: truth.noise_sigma,
            },
        ),
    };
    let (train, test) = match desc.train_split {
        Some(f) => {
            let (train, test) = split_dataset(&data, split_count(data.len(), f), desc.seed)?;
            (train, Some(test))
        }
        None => (data, None),
    };
    Ok(PreparedExperiment {
        kind: desc.kind,
        a0: large_deviation_init(&truth.a_true, desc.seed),
        model: wrapped,
        train,
        test,
        full_series: None,
        provenance,
    })
}

/// Loads `path` when it exists, otherwise falls back to the bundled stand-in.
fn load_or_surrogate(
    path: Option<&PathBuf>,
    schema: CsvSchema,
    surrogate: impl FnOnce() -> Result<Dataset>,
) -> Result<(Dataset, Provenance)> {
    match path {
        Some(p) if p.exists() => Ok((
            load_csv_dataset(p, schema)?,
            Provenance::File {
                path: p.display().to_string(),
            },
        )),
        Some(p) => Ok((
            surrogate()?,
            Provenance::Surrogate {
                seed: SURROGATE_SEED,
                reason: format!("{} not found", p.display()),
            },
        )),
        None => Ok((
            surrogate()?,
            Provenance::Surrogate {
                seed: SURROGATE_SEED,
                reason: "no data path given".into(),
            },
        )),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn width_from_spread(sq_dists: Vec<f64>) -> f64 {
    let med = median(sq_dists);
    if med > 0.0 {
        1.0 / med
    } else {
        1.0
    }
}

fn prepare_ozone(desc: &ExperimentDescriptor) -> Result<PreparedExperiment> {
    let (raw, provenance) = load_or_surrogate(desc.data_path.as_ref(), CsvSchema::TimeSeries, || {
        Dataset::time_series(ozone_series(SURROGATE_SEED))
    })?;
    let series = ozone_transform(raw.targets())?;
    let data = Dataset::time_series(series.clone())?;
    let n_train = desc.train_split.map_or(OZONE_TRAIN, |f| split_count(data.len(), f));
    let (train, test) = split_dataset(&data, n_train, desc.seed)?;
    let (p, m, d) = OZONE_ORDER;
    let model = rbf_ar_model(p, m, d)?;

    // Centers start at seeded training lag vectors; widths match their typical spread.
    let y = train.targets();
    let lags: Vec<DVector<f64>> = (model.start()..y.len())
        .map(|t| DVector::from_fn(d, |l, _| y[t - 1 - l]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    let picks = sample(&mut rng, lags.len(), m);
    let centers: Vec<DVector<f64>> = picks.iter().map(|i| lags[i].clone()).collect();
    let lambdas: Vec<f64> = centers
        .iter()
        .map(|z| width_from_spread(lags.iter().map(|v| (v - z).norm_squared()).collect()))
        .collect();
    let a0 = model.pack(&lambdas, &centers)?;

    Ok(PreparedExperiment {
        kind: ExperimentKind::Ozone,
        model: ExperimentModel::Ozone(model),
        train,
        test: Some(test),
        full_series: Some(series),
        a0,
        provenance,
    })
}

fn prepare_concrete(desc: &ExperimentDescriptor) -> Result<PreparedExperiment> {
    let (raw, provenance) = load_or_surrogate(desc.data_path.as_ref(), CsvSchema::Tabular, || {
        concrete_dataset(SURROGATE_SEED)
    })?;
    let n_train = split_count(raw.len(), desc.train_split.unwrap_or(CONCRETE_TRAIN_FRACTION));
    let (train_raw, test_raw) = split_dataset(&raw, n_train, desc.seed)?;
    let scaler = Standardizer::fit(&train_raw);
    let train = scaler.apply(&train_raw)?;
    let test = scaler.apply(&test_raw)?;
    let model = rbf_network_model(CONCRETE_CENTERS, train.n_features())?;

    let x: &DMatrix<f64> = train.inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    rng.set_stream(1);
    let picks = sample(&mut rng, x.nrows(), CONCRETE_CENTERS);
    let centers: Vec<DVector<f64>> = picks.iter().map(|i| x.row(i).transpose()).collect();
    let mut pair_dists = Vec::with_capacity(x.nrows() * (x.nrows() - 1) / 2);
    for i in 0..x.nrows() {
        for j in 0..i {
            pair_dists.push((x.row(i) - x.row(j)).norm_squared());
        }
    }
    let width = width_from_spread(pair_dists);
    let a0 = model.pack(&[width; CONCRETE_CENTERS], &centers)?;

    Ok(PreparedExperiment {
        kind: ExperimentKind::Concrete,
        model: ExperimentModel::Concrete(model),
        train,
        test: Some(test),
        full_series: None,
        a0,
        provenance,
    })
}

/// One optimizer's outcome inside an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub config: OptimizerConfig,
    pub termination: Termination,
    pub iterations: usize,
    pub objective: f64,
    pub a_final: Vec<f64>,
    pub c_final: Vec<f64>,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub correction: Option<CorrectionSummary>,
    pub trace: Vec<TraceRecord>,
}

impl MethodRun {
    fn from_fit(fit: FitResult, config: OptimizerConfig, prepared: &PreparedExperiment) -> Result<Self> {
        let train_mse = prepared.train_mse(&fit.a_final, &fit.c_final)?;
        let test_mse = prepared.test_mse(&fit.a_final, &fit.c_final)?;
        Ok(Self {
            method: fit.method,
            config,
            termination: fit.termination,
            iterations: fit.iterations(),
            objective: fit.objective,
            a_final: fit.a_final.as_slice().to_vec(),
            c_final: fit.c_final.as_slice().to_vec(),
            train_mse,
            test_mse,
            correction: fit.correction,
            trace: fit.trace,
        })
    }
}

/// Runs every requested method from the same start, one thread per method.
pub fn run_experiment(desc: &ExperimentDescriptor) -> Result<ExperimentReport> {
    if desc.methods.is_empty() {
        return Err(Error::InvalidInput("experiment needs at least one optimizer".into()));
    }
    desc.base.validate()?;
    let prepared = PreparedExperiment::prepare(desc)?;
    let problem = SeparableProblem::new(prepared.model(), &prepared.train)?.with_rank_tol(desc.base.rank_tol);

    let results: Vec<Result<MethodRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = desc
            .methods
            .iter()
            .map(|&method| {
                let cfg = desc.base.clone().with_method(method);
                let (problem, prepared) = (&problem, &prepared);
                scope.spawn(move || {
                    let result = fit(problem, &prepared.a0, &cfg)?;
                    MethodRun::from_fit(result, cfg, prepared)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidInput("optimizer thread panicked".into())))
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        experiment: desc.kind,
        model: prepared.model().name(),
        seed: desc.seed,
        provenance: prepared.provenance.clone(),
        n_train: prepared.n_train(),
        n_test: prepared.n_test(),
        a0: prepared.a0.as_slice().to_vec(),
        runs,
    })
}
