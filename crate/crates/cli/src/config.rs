//! Command-line flags and the optional flat TOML file that mirrors them.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "vproj", version, about = "Variable projection solvers and experiments")]
pub struct Cli {
    /// Flat TOML file with the same keys as the long flags; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model with one optimizer and write a run artifact.
    Fit(FitArgs),
    /// Run every optimizer on a bundled experiment from a shared start.
    Experiment(ExperimentArgs),
    /// Run the seeded property suites.
    Verify(VerifyArgs),
    /// Estimate convergence orders of the Golub-Pereyra and Kaufman Jacobians.
    Rates(RatesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Flags shared by the solver commands.
#[derive(Debug, Default, Args)]
pub struct SolverFlags {
    /// Jacobian form: gp, kaufman or ruano.
    #[arg(long)]
    pub jacobian: Option<String>,
    /// Data file; CSV with a header row.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Fraction of rows used for training.
    #[arg(long)]
    pub train_split: Option<f64>,
    /// Explicit starting point for the nonlinear parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
    /// Stopping tolerance on the step and objective change.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct OutputFlags {
    /// Seed for data noise, splits and starting points.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or directory for `experiment`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Machine-readable stdout instead of the text summary.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Default, Args)]
pub struct FitArgs {
    /// complex-exp, exp-decay, rbf-ar or rbf-network.
    #[arg(long)]
    pub model: Option<String>,
    /// am, bcd, joint, vp or vplr.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Re-run the configuration stored in an artifact and compare traces.
    #[arg(long, value_name = "ARTIFACT", conflicts_with_all = ["model", "optimizer"])]
    pub replay: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// exp-complex, exp-ozone, exp-concrete or exp-decay.
    pub experiment: Option<String>,
    /// Comma-separated optimizers, or `all`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct VerifyArgs {
    /// Suite to run; repeat for several. Defaults to all of them.
    #[arg(long)]
    pub property: Vec<String>,
    /// Random instances per model, or optimizer runs for the secant suite.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Negate one Jacobian column so that the Jacobian suites must fail.
    #[arg(long, hide = true)]
    pub corrupt_jacobian: bool,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct RatesArgs {
    /// Only complex-exp is supported.
    #[arg(long)]
    pub model: Option<String>,
    /// small or large.
    #[arg(long)]
    pub residual: Option<String>,
    #[command(flatten)]
    pub output: OutputFlags,
}

/// Every setting after merging the config file under the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    pub model: Option<String>,
    pub experiment: Option<String>,
    pub optimizer: Option<String>,
    pub jacobian: Option<String>,
    pub data: Option<PathBuf>,
    pub train_split: Option<f64>,
    pub init: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub property: Option<Vec<String>>,
    pub instances: Option<usize>,
    pub residual: Option<String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        Settings {
            model: top.model.or(self.model),
            experiment: top.experiment.or(self.experiment),
            optimizer: top.optimizer.or(self.optimizer),
            jacobian: top.jacobian.or(self.jacobian),
            data: top.data.or(self.data),
            train_split: top.train_split.or(self.train_split),
            init: top.init.or(self.init),
            epsilon: top.epsilon.or(self.epsilon),
            max_iters: top.max_iters.or(self.max_iters),
            seed: top.seed.or(self.seed),
            out: top.out.or(self.out),
            format: top.format.or(self.format),
            property: top.property.or(self.property),
            instances: top.instances.or(self.instances),
            residual: top.residual.or(self.residual),
        }
    }

    fn with_solver(mut self, s: SolverFlags) -> Self {
        self.jacobian = s.jacobian;
        self.data = s.data;
        self.train_split = s.train_split;
        self.init = s.init;
        self.epsilon = s.epsilon;
        self.max_iters = s.max_iters;
        self
    }

    fn with_output(mut self, o: OutputFlags) -> Self {
        self.seed = o.seed;
        self.out = o.out;
        self.format = o.format;
        self
    }
}

impl From<FitArgs> for Settings {
    fn from(a: FitArgs) -> Self {
        Settings {
            model: a.model,
            optimizer: a.optimizer,
            ..Settings::default()
        }
        .with_solver(a.solver)
        .with_output(a.output)
    }
}

impl From<ExperimentArgs> for Settings {
    fn from(a: ExperimentArgs) -> Self {
        Settings {
            experiment: a.experiment,
            optimizer: a.optimizer,
            ..Settings::default()
        }
        .with_solver(a.solver)
        .with_output(a.output)
    }
}

impl From<VerifyArgs> for Settings {
    fn from(a: VerifyArgs) -> Self {
        Settings {
            property: (!a.property.is_empty()).then_some(a.property),
            instances: a.instances,
            ..Settings::default()
        }
        .with_output(a.output)
    }
}

impl From<RatesArgs> for Settings {
    fn from(a: RatesArgs) -> Self {
        Settings {
            model: a.model,
            residual: a.residual,
            ..Settings::default()
        }
        .with_output(a.output)
    }
}

/// Parses a selector with the core `FromStr`, reporting failures as usage errors.
pub(crate) fn parse_selector<T>(value: &str) -> CliResult<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(CliError::usage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: Settings = toml::from_str("model = \"exp-decay\"\nseed = 4\nmax-iters = 10\ninit = [1.5]\n").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Settings::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.model.as_deref(), Some("exp-decay"));
        assert_eq!(merged.max_iters, Some(10));
        assert_eq!(merged.init, Some(vec![1.5]));
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("modle = \"x\"").is_err());
    }

    #[test]
    fn cli_parses_every_subcommand() {
        Cli::try_parse_from([
            "vproj",
            "fit",
            "--model",
            "complex-exp",
            "--optimizer",
            "vplr",
            "--seed",
            "7",
        ])
        .unwrap();
        Cli::try_parse_from(["vproj", "fit", "--init", "-1.5,2", "--model", "exp-decay"]).unwrap();
        Cli::try_parse_from(["vproj", "experiment", "exp-ozone", "--format", "csv"]).unwrap();
        Cli::try_parse_from(["vproj", "verify", "--property", "secant", "--property", "projector"]).unwrap();
        Cli::try_parse_from(["vproj", "rates", "--residual", "large"]).unwrap();
        assert!(Cli::try_parse_from(["vproj", "fit", "--replay", "a.json", "--model", "exp-decay"]).is_err());
        assert!(Cli::try_parse_from(["vproj", "fit", "--format", "xml"]).is_err());
    }
}
