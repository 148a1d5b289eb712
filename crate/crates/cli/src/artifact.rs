//! Run artifacts, trace hashing and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vproj_core::bench::{write_trace_csv, ExperimentDescriptor, MethodRun, Provenance};
use vproj_core::optim::{CorrectionSummary, Termination, TraceRecord};

use crate::error::{CliError, CliResult};

/// Bumped whenever a field of an emitted document changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to audit and replay one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub tool_version: String,
    /// Complete effective configuration, defaults included, restricted to one method.
    pub config: ExperimentDescriptor,
    pub model: String,
    pub a0: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub objective: f64,
    pub a_final: Vec<f64>,
    pub c_final: Vec<f64>,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub correction: Option<CorrectionSummary>,
    /// Trace CSV, relative to the directory holding the artifact.
    pub trace_path: String,
    /// SHA-256 of the trace without its wall-clock column.
    pub trace_hash: String,
    pub dataset_provenance: Provenance,
}

impl RunArtifact {
    pub fn new(
        config: ExperimentDescriptor,
        model: String,
        a0: Vec<f64>,
        provenance: Provenance,
        run: &MethodRun,
        trace_path: String,
    ) -> Self {
        RunArtifact {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            model,
            a0,
            termination: run.termination,
            iterations: run.iterations,
            objective: run.objective,
            a_final: run.a_final.clone(),
            c_final: run.c_final.clone(),
            train_mse: run.train_mse,
            test_mse: run.test_mse,
            correction: run.correction,
            trace_path,
            trace_hash: trace_hash(&run.trace),
            dataset_provenance: provenance,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let artifact: RunArtifact =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }
}

/// Hashes every trace column except elapsed time, bit for bit.
pub fn trace_hash(trace: &[TraceRecord]) -> String {
    let mut h = Sha256::new();
    for r in trace {
        h.update((r.iteration as u64).to_le_bytes());
        for v in [r.objective, r.gradient_norm, r.step_norm, r.damping] {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Writes through a temporary file in the same directory, then renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    write(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(CliError::data)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn write_trace_atomic(path: &Path, trace: &[TraceRecord]) -> CliResult<()> {
    write_atomic(path, |w| write_trace_csv(w, trace).map_err(CliError::data))
}

/// `run.json` becomes `run.trace.csv` next to it.
pub fn trace_path_for(artifact: &Path) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    artifact.with_file_name(format!("{stem}.trace.csv"))
}
