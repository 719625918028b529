//! Run manifests and CSV emission.
//!
//! Every run that writes files also writes a JSON manifest recording the
//! tool version, command, parameters, seed, config digest, output list, and
//! wall time. The manifest hash covers only the run's deterministic identity
//! (everything except outputs and wall time), is embedded as a comment in
//! every CSV produced by the run, and therefore leaves reruns of the same
//! command byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Spectral-convention statement embedded in every CSV header.
pub const CONVENTION: &str =
    "symmetrized double-sided spectra, Fourier kernel e^{+i omega t}, vacuum = 1/2 per quadrature";

/// Record of one CLI run, serialized to `<prefix>.manifest.json`.
#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_digest: Option<&'a str>,
    seed: Option<u64>,
    parameters: &'a serde_json::Value,
    manifest_hash: &'a str,
    outputs: &'a [String],
    wall_time_s: f64,
}

/// Accumulates a run's identity and output list; see the module doc.
pub struct Manifest {
    command: &'static str,
    config_digest: Option<String>,
    seed: Option<u64>,
    parameters: serde_json::Value,
    hash: String,
    outputs: Vec<String>,
    started: Instant,
}

impl Manifest {
    pub fn new<P: Serialize>(
        command: &'static str,
        config_digest: Option<String>,
        seed: Option<u64>,
        parameters: &P,
    ) -> Result<Self, CliError> {
        let parameters = serde_json::to_value(parameters)
            .map_err(|e| CliError::Io(format!("cannot serialize parameters: {e}")))?;
        // Identity fields only: outputs and wall time stay out of the hash so
        // the hash is known before any CSV is written.
        #[derive(Serialize)]
        struct Identity<'a> {
            tool_version: &'a str,
            command: &'a str,
            config_digest: &'a Option<String>,
            seed: &'a Option<u64>,
            parameters: &'a serde_json::Value,
        }
        let identity = serde_json::to_string(&Identity {
            tool_version: TOOL_VERSION,
            command,
            config_digest: &config_digest,
            seed: &seed,
            parameters: &parameters,
        })
        .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        let hash = format!("{:x}", Sha256::digest(identity.as_bytes()));
        Ok(Self {
            command,
            config_digest,
            seed,
            parameters,
            hash,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn config_digest(&self) -> Option<&str> {
        self.config_digest.as_deref()
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<prefix>.manifest.json` next to the outputs.
    pub fn write(self, prefix: &Path) -> Result<PathBuf, CliError> {
        let path = prefix.with_extension("manifest.json");
        let manifest = RunManifest {
            tool_version: TOOL_VERSION,
            command: self.command,
            config_digest: self.config_digest.as_deref(),
            seed: self.seed,
            parameters: &self.parameters,
            manifest_hash: &self.hash,
            outputs: &self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}

/// One CSV under construction: '#' comment header, column line, data rows.
pub struct CsvWriter {
    w: BufWriter<File>,
    path: PathBuf,
}

impl CsvWriter {
    /// Opens the file and writes the mandatory header comments: tool
    /// version, manifest hash, config digest, spectral convention, units.
    pub fn create(
        path: &Path,
        manifest: &Manifest,
        units: &str,
        extra: &[String],
        columns: &str,
    ) -> Result<Self, CliError> {
        let file = File::create(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# tool: fbosc {TOOL_VERSION}")?;
        writeln!(w, "# manifest: {}", manifest.hash())?;
        writeln!(w, "# config: {}", manifest.config_digest().unwrap_or("none"))?;
        writeln!(w, "# convention: {CONVENTION}")?;
        writeln!(w, "# units: {units}")?;
        for line in extra {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{columns}")?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn row(&mut self, fields: &[f64]) -> Result<(), CliError> {
        let mut line = String::new();
        for (i, x) in fields.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_float(*x));
        }
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    /// Flushes and registers the file in the manifest's output list.
    pub fn finish(mut self, manifest: &mut Manifest) -> Result<(), CliError> {
        self.w
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))?;
        manifest.record_output(&self.path);
        Ok(())
    }
}

/// Shortest exact decimal form (round-trips to the same f64); `nan` marks
/// not-applicable cells such as an absent general bound.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}
