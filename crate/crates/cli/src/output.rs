//! Artifact directory: reports, data dumps and the timestamped sidecar log.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use myosim::io::Provenance;
use myosim::report::Report;

use crate::{CliError, Format};

pub const LOG_FILE: &str = "run.log";

pub struct Artifacts {
    dir: PathBuf,
    format: Format,
    prov: Provenance,
    experiment: Option<String>,
    log: File,
}

impl Artifacts {
    pub fn open(
        dir: &Path,
        format: Format,
        config_hash: String,
        seed: u64,
        experiment: Option<String>,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOG_FILE))
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            prov: Provenance { config_hash, seed },
            experiment,
            log,
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn seed(&self) -> u64 {
        self.prov.seed
    }

    pub fn format(&self) -> Format {
        self.format
    }

    /// Appends a line with a Unix timestamp to the sidecar log.
    pub fn log(&mut self, message: &str) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        log::info!("{message}");
        let _ = writeln!(self.log, "{}.{:03} {message}", now.as_secs(), now.subsec_millis());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `stem.csv` or `stem.json` depending on `--format`.
    pub fn data_path(&self, stem: &str) -> PathBuf {
        self.path(&format!("{stem}.{}", self.format.extension()))
    }

    pub fn new_report(&self, name: &str) -> Report {
        let mut r = Report::new(name, self.prov.config_hash.clone(), self.prov.seed);
        if let Some(e) = &self.experiment {
            r.metrics.insert("experiment".into(), json!(e));
        }
        r
    }

    pub fn write_report(&mut self, report: &Report, file: &str) -> Result<(), CliError> {
        report.write(&self.path(file))?;
        self.log(&format!("wrote {file}"));
        Ok(())
    }

    /// Writes `data` wrapped with the config hash and seed as pretty JSON.
    pub fn write_json(&mut self, path: &Path, data: impl Serialize) -> Result<(), CliError> {
        let doc = json!({
            "config_hash": self.prov.config_hash,
            "seed": self.prov.seed,
            "data": serde_json::to_value(data).map_err(myosim::Error::from)?,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(myosim::Error::from)?;
        text.push('\n');
        fs::write(path, text).map_err(myosim::Error::from)?;
        self.log(&format!("wrote {}", path.display()));
        Ok(())
    }

    pub fn note_written(&mut self, path: &Path) {
        self.log(&format!("wrote {}", path.display()));
    }
}
