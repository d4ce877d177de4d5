//! Run manifests and atomic, hash-stamped output files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use parity_sme::model::ConfigFile;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines the contents of a run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInputs {
    pub config: ConfigFile,
    pub steps: usize,
    pub subcommand: String,
    pub seed: u64,
    pub version: String,
    /// Subcommand-specific parameters.
    pub parameters: Value,
}

impl RunInputs {
    /// SHA-256 of the compact JSON encoding of the inputs.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("inputs serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub inputs: RunInputs,
    pub manifest_hash: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

/// Writes the files of one run into `dir` and finally the manifest.
pub struct OutputSet {
    dir: PathBuf,
    inputs: RunInputs,
    hash: String,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl OutputSet {
    pub fn new(dir: &Path, inputs: RunInputs) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: inputs.hash(),
            inputs,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// CSV with a `# manifest sha256` comment line, a header row and one row
    /// per record. Floats use the shortest round-trip form.
    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> std::io::Result<()> {
        let mut text = format!("# manifest sha256 {}\n{}\n", self.hash, header.join(","));
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                first = false;
                write!(text, "{v:?}").expect("write to string");
            }
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// JSON object with a `manifest_hash` field.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> std::io::Result<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("manifest_hash".into(), Value::String(self.hash.clone()));
        match serde_json::to_value(body)? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self) -> std::io::Result<PathBuf> {
        let manifest = RunManifest {
            inputs: self.inputs,
            manifest_hash: self.hash,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
