use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nrba::NrbaError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| NrbaError::Io(e).context(format!("reading {}", path.display())))?;
    Ok(digest_bytes(&bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest over everything the stage reads.
    pub input_digest: String,
    /// Output file (relative to the output directory) to digest.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub stages: BTreeMap<String, StageRecord>,
    /// Every distinct warning from every recorded stage.
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        let now = timestamp();
        RunManifest {
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: now.clone(),
            finished: now,
            stages: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Load the manifest in `out`, or start a new one.
    pub fn open(out: &Path, config_hash: String) -> CliResult<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config_hash));
        }
        let text = std::fs::read_to_string(&path)?;
        let mut m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| NrbaError::Data(format!("corrupt run manifest {}: {e}", path.display())))?;
        m.config_hash = config_hash;
        m.started = timestamp();
        m.version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    /// Whether `stage` already ran with this input digest and its outputs
    /// are unchanged on disk.
    pub fn is_current(&self, out: &Path, stage: &str, input_digest: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else { return false };
        rec.input_digest == input_digest
            && !rec.outputs.is_empty()
            && rec.outputs.iter().all(|(f, d)| digest_file(&out.join(f)).is_ok_and(|x| &x == d))
    }

    pub fn record(&mut self, stage: &str, rec: StageRecord) {
        self.stages.insert(stage.to_string(), rec);
    }

    pub fn save(&mut self, out: &Path) -> CliResult<()> {
        self.finished = timestamp();
        let mut all: Vec<String> = self.stages.values().flat_map(|r| r.warnings.iter().cloned()).collect();
        all.sort();
        all.dedup();
        self.warnings = all;
        std::fs::create_dir_all(out)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Digest every file below `dir`, keyed by path relative to `out`.
pub fn digest_tree(out: &Path, dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;
    files.sort();
    let mut map = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(out).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        map.insert(rel, digest_file(&f)?);
    }
    Ok(map)
}

fn collect(dir: &Path, files: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(&p, files)?;
        } else {
            files.push(p);
        }
    }
    Ok(())
}

/// Digest of a JSON value describing stage inputs.
pub fn digest_inputs(value: &serde_json::Value) -> String {
    digest_bytes(value.to_string().as_bytes())
}
