//! Run configuration: key=value files with flag overrides, and the run
//! manifest (config snapshot, version, timestamps, content hash).
//!
//! Every run writes into `<out>/<hash>/` where the hash covers the resolved
//! configuration, so parameter sweeps never overwrite each other. Result
//! files are deterministic for a fixed config and seed; only the manifest
//! carries timestamps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use sos_core::error::{Error, Result};

/// The resolved configuration: a sorted key=value map.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                )));
            };
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(RunConfig { values })
    }

    /// Flags win over file values.
    pub fn set_override(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::validation(format!("missing required parameter `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::validation(format!("cannot parse `{key}` value `{raw}`")))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::validation(format!("cannot parse `{key}` value `{raw}`"))),
        }
    }

    /// Canonical snapshot: sorted `key=value` lines.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.snapshot().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..12].to_string()
    }
}

/// Comma-separated integer list ("8,16,32").
pub fn parse_i64_list(raw: &str) -> Result<Vec<i64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad integer `{t}` in list `{raw}`")))
        })
        .collect()
}

/// Window syntax "lo:hi".
pub fn parse_window(raw: &str) -> Result<sos_core::exact::Window> {
    let (lo, hi) = raw
        .split_once(':')
        .ok_or_else(|| Error::validation(format!("window `{raw}` must be lo:hi")))?;
    let lo = lo.parse().map_err(|_| Error::validation(format!("bad window low `{lo}`")))?;
    let hi = hi.parse().map_err(|_| Error::validation(format!("bad window high `{hi}`")))?;
    sos_core::exact::Window::new(lo, hi)
}

pub fn parse_exponent(raw: &str) -> Result<sos_core::model::Exponent> {
    if raw == "inf" || raw == "infinity" {
        return sos_core::model::Exponent::new(f64::INFINITY);
    }
    let p: f64 =
        raw.parse().map_err(|_| Error::validation(format!("bad exponent `{raw}`")))?;
    sos_core::model::Exponent::new(p)
}

/// A run directory keyed by the config hash, with an overwrite guard.
pub struct RunDir {
    pub dir: PathBuf,
    pub hash: String,
    started: u64,
    config: RunConfig,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunDir {
    pub fn create(out_root: &Path, config: &RunConfig) -> Result<Self> {
        let hash = config.content_hash();
        let dir = out_root.join(&hash);
        fs::create_dir_all(&dir)?;
        Ok(RunDir { dir, hash, started: unix_now(), config: config.clone() })
    }

    /// Writes a result file, refusing to overwrite existing outputs.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if path.exists() {
            return Err(Error::validation(format!(
                "refusing to overwrite existing output {}",
                path.display()
            )));
        }
        fs::write(&path, contents)?;
        Ok(path)
    }

    /// Writes the manifest; reruns of the same config append a new entry.
    pub fn finish(&self, seed: Option<u64>) -> Result<PathBuf> {
        let manifest = serde_json::json!({
            "hash": self.hash,
            "version": env!("CARGO_PKG_VERSION"),
            "started": self.started,
            "finished": unix_now(),
            "seed": seed,
            "config": self.config.snapshot(),
        });
        let path = self.dir.join("manifest.json");
        let mut body = String::new();
        if path.exists() {
            body = fs::read_to_string(&path)?;
        }
        body.push_str(&serde_json::to_string(&manifest).unwrap());
        body.push('\n');
        fs::write(&path, body)?;
        Ok(path)
    }
}
