//! Flat `key=value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use infofd::tgcib::Hyperparams;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys accepted besides the hyperparameters.
const KEYS: &[&str] = &[
    "train",
    "val",
    "test",
    "checkpoint",
    "features",
    "texts",
    "anchors",
    "probe",
    "input",
    "out",
    "seeds",
    "layer",
    "grouping",
    "repeats",
    "subsample",
    "mi_t",
    "sigma",
    "x_buckets",
    "hidden_sizes",
    "shuffle_labels",
    "rows",
    "dim",
    "n",
    "separation",
    "anisotropy",
    "text_noise",
    "task_seed",
    "with_text",
    "emit_anchors",
];

const HP_KEYS: &[&str] = &[
    "beta",
    "lp",
    "hidden",
    "batch",
    "lr0",
    "decay_power",
    "cgp_mu",
    "cgp_sigma",
    "epochs",
    "seed",
    "conditions",
    "cgp",
    "mmd",
    "detach_mu_r",
    "guidance",
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub hp: Hyperparams,
    /// Non-hyperparameter settings, sorted by key.
    pub settings: BTreeMap<String, String>,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got '{raw}'", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// File settings first, then overrides in order; later values win.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
        let mut pairs = match file {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_kv(&text)?
            }
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        let mut hp = Hyperparams::default();
        let mut settings = BTreeMap::new();
        for (k, v) in pairs {
            if HP_KEYS.contains(&k.as_str()) {
                hp.set(&k, &v).map_err(|e| CliError::Usage(e.to_string()))?;
            } else if KEYS.contains(&k.as_str()) {
                settings.insert(k, v);
            } else {
                return Err(CliError::Usage(format!("unknown config key '{k}'")));
            }
        }
        hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunConfig { hp, settings })
    }

    /// Canonical text of the resolved configuration.
    pub fn canonical(&self) -> String {
        let mut s = self.hp.to_kv();
        for (k, v) in &self.settings {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// A path that must be configured and exist.
    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self
            .path(key)
            .ok_or_else(|| CliError::Usage(format!("missing '{key}' path (set {key}=... or pass --{key})")))?;
        if !p.exists() {
            return Err(CliError::Usage(format!("{key} path {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Comma-separated paths that must all exist.
    pub fn require_paths(&self, key: &str) -> Result<Vec<PathBuf>, CliError> {
        let raw = self
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("missing '{key}' (set {key}=... or pass --{key})")))?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                let p = PathBuf::from(s);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(CliError::Usage(format!("{key} path {} does not exist", p.display())))
                }
            })
            .collect()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| CliError::Usage(format!("bad value '{v}' for {key}"))))
            .transpose()
    }

    pub fn parsed_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad value '{s}' in {key}"))))
                    .collect()
            })
            .transpose()
    }

    /// `seeds` when given, otherwise the single hyperparameter seed.
    pub fn seeds(&self) -> Result<Vec<u64>, CliError> {
        match self.list::<u64>("seeds")? {
            Some(s) if s.is_empty() => Err(CliError::Usage("seeds list is empty".into())),
            Some(s) => Ok(s),
            None => Ok(vec![self.hp.seed]),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out").unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn layer(&self) -> Result<Option<u8>, CliError> {
        self.parsed("layer")
    }
}
