//! Optional key=value config file. Flags always win over file entries.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};

/// Keys a config file may set; anything else is rejected up front.
const KNOWN_KEYS: [&str; 16] = [
    "window-s",
    "step-s",
    "interval-s",
    "burst-gap-s",
    "top-n-flows",
    "seed",
    "repeats",
    "train-fraction",
    "split",
    "n-trees",
    "max-depth",
    "learning-rate",
    "min-child-weight",
    "l2-reg",
    "top-k",
    "stop-s",
];

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<FileConfig> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("config line {}: expected key = value", i + 1))?;
                let key = key.trim().to_string();
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    bail!("config line {}: unknown key `{key}`", i + 1);
                }
                values.insert(key, value.trim().to_string());
            }
        }
        Ok(FileConfig { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")),
            None => Ok(default),
        }
    }
}
