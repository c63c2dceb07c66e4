//! Flat `key = value` run configuration with command-line overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use fxclass::effects::EffectKind;
use fxclass::pipeline::{InputGeometry, TrainConfig};
use sha2::{Digest, Sha256};

use crate::toy::ToySpec;
use crate::CliError;

pub const DEFAULTS: [(&str, &str); 11] = [
    ("batch_size", "50"),
    ("effects", "all"),
    ("lr", "0.001"),
    ("max_epochs", "200"),
    ("mel_pool", "1"),
    ("patience", "10"),
    ("per_class_test", "5"),
    ("per_class_train", "20"),
    ("per_class_valid", "5"),
    ("seed", "0"),
    ("time_pool", "1"),
];

/// Reduced input used by `experiment --toy` unless the pools are set explicitly.
pub const TOY_GEOMETRY: InputGeometry = InputGeometry {
    mel_pool: 2,
    time_pool: 8,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
    explicit: Vec<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            explicit: Vec::new(),
        }
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Settings::parse(&text)
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !self.values.contains_key(key) {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        if !self.explicit.iter().any(|k| k == key) {
            self.explicit.push(key.to_string());
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.iter().any(|k| k == key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = &self.values[key];
        raw.parse()
            .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {raw:?}")))
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Sorted `key=value` lines; the run-log hash is taken over this text.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            lr: self.get("lr")?,
            batch_size: self.get("batch_size")?,
            patience: self.get("patience")?,
            max_epochs: self.get("max_epochs")?,
            seed: self.get("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<InputGeometry, CliError> {
        let g = InputGeometry {
            mel_pool: self.get("mel_pool")?,
            time_pool: self.get("time_pool")?,
        };
        if g.mel_pool == 0 || g.time_pool == 0 || g.dims().0 < 8 || g.dims().1 < 5 {
            return Err(CliError::Usage(format!(
                "pools {}x{} leave too small an input",
                g.mel_pool, g.time_pool
            )));
        }
        Ok(g)
    }

    /// Geometry for toy runs: [`TOY_GEOMETRY`] unless a pool was configured.
    pub fn toy_geometry(&self) -> Result<InputGeometry, CliError> {
        if self.is_explicit("mel_pool") || self.is_explicit("time_pool") {
            self.geometry()
        } else {
            Ok(TOY_GEOMETRY)
        }
    }

    pub fn toy_spec(&self) -> Result<ToySpec, CliError> {
        Ok(ToySpec {
            per_class_train: self.get("per_class_train")?,
            per_class_valid: self.get("per_class_valid")?,
            per_class_test: self.get("per_class_test")?,
            seed: self.get("seed")?,
        })
    }

    pub fn effects(&self) -> Result<Vec<EffectKind>, CliError> {
        parse_effects(&self.values["effects"])
    }
}

/// Comma-separated effect ids, or `all` for the seven effects.
pub fn parse_effects(list: &str) -> Result<Vec<EffectKind>, CliError> {
    if list.trim() == "all" {
        return Ok(EffectKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: EffectKind = item.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("effect list is empty".into()));
    }
    Ok(out)
}
