use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ensemble::VotingEnsemble;
use crate::error::{Error, Result};
use crate::model::{PortRegistry, CLASS_FEATURE_NAMES, REG_FEATURE_NAMES};
use crate::neural::{Network, Scaler};

pub const BUNDLE_VERSION: &str = "v1";
pub const VERSION_FILE: &str = "VERSION";
pub const BUNDLE_FILE: &str = "bundle.json";

/// Everything the prediction chain needs, sharing one port registry and one
/// feature ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: String,
    pub class_features: Vec<String>,
    pub reg_features: Vec<String>,
    pub registry: PortRegistry,
    pub ensemble: VotingEnsemble,
    pub scaler: Scaler,
    pub network: Network,
}

fn field<T: DeserializeOwned>(map: &mut Map<String, Value>, name: &'static str) -> Result<T> {
    let value = map.remove(name).ok_or(Error::CorruptBundle {
        field: name.to_string(),
        reason: "missing".into(),
    })?;
    serde_json::from_value(value).map_err(|e| Error::CorruptBundle {
        field: name.to_string(),
        reason: e.to_string(),
    })
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl ModelBundle {
    pub fn new(registry: PortRegistry, ensemble: VotingEnsemble, scaler: Scaler, network: Network) -> Self {
        ModelBundle {
            version: BUNDLE_VERSION.to_string(),
            class_features: names(&CLASS_FEATURE_NAMES),
            reg_features: names(&REG_FEATURE_NAMES),
            registry,
            ensemble,
            scaler,
            network,
        }
    }

    /// Writes `VERSION` and `bundle.json` into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let version = dir.join(VERSION_FILE);
        fs::write(&version, format!("{}\n", self.version)).map_err(|e| Error::io(&version, e))?;
        let path = dir.join(BUNDLE_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads a bundle directory, checking the version marker, every field and
    /// the feature ordering. Nothing is returned unless all of it is valid.
    pub fn load(dir: &Path) -> Result<Self> {
        let version_path = dir.join(VERSION_FILE);
        let marker = fs::read_to_string(&version_path).map_err(|e| Error::io(&version_path, e))?;
        let marker = marker.trim();
        if marker != BUNDLE_VERSION {
            return Err(Error::VersionMismatch {
                expected: BUNDLE_VERSION.to_string(),
                found: marker.to_string(),
            });
        }
        let path = dir.join(BUNDLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::CorruptBundle {
            field: BUNDLE_FILE.to_string(),
            reason: e.to_string(),
        })?;
        let Value::Object(mut map) = value else {
            return Err(Error::CorruptBundle {
                field: BUNDLE_FILE.to_string(),
                reason: "not a JSON object".into(),
            });
        };
        let version: String = field(&mut map, "version")?;
        if version != BUNDLE_VERSION {
            return Err(Error::VersionMismatch {
                expected: BUNDLE_VERSION.to_string(),
                found: version,
            });
        }
        let class_features: Vec<String> = field(&mut map, "class_features")?;
        if class_features != names(&CLASS_FEATURE_NAMES) {
            return Err(Error::CorruptBundle {
                field: "class_features".into(),
                reason: format!("expected {CLASS_FEATURE_NAMES:?}"),
            });
        }
        let reg_features: Vec<String> = field(&mut map, "reg_features")?;
        if reg_features != names(&REG_FEATURE_NAMES) {
            return Err(Error::CorruptBundle {
                field: "reg_features".into(),
                reason: format!("expected {REG_FEATURE_NAMES:?}"),
            });
        }
        let bundle = ModelBundle {
            version,
            class_features,
            reg_features,
            registry: field(&mut map, "registry")?,
            ensemble: field(&mut map, "ensemble")?,
            scaler: field(&mut map, "scaler")?,
            network: field(&mut map, "network")?,
        };
        if bundle.scaler.min.len() != REG_FEATURE_NAMES.len() {
            return Err(Error::CorruptBundle {
                field: "scaler".into(),
                reason: format!("{} features, expected {}", bundle.scaler.min.len(), REG_FEATURE_NAMES.len()),
            });
        }
        if bundle.network.layers.is_empty() || bundle.network.n_inputs() != REG_FEATURE_NAMES.len() {
            return Err(Error::CorruptBundle {
                field: "network".into(),
                reason: "input layer does not match the regression features".into(),
            });
        }
        Ok(bundle)
    }
}
