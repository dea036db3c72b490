//! Run configuration: every module's settings plus file paths, read from one
//! JSON document and overridable key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::PropagationConfig;
use crate::dataset::{CsvSchema, SyntheticConfig};
use crate::error::{Error, Result};
use crate::optimizer::{GaConfig, ParamSpec};
use crate::pipeline::{derive_seed, PipelineParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. When set, every component seed is derived from it.
    pub seed: Option<u64>,
    pub data: CsvSchema,
    pub synthetic: SyntheticConfig,
    pub pipeline: PipelineParams,
    pub propagation: PropagationConfig,
    pub ga: GaConfig,
    pub search_space: ParamSpec,
    pub paths: Paths,
}

/// Seeds actually used by a run, recorded in emitted metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: Option<u64>,
    pub synthetic: u64,
    pub cube: u64,
    pub mapping: u64,
    pub ga: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `key=value` overrides, where `key` is a dotted path such as
    /// `pipeline.lif.firing_threshold`. Values are parsed as JSON and fall
    /// back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override '{item}' is not key=value")))?;
            set_path(&mut doc, key.trim(), parse_value(raw.trim()))?;
        }
        serde_json::from_value(doc).map_err(|e| Error::InvalidArgument(format!("override rejected: {e}")))
    }

    /// Validates every section and, if a master seed is set, pushes derived
    /// seeds into the components.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        if let Some(seed) = c.seed {
            c.synthetic.seed = seed;
            c.pipeline = c.pipeline.reseeded(seed);
            c.ga.seed = derive_seed(seed, 3);
        }
        c.synthetic.validate()?;
        c.pipeline.validate()?;
        c.propagation.validate()?;
        c.ga.validate()?;
        c.search_space.validate()?;
        Ok(c)
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            master: self.seed,
            synthetic: self.synthetic.seed,
            cube: self.pipeline.cube.seed,
            mapping: self.pipeline.mapping.seed,
            ga: self.ga.seed,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("override '{key}': '{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::InvalidArgument(format!("override '{key}': unknown key '{part}'")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| Error::InvalidArgument(format!("override '{key}': unknown key '{part}'")))?;
    }
    Err(Error::InvalidArgument("empty override key".into()))
}
