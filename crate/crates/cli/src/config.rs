//! Config files and flag overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use del_core::trainer::{TrainConfig, ACC_THRESHOLD_GENERAL, ACC_THRESHOLD_SPECIAL};

use crate::{PresetArg, TrainOpts};

/// Reads a TOML (`.toml`) or JSON (anything else) config file.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    if !value.is_object() {
        bail!("{}: config must be a table", path.display());
    }
    Ok(value)
}

/// Recursively overlays `patch` onto `base`; tables merge, everything else replaces.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// `base` with the `section` table of `file` (if any) laid over it.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, file: Option<&Value>, section: &str) -> Result<T> {
    let Some(patch) = file.and_then(|f| f.get(section)) else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, patch);
    serde_json::from_value(v).with_context(|| format!("invalid [{section}] config"))
}

/// Training config from defaults (or the desk schedule), the config file, then flags.
pub fn train_config(opts: &TrainOpts) -> Result<TrainConfig> {
    let file = opts.config.as_deref().map(read_config_file).transpose()?;
    let base = if opts.desk_scale {
        TrainConfig::desk()
    } else {
        TrainConfig::default()
    };
    let mut cfg = overlay(&base, file.as_ref(), "train")?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(p) = opts.preset {
        cfg.acc_threshold = match p {
            PresetArg::Gen => ACC_THRESHOLD_GENERAL,
            PresetArg::Spe => ACC_THRESHOLD_SPECIAL,
        };
    }
    if opts.no_assess {
        cfg.use_assess = false;
    }
    if opts.no_critical_loss {
        cfg = cfg.without_critical_loss();
    }
    cfg.validate()?;
    Ok(cfg)
}
