//! Output directories, manifests and table printing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use del_core::metrics::Metrics;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a T,
    /// Command-specific details (files written, best snapshot, ...).
    pub details: serde_json::Value,
}

impl<'a, T: Serialize> Manifest<'a, T> {
    pub fn new(command: &'a str, config: &'a T, details: serde_json::Value) -> Self {
        Self {
            tool: "del",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: del_core::trainer::hash_json(config),
            config,
            details,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST), text).with_context(|| format!("writing manifest in {}", dir.display()))
    }
}

/// Creates `dir`. An existing non-empty directory is refused unless `force`
/// is set and the directory holds a manifest from an earlier run, in which
/// case it is cleared first.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!("{} exists and is not a directory", dir.display());
        }
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !force {
                bail!("{} already exists; pass --force to replace it", dir.display());
            }
            if !dir.join(MANIFEST).is_file() {
                bail!(
                    "{} has no {MANIFEST}, so it was not written by del; refusing to replace it",
                    dir.display()
                );
            }
            fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// A dataset argument: a `.jsonl` file, or a directory holding `data.jsonl`.
pub fn dataset_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("data.jsonl")
    } else {
        p.to_path_buf()
    }
}

/// The explicit rule file, or `rules.del` beside the dataset.
pub fn rules_path(explicit: Option<&Path>, data: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => data.parent().unwrap_or_else(|| Path::new(".")).join("rules.del"),
    }
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn metrics_header() -> String {
    format!(
        "{:<14} {:>9} {:>9} {:>9} {:>6} {:>6} {:>9}",
        "", "accuracy", "recall", "recall'", "FN", "FP", "FCR"
    )
}

pub fn metrics_row(label: &str, m: &Metrics) -> String {
    format!(
        "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>9.4}",
        label, m.accuracy, m.recall, m.recall_prime, m.false_neg, m.false_pos, m.false_critical_ratio
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_foreign_directories_even_with_force() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path().join("out");
        prepare_out_dir(&d, false).unwrap();
        fs::write(d.join("keep.txt"), "x").unwrap();
        assert!(prepare_out_dir(&d, false).is_err());
        assert!(prepare_out_dir(&d, true).is_err());
        assert!(d.join("keep.txt").exists());
        fs::write(d.join(MANIFEST), "{}").unwrap();
        prepare_out_dir(&d, true).unwrap();
        assert!(!d.join("keep.txt").exists());
    }

    #[test]
    fn rules_default_beside_dataset() {
        assert_eq!(rules_path(None, Path::new("d/data.jsonl")), PathBuf::from("d/rules.del"));
        assert_eq!(rules_path(Some(Path::new("r.del")), Path::new("d/data.jsonl")), PathBuf::from("r.del"));
    }
}
