//! Checkpoint, config and label files on disk.

use std::fs;
use std::path::Path;

use waveformer_core::config::parse_kv_text;
use waveformer_core::{ModelConfig, NamedTensorSet};

use crate::error::{Error, Result};

pub fn save_checkpoint(set: &NamedTensorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads and validates a `.wvfm` file.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NamedTensorSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = NamedTensorSet::from_bytes(&bytes)?;
    set.validate()?;
    Ok(set)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// A full config: defaults overridden by the file's keys.
pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    Ok(ModelConfig::from_kv_text(&read_text(path)?)?)
}

/// Applies a config file on top of a checkpoint's own header. Only `K` may
/// differ; every other key must repeat the checkpoint's value.
pub fn apply_geometry_override(base: &ModelConfig, path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let overrides = parse_kv_text(&read_text(path)?)?;
    let probe = base.with_overrides(&overrides)?;
    let fields = base.to_fields().into_iter().zip(probe.to_fields());
    for (key, (was, now)) in waveformer_core::config::CONFIG_KEYS.iter().zip(fields) {
        if *key != "K" && was != now {
            return Err(Error::format(
                path,
                format!("{key} = {now} conflicts with the checkpoint ({key} = {was}); only K may be overridden"),
            ));
        }
    }
    Ok(probe)
}

/// Class names, one per line; the line number (from 0) is the class index.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    Ok(read_text(path)?.lines().map(|l| l.trim().to_string()).collect())
}

/// Resolves `3,7` or `dog,Bark` into class indices below `num_classes`.
pub fn parse_classes(list: &str, labels: Option<&[String]>, num_classes: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let idx = match item.parse::<usize>() {
            Ok(i) => i,
            Err(_) => labels
                .and_then(|l| l.iter().position(|name| name == item))
                .ok_or_else(|| Error::Usage(format!("unknown class `{item}`")))?,
        };
        if idx >= num_classes {
            return Err(Error::Usage(format!("class {idx} out of range, model has {num_classes} classes")));
        }
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("no classes selected".into()));
    }
    Ok(out)
}
