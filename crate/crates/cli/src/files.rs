//! On-disk layouts.
//!
//! ```text
//! <synth out>/splits.csv                      episode,split
//! <synth out>/episodes/<id>/raw.csv           timestamp_s,load_kg
//! <synth out>/episodes/<id>/labels.csv        start_s,end_s,label
//! <encode out>/<split>/manifest.csv           id,label,t_end
//! <encode out>/<split>/<id>_line.png
//! <encode out>/<split>/<id>_texture.png
//! ```
//!
//! Every output directory also receives the resolved `config.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use bedexit::imaging::png::decode_image;
use bedexit::imaging::ImagePair;
use bedexit::model::train::LabeledSet;
use bedexit::pipeline::model_input;
use bedexit::signal::io::{read_labels, read_raw};
use bedexit::signal::{Label, LabelInterval, RawStream};
use bedexit::synth::Split;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Buffers whatever `f` writes, then stores it atomically.
pub fn write_with<E>(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<(), CliError>
where
    E: ToString,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(path, e))?;
    write_atomic(path, &buf)
}

pub fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn episode_id(episode: usize) -> String {
    format!("{episode:04}")
}

pub fn episode_dir(data: &Path, episode: usize) -> PathBuf {
    data.join("episodes").join(episode_id(episode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub episode: usize,
    pub split: Split,
}

pub fn read_splits(data: &Path) -> Result<Vec<SplitRow>, CliError> {
    let path = data.join("splits.csv");
    let bytes = read_file(&path)?;
    let mut rdr = csv::Reader::from_reader(&bytes[..]);
    rdr.deserialize().collect::<Result<Vec<SplitRow>, _>>().map_err(|e| CliError::io(&path, e))
}

pub fn read_raw_file(path: &Path, sample_rate_hz: f64) -> Result<RawStream, CliError> {
    let bytes = read_file(path)?;
    read_raw(&bytes[..], sample_rate_hz).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_episode(data: &Path, episode: usize, sample_rate_hz: f64) -> Result<(RawStream, Vec<LabelInterval>), CliError> {
    let dir = episode_dir(data, episode);
    let raw = read_raw_file(&dir.join("raw.csv"), sample_rate_hz)?;
    let labels_path = dir.join("labels.csv");
    let labels = read_labels(&read_file(&labels_path)?[..])
        .map_err(|e| CliError::Data(format!("{}: {e}", labels_path.display())))?;
    Ok((raw, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub label: Label,
    pub t_end: f64,
}

pub fn manifest_path(encoded: &Path, split: Split) -> PathBuf {
    encoded.join(split.as_str()).join("manifest.csv")
}

pub fn read_manifest(encoded: &Path, split: Split) -> Result<Vec<ManifestRow>, CliError> {
    let path = manifest_path(encoded, split);
    let bytes = read_file(&path)?;
    let mut rdr = csv::Reader::from_reader(&bytes[..]);
    rdr.deserialize().collect::<Result<Vec<ManifestRow>, _>>().map_err(|e| CliError::io(&path, e))
}

pub fn image_paths(encoded: &Path, split: Split, id: &str) -> (PathBuf, PathBuf) {
    let dir = encoded.join(split.as_str());
    (dir.join(format!("{id}_line.png")), dir.join(format!("{id}_texture.png")))
}

/// Reads a split's image pairs at the model input size.
pub fn load_split(encoded: &Path, split: Split, input_size: usize) -> Result<(Vec<ManifestRow>, LabeledSet), CliError> {
    let rows = read_manifest(encoded, split)?;
    let mut set = LabeledSet::default();
    for row in &rows {
        let target = row
            .label
            .target()
            .ok_or_else(|| CliError::Data(format!("{}: window {} has label {}", split, row.id, row.label)))?;
        let (line, texture) = image_paths(encoded, split, &row.id);
        let decode = |p: &Path| -> Result<_, CliError> {
            decode_image(&read_file(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        };
        let pair = ImagePair { line: decode(&line)?, texture: decode(&texture)? };
        set.push(model_input(&pair, input_size), target);
    }
    Ok((rows, set))
}
