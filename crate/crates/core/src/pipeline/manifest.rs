//! Per-dataset description: a directory of frame volumes plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::interpolation::DataKind;
use crate::pipeline::volume::{self, Volume};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub parameter: Vec<f64>,
    pub frame_count: usize,
    pub spatial_dims: Vec<usize>,
    pub kind: DataKind,
    /// Relative to the manifest's directory.
    pub frame_files: Vec<String>,
    /// Total density per frame; smoke only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.frame_files.len() != self.frame_count {
            return Err(Error::InvalidArgument(format!(
                "{} frame files for {} frames",
                self.frame_files.len(),
                self.frame_count
            )));
        }
        match (&self.kind, &self.masses) {
            (DataKind::SmokeDensity, Some(m)) if m.len() == self.frame_count => Ok(()),
            (DataKind::SmokeDensity, _) => Err(Error::InvalidArgument(
                "smoke datasets need one mass per frame".into(),
            )),
            (DataKind::LiquidSdf, _) => Ok(()),
        }
    }
}

/// Writes `frames` as `frame_NNNN.flof` and the manifest into `dir`.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    name: &str,
    parameter: Vec<f64>,
    kind: DataKind,
    frames: &[ScalarField],
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames to write".into()))?;
    fs::create_dir_all(dir)?;
    let mut frame_files = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != first.dims() {
            return Err(Error::DimMismatch {
                left: first.dims().extents().to_vec(),
                right: f.dims().extents().to_vec(),
            });
        }
        let file = format!("frame_{i:04}.flof");
        volume::write(dir.join(&file), &Volume::Scalar(f.clone()))?;
        frame_files.push(file);
    }
    let masses = (kind == DataKind::SmokeDensity).then(|| frames.iter().map(ScalarField::sum).collect());
    let manifest = DatasetManifest {
        name: name.to_string(),
        parameter,
        frame_count: frames.len(),
        spatial_dims: first.dims().extents().to_vec(),
        kind,
        frame_files,
        masses,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads the manifest in `dir` and all its frames.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<ScalarField>)> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    manifest.validate()?;
    let mut frames = Vec::with_capacity(manifest.frame_count);
    for file in &manifest.frame_files {
        let f = volume::read_scalar(dir.join(file))?;
        if f.dims().extents() != manifest.spatial_dims.as_slice() {
            return Err(Error::DimMismatch {
                left: manifest.spatial_dims.clone(),
                right: f.dims().extents().to_vec(),
            });
        }
        frames.push(f);
    }
    Ok((manifest, frames))
}
