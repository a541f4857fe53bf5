//! Parameter-space description files (`space.json`).
//!
//! File names are resolved relative to the directory holding the description.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deformation::Deformation;
use crate::error::Result;
use crate::interpolation::{DataKind, ParameterSpace, Sample};
use crate::pipeline::volume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub name: String,
    pub r: Vec<f64>,
    /// Space-time volume that is interpolated.
    pub data: String,
    /// SDF the deformations were computed on, when it differs from `data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdf: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationEntry {
    pub from: usize,
    pub to: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescription {
    pub name: String,
    pub kind: DataKind,
    #[serde(default)]
    pub frames_repeated: usize,
    pub samples: Vec<SampleEntry>,
    pub simplices: Vec<Vec<usize>>,
    pub deformations: Vec<DeformationEntry>,
}

impl SpaceDescription {
    pub fn read(path: impl AsRef<Path>) -> Result<SpaceDescription> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads every referenced volume.
    pub fn load(&self, base: &Path) -> Result<ParameterSpace> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    name: s.name.clone(),
                    r: s.r.clone(),
                    data: volume::read_scalar(base.join(&s.data))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let deformations = self
            .deformations
            .iter()
            .map(|d| {
                let field = volume::read_deformation(base.join(&d.file))?;
                Ok((d.from, d.to, Deformation::new(field)))
            })
            .collect::<Result<Vec<_>>>()?;
        ParameterSpace::new(
            self.name.clone(),
            self.kind,
            self.frames_repeated,
            samples,
            self.simplices.clone(),
            deformations,
        )
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_space(path: impl AsRef<Path>) -> Result<ParameterSpace> {
    let path = path.as_ref();
    SpaceDescription::read(path)?.load(&base_dir(path))
}
