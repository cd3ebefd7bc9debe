//! A dataset directory: `manifest.json` plus one image/label pair per case.

use std::fs;
use std::path::Path;

use mnet_core::data::PhantomSpec;
use mnet_core::training::Case;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::{read_image, read_labels};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCase {
    pub id: String,
    /// Volume pair names relative to the dataset directory.
    pub image: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    /// Spec of case 0; case `i` uses seed `phantom.seed + i`.
    pub phantom: Option<PhantomSpec>,
    pub cases: Vec<ManifestCase>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(Error::io(&path))
    }
}

/// A loaded case together with its manifest id.
#[derive(Debug, Clone)]
pub struct NamedCase {
    pub id: String,
    pub case: Case,
}

pub fn load_cases(dir: &Path) -> Result<Vec<NamedCase>> {
    let manifest = Manifest::load(dir)?;
    manifest
        .cases
        .iter()
        .map(|c| {
            let image = read_image(dir, &c.image)?;
            let labels = read_labels(dir, &c.label)?;
            if image.extents() != labels.shape {
                return Err(Error::format(
                    dir.join(&c.label),
                    format!("label shape {:?} differs from image {:?}", labels.shape, image.extents()),
                ));
            }
            Ok(NamedCase { id: c.id.clone(), case: Case { image, labels } })
        })
        .collect()
}
