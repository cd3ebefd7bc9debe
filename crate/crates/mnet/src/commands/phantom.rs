use mnet_core::data::{generate_phantom, PhantomSpec};

use super::ensure_dir;
use crate::config::RunConfig;
use crate::dataset::{Manifest, ManifestCase};
use crate::error::{Error, Result};
use crate::volume_io::{write_image, write_labels};

/// Writes `dataset.cases` phantoms plus a manifest into `output_dir`.
pub fn cmd_phantom(config: &RunConfig) -> Result<Manifest> {
    let n = config.dataset.cases;
    if n == 0 {
        return Err(Error::Config("dataset.cases must be >= 1".into()));
    }
    config.phantom.validate()?;
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let spec = PhantomSpec { seed: config.phantom.seed.wrapping_add(i as u64), ..config.phantom.clone() };
        let (image, labels) = generate_phantom(&spec)?;
        let id = format!("case_{i:03}");
        let entry = ManifestCase { image: format!("{id}_image"), label: format!("{id}_label"), id };
        write_image(dir, &entry.image, &image)?;
        write_labels(dir, &entry.label, &labels)?;
        cases.push(entry);
    }
    let manifest = Manifest { format_version: 1, phantom: Some(config.phantom.clone()), cases };
    manifest.write(dir)?;
    config.write_resolved(dir)?;
    Ok(manifest)
}
