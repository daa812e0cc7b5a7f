//! In-memory cases and the on-disk dataset manifest.
//!
//! A case bundles the image, dose, ground-truth mask, and text prompt on one
//! grid. On disk a dataset is a JSON manifest — an array of per-case file
//! entries — whose paths are resolved relative to the manifest's own
//! directory, so a dataset folder can be moved or copied wholesale.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{Mask, Volume};
use crate::io;
use crate::textprompt::TextPromptRecord;
use crate::{Error, Result};

/// One training or evaluation case; all volumes share a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub image: Volume,
    pub dose: Volume,
    pub gt: Mask,
    pub text: TextPromptRecord,
}

impl Case {
    /// Error unless image, dose, and ground truth share one grid.
    pub fn validate(&self) -> Result<()> {
        self.image.grid.check_same(&self.dose.grid)?;
        self.image.grid.check_same(&self.gt.grid)
    }
}

/// File paths of one stored case, relative to the manifest directory
/// (absolute paths are honored as given).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFiles {
    pub image: String,
    pub dose: String,
    pub gt: String,
    pub text: String,
}

/// Resolve a manifest entry path against the manifest's directory.
fn resolve(base_dir: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Write a manifest (a JSON array of [`CaseFiles`]).
pub fn save_manifest(path: impl AsRef<Path>, entries: &[CaseFiles]) -> Result<()> {
    io::write_json(path, &entries)
}

/// Read a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseFiles>> {
    io::read_json(path)
}

/// Load one case given the directory its manifest lives in.
pub fn load_case(base_dir: &Path, files: &CaseFiles) -> Result<Case> {
    let case = Case {
        image: io::read_volume(resolve(base_dir, &files.image))?,
        dose: io::read_volume(resolve(base_dir, &files.dose))?,
        gt: io::read_mask(resolve(base_dir, &files.gt))?,
        text: io::read_json(resolve(base_dir, &files.text))?,
    };
    case.validate()?;
    Ok(case)
}

/// Load every case listed in a manifest file.
pub fn load_cases(manifest_path: impl AsRef<Path>) -> Result<Vec<Case>> {
    let manifest_path = manifest_path.as_ref();
    let entries = load_manifest(manifest_path)?;
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    entries.iter().map(|files| load_case(base_dir, files)).collect()
}

/// Write a case's four files into `dir` under `<stem>_image.mv1`,
/// `<stem>_dose.mv1`, `<stem>_gt.mv1`, and `<stem>_text.json`, returning the
/// manifest entry (paths relative to `dir`).
pub fn write_case(dir: &Path, stem: &str, case: &Case) -> Result<CaseFiles> {
    case.validate()?;
    if stem.is_empty() || stem.contains(std::path::is_separator) {
        return Err(Error::InvalidArgument {
            name: "stem",
            reason: format!("must be a bare file stem, got {stem:?}"),
        });
    }
    let files = CaseFiles {
        image: format!("{stem}_image.mv1"),
        dose: format!("{stem}_dose.mv1"),
        gt: format!("{stem}_gt.mv1"),
        text: format!("{stem}_text.json"),
    };
    io::write_volume(dir.join(&files.image), &case.image)?;
    io::write_volume(dir.join(&files.dose), &case.dose)?;
    io::write_mask(dir.join(&files.gt), &case.gt)?;
    io::write_json(dir.join(&files.text), &case.text)?;
    Ok(files)
}
