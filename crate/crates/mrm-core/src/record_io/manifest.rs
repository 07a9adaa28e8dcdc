//! JSON-lines manifest loading: one record per line with an image path
//! (relative to the manifest) and the paired report text.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::record_io::image::load_png;
use crate::record_io::Record;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    image: String,
    report: String,
}

/// Load every record named by the manifest, in file order. Any missing or
/// malformed entry fails with its 1-based line number.
pub fn load_manifest(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestLine = serde_json::from_str(line)
            .map_err(|e| Error::Record { line: lineno, message: format!("malformed entry: {e}") })?;
        let img_path = base.join(&entry.image);
        let image = load_png(&img_path).map_err(|e| Error::Record {
            line: lineno,
            message: format!("image {}: {e}", entry.image),
        })?;
        records.push(Record { id: entry.image, image, report: entry.report });
    }
    Ok(records)
}
