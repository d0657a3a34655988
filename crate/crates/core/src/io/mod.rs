//! Volume, tensor and landmark persistence.

mod ftv;
mod landmarks;
mod nifti;

use std::io::{BufWriter, Write};
use std::path::Path;

pub use ftv::{decode_ftv, encode_ftv, read_feature_tensor, write_feature_tensor, FeatureTensor};
pub use landmarks::{parse_landmarks, read_landmarks};
pub use nifti::{read_labels, read_volume, write_labels, write_volume};

use crate::error::{Error, Result};

/// Write through a temporary sibling file and rename it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn atomic_write(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<&mut std::fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
