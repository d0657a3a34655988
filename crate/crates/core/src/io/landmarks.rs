//! Headerless landmark CSV: one `x,y,z` voxel coordinate per line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::LandmarkSet;

/// Parse one landmark file into `(z, y, x)` points.
pub fn parse_landmarks(text: &str, path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::LandmarkParse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 comma-separated values, found {}", fields.len())));
        }
        let mut xyz = [0.0f64; 3];
        for (v, tok) in xyz.iter_mut().zip(&fields) {
            *v = tok
                .parse::<f64>()
                .map_err(|_| err(format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite coordinate {tok:?}")));
            }
        }
        points.push([xyz[2], xyz[1], xyz[0]]);
    }
    if points.is_empty() {
        return Err(Error::LandmarkParse {
            path: path.to_path_buf(),
            line: 0,
            reason: "file holds no landmarks".into(),
        });
    }
    Ok(points)
}

pub fn read_landmarks(
    path_fixed: impl AsRef<Path>,
    path_moving: impl AsRef<Path>,
    spacing_fixed: [f64; 3],
    spacing_moving: [f64; 3],
) -> Result<LandmarkSet> {
    let load = |p: &Path| -> Result<Vec<[f64; 3]>> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        parse_landmarks(&text, p)
    };
    let fixed = load(path_fixed.as_ref())?;
    let moving = load(path_moving.as_ref())?;
    LandmarkSet::new(fixed, moving, spacing_fixed, spacing_moving)
}
