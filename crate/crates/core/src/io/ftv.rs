//! FTV: binary container for 4D feature and displacement tensors.
//!
//! Layout (little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `FTV1`                              |
//! | 4            | `u32` ndim (always 4 here)                |
//! | 4 * ndim     | `u32` dims, channel first                 |
//! | 4            | `u32` dtype code (0 = f32)                |
//! | 4            | `u32` metadata length `M`                 |
//! | M            | UTF-8 JSON metadata                       |
//! | rest         | payload, C-order                          |
//!
//! Metadata keys: `kind` (`"features"` or `"displacement"`), `grid_spacing`,
//! `grid_origin`, `provenance`, plus the optional `slices`
//! (`{"axis", "gap", "extent"}`) and `explained_variance`. Unknown keys are
//! ignored on read.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::{DisplacementField, FeatureVolume, Provenance, SliceLayout};
use crate::Real;

const MAGIC: &[u8; 4] = b"FTV1";
const DTYPE_F32: u32 = 0;
const DISPLACEMENT_PROVENANCE: &str = "DISPLACEMENT";

/// Either payload an FTV file can carry.
#[derive(Debug, Clone)]
pub enum FeatureTensor<T> {
    Features(FeatureVolume<T>),
    Displacement(DisplacementField<T>),
}

impl<T: Real> FeatureTensor<T> {
    pub fn into_features(self) -> Result<FeatureVolume<T>> {
        match self {
            FeatureTensor::Features(f) => Ok(f),
            FeatureTensor::Displacement(_) => {
                Err(Error::Ftv("expected kind \"features\", found \"displacement\"".into()))
            }
        }
    }

    pub fn into_displacement(self) -> Result<DisplacementField<T>> {
        match self {
            FeatureTensor::Displacement(d) => Ok(d),
            FeatureTensor::Features(_) => {
                Err(Error::Ftv("expected kind \"displacement\", found \"features\"".into()))
            }
        }
    }
}

impl<T> From<FeatureVolume<T>> for FeatureTensor<T> {
    fn from(f: FeatureVolume<T>) -> Self {
        FeatureTensor::Features(f)
    }
}

impl<T> From<DisplacementField<T>> for FeatureTensor<T> {
    fn from(d: DisplacementField<T>) -> Self {
        FeatureTensor::Displacement(d)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    grid_spacing: [f64; 3],
    grid_origin: [f64; 3],
    provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slices: Option<SliceLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explained_variance: Option<Vec<f64>>,
}

/// Serialize a tensor to FTV bytes. Output is a pure function of the tensor.
pub fn encode_ftv<T: Real>(t: &FeatureTensor<T>) -> Result<Vec<u8>> {
    let (channels, grid, payload, meta) = match t {
        FeatureTensor::Features(f) => (
            f.channels(),
            *f.grid(),
            f.data(),
            Metadata {
                kind: "features".into(),
                grid_spacing: f.grid().spacing,
                grid_origin: f.grid().origin,
                provenance: f.provenance.as_str().into(),
                slices: f.slice_layout,
                explained_variance: f.explained_variance.clone(),
            },
        ),
        FeatureTensor::Displacement(d) => (
            3,
            *d.grid(),
            d.data(),
            Metadata {
                kind: "displacement".into(),
                grid_spacing: d.grid().spacing,
                grid_origin: d.grid().origin,
                provenance: DISPLACEMENT_PROVENANCE.into(),
                slices: None,
                explained_variance: None,
            },
        ),
    };
    let dims = [channels, grid.dims[0], grid.dims[1], grid.dims[2]];
    if dims.contains(&0) {
        return Err(Error::Ftv(format!("zero extent in dims {dims:?}")));
    }
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Ftv(e.to_string()))?;
    let mut out = Vec::with_capacity(4 * (8 + payload.len()) + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Ftv(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Ftv(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }
}

pub fn decode_ftv<T: Real>(bytes: &[u8]) -> Result<FeatureTensor<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Ftv("bad magic, expected \"FTV1\"".into()));
    }
    let ndim = c.u32("ndim")? as usize;
    if ndim != 4 {
        return Err(Error::Ftv(format!("expected 4 dims, found {ndim}")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = c.u32("dims")? as usize;
    }
    if dims.contains(&0) {
        return Err(Error::Ftv(format!("zero extent in dims {dims:?}")));
    }
    let dtype = c.u32("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::Ftv(format!("unknown dtype code {dtype}")));
    }
    let mlen = c.u32("metadata length")? as usize;
    let meta: Metadata = serde_json::from_slice(c.take(mlen, "metadata")?)
        .map_err(|e| Error::Ftv(format!("metadata: {e}")))?;
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Ftv("dims overflow".into()))?;
    let remaining = bytes.len() - c.pos;
    if remaining != 4 * n {
        return Err(Error::Ftv(format!(
            "payload holds {remaining} bytes, dims {dims:?} need {}",
            4 * n
        )));
    }
    let payload: Vec<T> = c
        .take(4 * n, "payload")?
        .chunks_exact(4)
        .map(|b| T::lit(LittleEndian::read_f32(b) as f64))
        .collect();
    let grid = Grid::new([dims[1], dims[2], dims[3]], meta.grid_spacing, meta.grid_origin)
        .map_err(|e| Error::Ftv(e.to_string()))?;
    match meta.kind.as_str() {
        "features" => {
            let provenance = match meta.provenance.as_str() {
                "MIND_SSC" => Provenance::MindSsc,
                "EXTERNAL" => Provenance::External,
                "PCA_REDUCED" => Provenance::PcaReduced,
                other => return Err(Error::Ftv(format!("unknown provenance {other:?}"))),
            };
            let mut f = FeatureVolume::new(payload, dims[0], grid, provenance)?;
            f.slice_layout = meta.slices;
            f.explained_variance = meta.explained_variance;
            Ok(FeatureTensor::Features(f))
        }
        "displacement" => {
            if dims[0] != 3 {
                return Err(Error::Ftv(format!(
                    "displacement tensors need 3 channels, found {}",
                    dims[0]
                )));
            }
            Ok(FeatureTensor::Displacement(DisplacementField::new(payload, grid)?))
        }
        other => Err(Error::Ftv(format!("unknown kind {other:?}"))),
    }
}

pub fn read_feature_tensor<T: Real>(path: impl AsRef<Path>) -> Result<FeatureTensor<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ftv(&bytes)
}

pub fn write_feature_tensor<T: Real>(t: &FeatureTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_ftv(t)?;
    atomic_write(path.as_ref(), |w| w.write_all(&bytes))
}
