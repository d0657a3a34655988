//! Single-file NIfTI-1 subset.
//!
//! Supported: `.nii` / `.nii.gz`, 3D scalar data of type u8, i16, i32, f32 or
//! f64, either byte order. Extensions are skipped. Orientation is reduced to
//! spacing (`pixdim[1..=3]`) and origin (sform offset when `sform_code > 0`,
//! otherwise qform offset); rotations are ignored with a warning.

use std::fs::File;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::volume::Volume;
use crate::Real;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone)]
struct Header {
    endian: Endian,
    dim: [i16; 8],
    datatype: i16,
    bitpix: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn rd_i16(b: &[u8], off: usize, e: Endian) -> i16 {
    match e {
        Endian::Little => LittleEndian::read_i16(&b[off..]),
        Endian::Big => BigEndian::read_i16(&b[off..]),
    }
}

fn rd_i32(b: &[u8], off: usize, e: Endian) -> i32 {
    match e {
        Endian::Little => LittleEndian::read_i32(&b[off..]),
        Endian::Big => BigEndian::read_i32(&b[off..]),
    }
}

fn rd_f32(b: &[u8], off: usize, e: Endian) -> f32 {
    match e {
        Endian::Little => LittleEndian::read_f32(&b[off..]),
        Endian::Big => BigEndian::read_f32(&b[off..]),
    }
}

impl Header {
    fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_SIZE {
            return Err(Error::NiftiHeader {
                field: "sizeof_hdr",
                reason: format!("file holds only {} bytes", b.len()),
            });
        }
        let endian = if LittleEndian::read_i32(b) == HEADER_SIZE as i32 {
            Endian::Little
        } else if BigEndian::read_i32(b) == HEADER_SIZE as i32 {
            Endian::Big
        } else {
            return Err(Error::NiftiHeader {
                field: "sizeof_hdr",
                reason: "expected 348 in either byte order".into(),
            });
        };
        match &b[344..348] {
            b"n+1\0" => {}
            b"ni1\0" => {
                return Err(Error::NiftiHeader {
                    field: "magic",
                    reason: "header/image pairs are not supported, use a single .nii file".into(),
                })
            }
            m => {
                return Err(Error::NiftiHeader {
                    field: "magic",
                    reason: format!("unrecognised magic {m:?}"),
                })
            }
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = rd_i16(b, 40 + 2 * i, endian);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = rd_f32(b, 76 + 4 * i, endian);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = rd_f32(b, 280 + 16 * r + 4 * c, endian);
            }
        }
        Ok(Header {
            endian,
            dim,
            datatype: rd_i16(b, 70, endian),
            bitpix: rd_i16(b, 72, endian),
            pixdim,
            vox_offset: rd_f32(b, 108, endian),
            scl_slope: rd_f32(b, 112, endian),
            scl_inter: rd_f32(b, 116, endian),
            qform_code: rd_i16(b, 252, endian),
            sform_code: rd_i16(b, 254, endian),
            quatern: [
                rd_f32(b, 256, endian),
                rd_f32(b, 260, endian),
                rd_f32(b, 264, endian),
            ],
            qoffset: [
                rd_f32(b, 268, endian),
                rd_f32(b, 272, endian),
                rd_f32(b, 276, endian),
            ],
            srow,
        })
    }

    /// `(z, y, x)` voxel counts.
    fn dims(&self) -> Result<[usize; 3]> {
        let nd = self.dim[0];
        if !(1..=7).contains(&nd) {
            return Err(Error::NiftiHeader {
                field: "dim",
                reason: format!("dim[0]={nd} out of range"),
            });
        }
        let ext = |i: usize| -> i16 {
            if i <= nd as usize {
                self.dim[i]
            } else {
                1
            }
        };
        for i in 4..=7 {
            if ext(i) > 1 {
                return Err(Error::NiftiHeader {
                    field: "dim",
                    reason: format!("only 3D scalar volumes are supported, dim[{i}]={}", ext(i)),
                });
            }
        }
        let (nx, ny, nz) = (ext(1), ext(2), ext(3));
        if nx < 1 || ny < 1 || nz < 1 {
            return Err(Error::NiftiHeader {
                field: "dim",
                reason: format!("non-positive extent ({nx}, {ny}, {nz})"),
            });
        }
        Ok([nz as usize, ny as usize, nx as usize])
    }

    fn spacing(&self) -> Result<[f64; 3]> {
        for i in 1..=3 {
            let p = self.pixdim[i];
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::NiftiHeader {
                    field: "pixdim",
                    reason: format!("pixdim[{i}]={p} must be positive"),
                });
            }
        }
        Ok([
            self.pixdim[3] as f64,
            self.pixdim[2] as f64,
            self.pixdim[1] as f64,
        ])
    }

    fn origin(&self) -> [f64; 3] {
        let rotated = if self.sform_code > 0 {
            let s = &self.srow;
            s[0][1] != 0.0
                || s[0][2] != 0.0
                || s[1][0] != 0.0
                || s[1][2] != 0.0
                || s[2][0] != 0.0
                || s[2][1] != 0.0
        } else {
            self.qform_code > 0 && self.quatern.iter().any(|&q| q != 0.0)
        };
        if rotated {
            log::warn!("NIfTI orientation ignored; only spacing and origin are used");
        }
        if self.sform_code > 0 {
            [
                self.srow[2][3] as f64,
                self.srow[1][3] as f64,
                self.srow[0][3] as f64,
            ]
        } else if self.qform_code > 0 {
            [
                self.qoffset[2] as f64,
                self.qoffset[1] as f64,
                self.qoffset[0] as f64,
            ]
        } else {
            [0.0; 3]
        }
    }

    fn bytes_per_voxel(&self) -> Result<usize> {
        let (bytes, bits) = match self.datatype {
            DT_UINT8 => (1, 8),
            DT_INT16 => (2, 16),
            DT_INT32 => (4, 32),
            DT_FLOAT32 => (4, 32),
            DT_FLOAT64 => (8, 64),
            other => return Err(Error::UnsupportedDatatype(other)),
        };
        if self.bitpix != bits {
            return Err(Error::NiftiHeader {
                field: "bitpix",
                reason: format!("bitpix {} disagrees with datatype {}", self.bitpix, self.datatype),
            });
        }
        Ok(bytes)
    }

    fn is_integral(&self) -> bool {
        matches!(self.datatype, DT_UINT8 | DT_INT16 | DT_INT32)
    }
}

/// Raw voxels decoded to f64 (exact for every supported type).
struct Decoded {
    values: Vec<f64>,
    header: Header,
    dims: [usize; 3],
}

fn load(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(Cursor::new(raw))
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };

    let header = Header::parse(&bytes)?;
    let dims = header.dims()?;
    header.spacing()?;
    let bpv = header.bytes_per_voxel()?;
    let offset = header.vox_offset;
    if !offset.is_finite() || (offset as usize) < HEADER_SIZE {
        return Err(Error::NiftiHeader {
            field: "vox_offset",
            reason: format!("{offset} precedes the end of the header"),
        });
    }
    let start = offset as usize;
    let n: usize = dims.iter().product();
    let end = start + n * bpv;
    if bytes.len() < end {
        return Err(Error::NiftiHeader {
            field: "vox_offset",
            reason: format!(
                "payload truncated: need {} bytes after offset {start}, have {}",
                n * bpv,
                bytes.len().saturating_sub(start)
            ),
        });
    }
    let p = &bytes[start..end];
    let e = header.endian;
    let values: Vec<f64> = match header.datatype {
        DT_UINT8 => p.iter().map(|&v| v as f64).collect(),
        DT_INT16 => (0..n).map(|i| rd_i16(p, 2 * i, e) as f64).collect(),
        DT_INT32 => (0..n).map(|i| rd_i32(p, 4 * i, e) as f64).collect(),
        DT_FLOAT32 => (0..n).map(|i| rd_f32(p, 4 * i, e) as f64).collect(),
        DT_FLOAT64 => (0..n)
            .map(|i| match e {
                Endian::Little => LittleEndian::read_f64(&p[8 * i..]),
                Endian::Big => BigEndian::read_f64(&p[8 * i..]),
            })
            .collect(),
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    Ok(Decoded {
        values,
        header,
        dims,
    })
}

/// Read an intensity volume, applying `scl_slope`/`scl_inter` when set.
pub fn read_volume<T: Real>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let path = path.as_ref();
    let d = load(path)?;
    let h = &d.header;
    let (slope, inter) = (h.scl_slope as f64, h.scl_inter as f64);
    let scale = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);
    let data: Vec<T> = if scale {
        d.values.iter().map(|&v| T::lit(v * slope + inter)).collect()
    } else {
        // f32 -> f64 -> T is exact for T in {f32, f64}
        d.values.iter().map(|&v| T::lit(v)).collect()
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{} contains non-finite intensities",
            path.display()
        )));
    }
    Volume::new(data, d.dims, h.spacing()?, h.origin())
}

/// Read a segmentation. The file must store an integral datatype with
/// non-negative values.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Volume<u32>> {
    let path = path.as_ref();
    let d = load(path)?;
    if !d.header.is_integral() {
        return Err(Error::InvalidInput(format!(
            "{}: label volumes need an integer datatype, found code {}",
            path.display(),
            d.header.datatype
        )));
    }
    if let Some(v) = d.values.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "{}: negative label {v}",
            path.display()
        )));
    }
    let data = d.values.iter().map(|&v| v as u32).collect();
    Volume::new(data, d.dims, d.header.spacing()?, d.header.origin())
}

fn encode_header(
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    datatype: i16,
    bitpix: i16,
) -> Result<Vec<u8>> {
    for (i, &d) in dims.iter().enumerate() {
        if d == 0 || d > i16::MAX as usize {
            return Err(Error::Shape(format!("extent {d} on axis {i} not representable in NIfTI-1")));
        }
    }
    let mut h = Vec::with_capacity(VOX_OFFSET);
    let le = |h: &mut Vec<u8>, v: i32| h.write_i32::<LittleEndian>(v);
    let io = |e| Error::io("<header>", e);
    le(&mut h, HEADER_SIZE as i32).map_err(io)?;
    h.extend_from_slice(&[0u8; 36]); // data_type, db_name, extents, session_error, regular, dim_info
    let dim: [i16; 8] = [3, dims[2] as i16, dims[1] as i16, dims[0] as i16, 1, 1, 1, 1];
    for d in dim {
        h.write_i16::<LittleEndian>(d).map_err(io)?;
    }
    h.extend_from_slice(&[0u8; 12]); // intent_p1..3
    h.write_i16::<LittleEndian>(0).map_err(io)?; // intent_code
    h.write_i16::<LittleEndian>(datatype).map_err(io)?;
    h.write_i16::<LittleEndian>(bitpix).map_err(io)?;
    h.write_i16::<LittleEndian>(0).map_err(io)?; // slice_start
    let pixdim = [
        1.0f32,
        spacing[2] as f32,
        spacing[1] as f32,
        spacing[0] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for p in pixdim {
        h.write_f32::<LittleEndian>(p).map_err(io)?;
    }
    h.write_f32::<LittleEndian>(VOX_OFFSET as f32).map_err(io)?;
    h.write_f32::<LittleEndian>(1.0).map_err(io)?; // scl_slope
    h.write_f32::<LittleEndian>(0.0).map_err(io)?; // scl_inter
    h.write_i16::<LittleEndian>(0).map_err(io)?; // slice_end
    h.push(0); // slice_code
    h.push(2); // xyzt_units: mm
    h.extend_from_slice(&[0u8; 24]); // cal_max .. glmin
    h.extend_from_slice(&[0u8; 80 + 24]); // descrip, aux_file
    h.write_i16::<LittleEndian>(1).map_err(io)?; // qform_code
    h.write_i16::<LittleEndian>(1).map_err(io)?; // sform_code
    for q in [0.0f32, 0.0, 0.0] {
        h.write_f32::<LittleEndian>(q).map_err(io)?;
    }
    for o in [origin[2], origin[1], origin[0]] {
        h.write_f32::<LittleEndian>(o as f32).map_err(io)?;
    }
    let srow = [
        [spacing[2] as f32, 0.0, 0.0, origin[2] as f32],
        [0.0, spacing[1] as f32, 0.0, origin[1] as f32],
        [0.0, 0.0, spacing[0] as f32, origin[0] as f32],
    ];
    for row in srow {
        for v in row {
            h.write_f32::<LittleEndian>(v).map_err(io)?;
        }
    }
    h.extend_from_slice(&[0u8; 16]); // intent_name
    h.extend_from_slice(b"n+1\0");
    debug_assert_eq!(h.len(), HEADER_SIZE);
    h.extend_from_slice(&[0u8; 4]); // no extensions
    Ok(h)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    atomic_write(path, |w| {
        if gz {
            let mut enc = GzEncoder::new(w, Compression::default());
            enc.write_all(bytes)?;
            enc.finish()?;
            Ok(())
        } else {
            w.write_all(bytes)
        }
    })
}

/// Write an intensity volume as FLOAT32. A `.gz` suffix selects gzip.
pub fn write_volume<T: Real>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = encode_header(v.dims(), v.spacing(), v.origin(), DT_FLOAT32, 32)?;
    bytes.reserve(4 * v.data().len());
    for &x in v.data() {
        bytes.extend_from_slice(&(x.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
    }
    write_bytes(path.as_ref(), &bytes)
}

/// Write a label volume using the narrowest of UINT8, INT16 or INT32.
pub fn write_labels(v: &Volume<u32>, path: impl AsRef<Path>) -> Result<()> {
    let max = v.data().iter().copied().max().unwrap_or(0);
    let (dt, bits) = if max <= u8::MAX as u32 {
        (DT_UINT8, 8)
    } else if max <= i16::MAX as u32 {
        (DT_INT16, 16)
    } else if max <= i32::MAX as u32 {
        (DT_INT32, 32)
    } else {
        return Err(Error::InvalidInput(format!("label {max} exceeds INT32 range")));
    };
    let mut bytes = encode_header(v.dims(), v.spacing(), v.origin(), dt, bits)?;
    for &l in v.data() {
        match dt {
            DT_UINT8 => bytes.push(l as u8),
            DT_INT16 => bytes.extend_from_slice(&(l as i16).to_le_bytes()),
            _ => bytes.extend_from_slice(&(l as i32).to_le_bytes()),
        }
    }
    write_bytes(path.as_ref(), &bytes)
}
