use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial axis of a `(z, y, x)` array.
///
/// For volumes stored in the usual radiological layout the slice axis `Z`
/// corresponds to the axial view, `Y` to coronal and `X` to sagittal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Z,
    Y,
    X,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Axis::Z),
            1 => Some(Axis::Y),
            2 => Some(Axis::X),
            _ => None,
        }
    }

    /// Slice axis for a named encoding view (`axial`, `coronal`, `sagittal`).
    pub fn from_view(view: &str) -> Option<Self> {
        match view.to_ascii_lowercase().as_str() {
            "axial" => Some(Axis::Z),
            "coronal" => Some(Axis::Y),
            "sagittal" => Some(Axis::X),
            _ => None,
        }
    }
}

/// A regular 3D lattice placed in image-voxel coordinates.
///
/// Cell `i` along an axis sits at image-voxel coordinate
/// `origin + i * spacing`. The image grid itself has unit spacing and zero
/// origin; feature and control grids are coarser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Grid {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit-spacing grid aligned with image voxels.
    pub fn image(dims: [usize; 3]) -> Self {
        Grid {
            dims,
            spacing: [1.0; 3],
            origin: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Shape(format!("zero grid extent in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Shape(format!(
                "grid spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Shape(format!(
                "grid origin must be finite, got {:?}",
                self.origin
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let z = idx / (self.dims[1] * self.dims[2]);
        [z, y, x]
    }

    /// Image-voxel position of a (possibly fractional) grid index.
    #[inline]
    pub fn to_image(&self, idx: [f64; 3]) -> [f64; 3] {
        [
            self.origin[0] + idx[0] * self.spacing[0],
            self.origin[1] + idx[1] * self.spacing[1],
            self.origin[2] + idx[2] * self.spacing[2],
        ]
    }

    /// Continuous grid index of an image-voxel position.
    #[inline]
    pub fn from_image(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Same lattice, compared with a tolerance on spacing and origin.
    pub fn same_lattice(&self, other: &Grid) -> bool {
        const TOL: f64 = 1e-9;
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() <= TOL * a.abs().max(1.0))
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() <= TOL * a.abs().max(1.0))
    }

    /// Grid sampling every `stride`-th cell of `self`, starting at cell 0.
    pub fn strided(&self, stride: usize) -> Grid {
        let s = stride.max(1);
        Grid {
            dims: [
                self.dims[0].div_ceil(s),
                self.dims[1].div_ceil(s),
                self.dims[2].div_ceil(s),
            ],
            spacing: [
                self.spacing[0] * s as f64,
                self.spacing[1] * s as f64,
                self.spacing[2] * s as f64,
            ],
            origin: self.origin,
        }
    }
}
