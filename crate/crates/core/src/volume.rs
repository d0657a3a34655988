//! Core value types: image volumes, feature volumes, displacement fields and
//! landmark sets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PcaBasis;
use crate::grid::{Axis, Grid};
use crate::Real;

/// Scalar or label voxel grid with physical spacing and origin (mm).
///
/// Spatial order is `(z, y, x)` for `dims`, `spacing` and `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<V> {
    data: Vec<V>,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl<V: Copy> Volume<V> {
    pub fn new(data: Vec<V>, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero volume extent in {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "volume data has {} voxels, dims {:?} need {}",
                data.len(),
                dims,
                dims.iter().product::<usize>()
            )));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "voxel spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite origin {origin:?}")));
        }
        Ok(Volume {
            data,
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn from_data(data: Vec<V>, dims: [usize; 3]) -> Result<Self> {
        Self::new(data, dims, [1.0; 3], [0.0; 3])
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> V) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::from_data(data, dims)
    }

    pub fn data(&self) -> &[V] {
        &self.data
    }

    pub fn into_data(self) -> Vec<V> {
        self.data
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// The voxel lattice of this volume in its own voxel coordinates.
    pub fn grid(&self) -> Grid {
        Grid::image(self.dims)
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> V {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Same geometry, new voxel values.
    pub fn with_data<W: Copy>(&self, data: Vec<W>) -> Result<Volume<W>> {
        Volume::new(data, self.dims, self.spacing, self.origin)
    }

    pub fn map<W: Copy>(&self, f: impl Fn(V) -> W) -> Volume<W> {
        Volume {
            data: self.data.iter().map(|&v| f(v)).collect(),
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
        }
    }
}

impl<T: Real> Volume<T> {
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Origin of a feature volume's channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "MIND_SSC")]
    MindSsc,
    #[serde(rename = "EXTERNAL")]
    External,
    #[serde(rename = "PCA_REDUCED")]
    PcaReduced,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::MindSsc => "MIND_SSC",
            Provenance::External => "EXTERNAL",
            Provenance::PcaReduced => "PCA_REDUCED",
        }
    }
}

/// Sparse slice encoding: only slices `0, gap, 2*gap, ...` of an axis with
/// `extent` slices were encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceLayout {
    pub axis: Axis,
    pub gap: usize,
    pub extent: usize,
}

/// Channel-first feature tensor `(C, Dg, Hg, Wg)` on its own grid.
#[derive(Debug, Clone)]
pub struct FeatureVolume<T> {
    data: Vec<T>,
    channels: usize,
    grid: Grid,
    pub provenance: Provenance,
    /// Present when the slice axis is still sparse.
    pub slice_layout: Option<SliceLayout>,
    /// Explained-variance ratio per component for PCA-reduced features.
    pub explained_variance: Option<Vec<f64>>,
    /// Projection used to produce PCA-reduced features, shared by both
    /// volumes of a joint reduction.
    pub pca_basis: Option<Arc<PcaBasis<T>>>,
}

impl<T: Real> FeatureVolume<T> {
    pub fn new(data: Vec<T>, channels: usize, grid: Grid, provenance: Provenance) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("feature volume needs at least one channel".into()));
        }
        grid.validate()?;
        if grid.spacing.iter().any(|&s| s < 1.0 - 1e-9) {
            return Err(Error::Shape(format!(
                "feature grid spacing {:?} is finer than the image grid",
                grid.spacing
            )));
        }
        if data.len() != channels * grid.len() {
            return Err(Error::Shape(format!(
                "feature payload has {} values, expected {} x {}",
                data.len(),
                channels,
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value at flat index {i}"
            )));
        }
        Ok(FeatureVolume {
            data,
            channels,
            grid,
            provenance,
            slice_layout: None,
            explained_variance: None,
            pca_basis: None,
        })
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn voxels(&self) -> usize {
        self.grid.len()
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Feature vector of one voxel.
    pub fn token(&self, voxel: usize) -> Vec<T> {
        let n = self.grid.len();
        (0..self.channels).map(|c| self.data[c * n + voxel]).collect()
    }

    /// Same grid and metadata, new payload.
    pub(crate) fn with_payload(&self, data: Vec<T>, channels: usize) -> Result<Self> {
        let mut out = FeatureVolume::new(data, channels, self.grid, self.provenance)?;
        out.slice_layout = self.slice_layout;
        Ok(out)
    }

    /// Reinterpret a single-channel scalar volume as a feature volume on the
    /// image grid.
    pub fn from_volume(v: &Volume<T>) -> Result<Self> {
        FeatureVolume::new(v.data().to_vec(), 1, v.grid(), Provenance::External)
    }
}

/// Dense displacement field `(3, Dg, Hg, Wg)`, components `(dz, dy, dx)`,
/// in voxels of the grid it is defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    data: Vec<T>,
    grid: Grid,
}

impl<T: Real> DisplacementField<T> {
    pub fn new(data: Vec<T>, grid: Grid) -> Result<Self> {
        grid.validate()?;
        if data.len() != 3 * grid.len() {
            return Err(Error::Shape(format!(
                "displacement payload has {} values, expected 3 x {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite displacement at flat index {i}"
            )));
        }
        Ok(DisplacementField { data, grid })
    }

    pub fn zeros(grid: Grid) -> Self {
        DisplacementField {
            data: vec![T::zero(); 3 * grid.len()],
            grid,
        }
    }

    pub fn constant(grid: Grid, d: [T; 3]) -> Self {
        let n = grid.len();
        let mut data = Vec::with_capacity(3 * n);
        for v in d {
            data.extend(std::iter::repeat_n(v, n));
        }
        DisplacementField { data, grid }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize, usize) -> [T; 3]) -> Result<Self> {
        let n = grid.len();
        let mut data = vec![T::zero(); 3 * n];
        for i in 0..n {
            let [z, y, x] = grid.coords(i);
            let d = f(z, y, x);
            for c in 0..3 {
                data[c * n + i] = d[c];
            }
        }
        Self::new(data, grid)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn component(&self, c: usize) -> &[T] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, voxel: usize) -> [T; 3] {
        let n = self.grid.len();
        [
            self.data[voxel],
            self.data[n + voxel],
            self.data[2 * n + voxel],
        ]
    }

    /// Displacement magnitudes in voxels of this grid.
    pub fn magnitudes(&self) -> Vec<T> {
        (0..self.grid.len())
            .map(|i| {
                let [a, b, c] = self.at(i);
                (a * a + b * b + c * c).sqrt()
            })
            .collect()
    }

    pub fn mean_magnitude(&self) -> f64 {
        let m = self.magnitudes();
        m.iter().map(|v| v.as_f64()).sum::<f64>() / m.len() as f64
    }

    pub fn cast<U: Real>(&self) -> DisplacementField<U> {
        DisplacementField {
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            grid: self.grid,
        }
    }
}

/// Paired landmark positions in `(z, y, x)` voxel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub fixed: Vec<[f64; 3]>,
    pub moving: Vec<[f64; 3]>,
    pub spacing_fixed: [f64; 3],
    pub spacing_moving: [f64; 3],
}

impl LandmarkSet {
    pub fn new(
        fixed: Vec<[f64; 3]>,
        moving: Vec<[f64; 3]>,
        spacing_fixed: [f64; 3],
        spacing_moving: [f64; 3],
    ) -> Result<Self> {
        if fixed.len() != moving.len() {
            return Err(Error::LandmarkCount {
                fixed: fixed.len(),
                moving: moving.len(),
            });
        }
        if fixed.is_empty() {
            return Err(Error::InvalidInput("landmark set is empty".into()));
        }
        if fixed
            .iter()
            .chain(&moving)
            .flatten()
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidInput("non-finite landmark coordinate".into()));
        }
        for s in [spacing_fixed, spacing_moving] {
            if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::InvalidInput(format!("invalid landmark spacing {s:?}")));
            }
        }
        Ok(LandmarkSet {
            fixed,
            moving,
            spacing_fixed,
            spacing_moving,
        })
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    /// Indices of pairs with a point outside the given volume extents. Such
    /// points are kept; cropped fields of view routinely cut anatomy.
    pub fn out_of_bounds(&self, fixed_dims: [usize; 3], moving_dims: [usize; 3]) -> Vec<usize> {
        let outside = |p: &[f64; 3], d: [usize; 3]| {
            (0..3).any(|a| p[a] < 0.0 || p[a] > (d[a] as f64 - 1.0))
        };
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| outside(&self.fixed[i], fixed_dims) || outside(&self.moving[i], moving_dims))
            .collect();
        if !idx.is_empty() {
            log::warn!("{} landmark pair(s) fall outside the volume bounds", idx.len());
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_rejects_bad_shape_and_spacing() {
        assert!(Volume::new(vec![0.0f32; 7], [2, 2, 2], [1.0; 3], [0.0; 3]).is_err());
        assert!(Volume::new(vec![0.0f32; 8], [2, 2, 2], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn feature_volume_rejects_nan_and_fine_grid() {
        let g = Grid::image([2, 2, 2]);
        let mut d = vec![0.0f64; 8];
        d[3] = f64::NAN;
        assert!(FeatureVolume::new(d, 1, g, Provenance::External).is_err());
        let fine = Grid::new([2, 2, 2], [0.5, 1.0, 1.0], [0.0; 3]).unwrap();
        assert!(FeatureVolume::new(vec![0.0f64; 8], 1, fine, Provenance::External).is_err());
    }

    #[test]
    fn constant_field_layout() {
        let f = DisplacementField::constant(Grid::image([2, 3, 4]), [1.0f64, 2.0, 3.0]);
        assert_eq!(f.at(5), [1.0, 2.0, 3.0]);
        assert_eq!(f.component(1).len(), 24);
    }

    #[test]
    fn landmark_count_mismatch() {
        let e = LandmarkSet::new(vec![[0.0; 3]; 2], vec![[0.0; 3]], [1.0; 3], [1.0; 3]);
        assert!(matches!(e, Err(Error::LandmarkCount { fixed: 2, moving: 1 })));
    }
}
