//! MIND-SSC: modality independent neighbourhood descriptor with a
//! self-similarity context layout.
//!
//! Six neighbours sit at `±dilation` along each axis around the voxel. Each of
//! the twelve non-opposite neighbour pairs yields one channel: the mean
//! squared difference between the patches centred on the two neighbours.
//! Distances are normalized by their per-voxel mean (floored), passed through
//! `exp(-d)` and scaled so the largest channel at every voxel equals 1.
//! Borders replicate the edge voxel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::{FeatureVolume, Provenance, Volume};
use crate::Real;

pub const MIND_CHANNELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MindConfig {
    /// Half-width of the comparison patch in voxels.
    pub patch_radius: usize,
    /// Distance from the centre voxel to each of the six neighbours.
    pub dilation: usize,
    /// Floor on the per-voxel mean patch distance, relative to the
    /// volume-wide mean of that quantity.
    pub variance_floor: f64,
}

impl Default for MindConfig {
    fn default() -> Self {
        MindConfig {
            patch_radius: 1,
            dilation: 2,
            variance_floor: 1e-6,
        }
    }
}

impl MindConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dilation < 1 {
            return Err(Error::Config("MIND dilation must be >= 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config("MIND variance floor must be positive".into()));
        }
        Ok(())
    }

    /// Smallest admissible extent along every axis.
    pub fn min_extent(&self) -> usize {
        2 * (self.patch_radius + self.dilation) + 1
    }
}

/// Unit offsets of the six-neighbourhood, `(z, y, x)`.
const SIX: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [0, -1, 0],
    [0, 0, -1],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
];

/// The twelve non-opposite neighbour pairs, in channel order.
pub fn ssc_pairs(dilation: usize) -> [([isize; 3], [isize; 3]); MIND_CHANNELS] {
    let d = dilation as isize;
    let scale = |o: [isize; 3]| [o[0] * d, o[1] * d, o[2] * d];
    let mut out = [([0isize; 3], [0isize; 3]); MIND_CHANNELS];
    let mut n = 0;
    for i in 0..6 {
        for j in (i + 1)..6 {
            // opposite neighbours sit 3 apart in SIX
            if j == i + 3 {
                continue;
            }
            out[n] = (scale(SIX[i]), scale(SIX[j]));
            n += 1;
        }
    }
    debug_assert_eq!(n, MIND_CHANNELS);
    out
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Flat indices of the first element of every line along `axis`.
pub(crate) fn line_starts(dims: [usize; 3], axis: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.iter().product::<usize>() / dims[axis]);
    for z in 0..if axis == 0 { 1 } else { dims[0] } {
        for y in 0..if axis == 1 { 1 } else { dims[1] } {
            for x in 0..if axis == 2 { 1 } else { dims[2] } {
                out.push((z * dims[1] + y) * dims[2] + x);
            }
        }
    }
    out
}

/// Replicate-padded moving average of radius `r` along one axis, in place.
pub(crate) fn box_mean_axis<T: Real>(data: &mut [T], dims: [usize; 3], axis: usize, r: usize) {
    if r == 0 {
        return;
    }
    let n = dims[axis];
    let stride = match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    };
    let inv = T::one() / T::lit((2 * r + 1) as f64);
    let lines = line_starts(dims, axis);
    let mut line = vec![T::zero(); n];
    for start in lines {
        for (k, v) in line.iter_mut().enumerate() {
            *v = data[start + k * stride];
        }
        for k in 0..n {
            let mut s = T::zero();
            for o in -(r as isize)..=(r as isize) {
                s = s + line[clamp_idx(k as isize + o, n)];
            }
            data[start + k * stride] = s * inv;
        }
    }
}

fn shifted_index(dims: [usize; 3], z: usize, y: usize, x: usize, o: [isize; 3]) -> usize {
    let zz = clamp_idx(z as isize + o[0], dims[0]);
    let yy = clamp_idx(y as isize + o[1], dims[1]);
    let xx = clamp_idx(x as isize + o[2], dims[2]);
    (zz * dims[1] + yy) * dims[2] + xx
}

/// Encode a volume into 12 MIND-SSC channels on its own voxel grid.
pub fn encode_mind_ssc<T: Real>(v: &Volume<T>, cfg: &MindConfig) -> Result<FeatureVolume<T>> {
    cfg.validate()?;
    let dims = v.dims();
    let need = cfg.min_extent();
    if dims.iter().any(|&d| d < need) {
        return Err(Error::InvalidInput(format!(
            "volume {dims:?} too small for MIND (needs >= {need} voxels per axis)"
        )));
    }
    if !v.all_finite() {
        return Err(Error::InvalidInput("volume has non-finite intensities".into()));
    }
    let n = v.data().len();
    let img = v.data();
    let pairs = ssc_pairs(cfg.dilation);

    let distances: Vec<Vec<T>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut d = vec![T::zero(); n];
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let diff = img[shifted_index(dims, z, y, x, a)]
                            - img[shifted_index(dims, z, y, x, b)];
                        d[(z * dims[1] + y) * dims[2] + x] = diff * diff;
                    }
                }
            }
            for axis in 0..3 {
                box_mean_axis(&mut d, dims, axis, cfg.patch_radius);
            }
            d
        })
        .collect();

    let twelve = T::lit(MIND_CHANNELS as f64);
    let mean_dist: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| distances.iter().map(|d| d[i]).fold(T::zero(), |a, b| a + b) / twelve)
        .collect();
    let global = mean_dist.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let floor = T::lit((cfg.variance_floor * global).max(f64::MIN_POSITIVE));

    let mut out = vec![T::zero(); MIND_CHANNELS * n];
    let per_voxel: Vec<[T; MIND_CHANNELS]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut ch = [T::zero(); MIND_CHANNELS];
            let mut dmin = T::infinity();
            for (c, d) in distances.iter().enumerate() {
                ch[c] = d[i];
                dmin = dmin.min(d[i]);
            }
            let var = mean_dist[i].max(floor);
            for v in ch.iter_mut() {
                *v = (-(*v - dmin) / var).exp();
            }
            ch
        })
        .collect();
    for (i, ch) in per_voxel.iter().enumerate() {
        for c in 0..MIND_CHANNELS {
            out[c * n + i] = ch[c];
        }
    }
    FeatureVolume::new(out, MIND_CHANNELS, Grid::image(dims), Provenance::MindSsc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_distinct_non_opposite_pairs() {
        let p = ssc_pairs(2);
        for (a, b) in p {
            let sum: Vec<isize> = (0..3).map(|k| a[k] + b[k]).collect();
            assert_ne!(sum, vec![0, 0, 0], "opposite pair");
            let d2: isize = (0..3).map(|k| (a[k] - b[k]).pow(2)).sum();
            assert_eq!(d2, 8);
        }
        for i in 0..12 {
            for j in (i + 1)..12 {
                assert_ne!(p[i], p[j]);
            }
        }
    }

    #[test]
    fn rejects_small_volume() {
        let v = Volume::from_data(vec![0.0f32; 6 * 7 * 7], [6, 7, 7]).unwrap();
        assert!(encode_mind_ssc(&v, &MindConfig::default()).is_err());
    }

    #[test]
    fn constant_volume_is_uniform() {
        let v = Volume::from_data(vec![3.5f64; 343], [7, 7, 7]).unwrap();
        let f = encode_mind_ssc(&v, &MindConfig::default()).unwrap();
        assert_eq!(f.channels(), 12);
        assert!(f.data().iter().all(|&x| x == 1.0));
    }
}
