use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::volume::FeatureVolume;
use crate::Real;

/// Densify features that were encoded only on every `gap`-th slice of `axis`.
///
/// The input holds encoded slices `0, gap, 2*gap, ...` stacked contiguously.
/// Skipped slices are filled by channel-wise linear interpolation between the
/// two nearest encoded slices; slices past the last encoded one replicate it.
/// `extent` is the full slice count to restore; when `None` it comes from the
/// volume's slice layout, or defaults to `(n_encoded - 1) * gap + 1`.
pub fn interpolate_slice_gap<T: Real>(
    fv: &FeatureVolume<T>,
    gap: usize,
    axis: Axis,
    extent: Option<usize>,
) -> Result<FeatureVolume<T>> {
    if gap < 1 {
        return Err(Error::InvalidInput("slice gap must be >= 1".into()));
    }
    let a = axis.index();
    let dims = fv.dims();
    let encoded = dims[a];
    let extent = extent
        .or_else(|| {
            fv.slice_layout
                .filter(|l| l.axis == axis && l.gap == gap)
                .map(|l| l.extent)
        })
        .unwrap_or((encoded - 1) * gap + 1);
    if extent == 0 || extent.div_ceil(gap) != encoded {
        return Err(Error::Shape(format!(
            "{encoded} encoded slices with gap {gap} cannot cover an extent of {extent}"
        )));
    }

    let mut out_grid: Grid = *fv.grid();
    out_grid.dims[a] = extent;
    out_grid.spacing[a] /= gap as f64;
    let channels = fv.channels();
    let n_out = out_grid.len();
    let mut out = vec![T::zero(); channels * n_out];
    let gap_t = T::lit(gap as f64);

    for c in 0..channels {
        let src = fv.channel(c);
        let dst = &mut out[c * n_out..(c + 1) * n_out];
        for (o, v) in dst.iter_mut().enumerate() {
            let mut p = out_grid.coords(o);
            let s = p[a];
            let k = s / gap;
            let r = s % gap;
            p[a] = k;
            let lo = src[fv.grid().index(p[0], p[1], p[2])];
            *v = if r == 0 || k + 1 >= encoded {
                lo
            } else {
                p[a] = k + 1;
                let hi = src[fv.grid().index(p[0], p[1], p[2])];
                // weighted form stays exact on integer ramps
                (lo * T::lit((gap - r) as f64) + hi * T::lit(r as f64)) / gap_t
            };
        }
    }

    let mut result = FeatureVolume::new(out, channels, out_grid, fv.provenance)?;
    result.slice_layout = None;
    result.explained_variance = fv.explained_variance.clone();
    result.pca_basis = fv.pca_basis.clone();
    Ok(result)
}
