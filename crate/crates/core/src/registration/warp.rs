use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{nearest_index, Resampler, Stencil};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::{DisplacementField, FeatureVolume, Volume};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Resample a displacement field onto another lattice.
///
/// Components are interpolated trilinearly (positions clamped to the source
/// bounds) and rescaled by the source/target spacing ratio, so the physical
/// displacement is preserved.
pub fn upsample_field<T: Real>(
    field: &DisplacementField<T>,
    target: &Grid,
) -> Result<DisplacementField<T>> {
    target.validate()?;
    let src = field.grid();
    if src.same_lattice(target) {
        return Ok(field.clone());
    }
    let r = Resampler::new(src, target);
    let mut data = Vec::with_capacity(3 * target.len());
    for c in 0..3 {
        let scale = T::lit(src.spacing[c] / target.spacing[c]);
        data.extend(r.apply(field.component(c)).into_iter().map(|v| v * scale));
    }
    DisplacementField::new(data, *target)
}

/// Bring `field` onto `grid`, resampling only when the lattices differ.
pub(crate) fn field_on<T: Real>(
    field: &DisplacementField<T>,
    grid: &Grid,
) -> Result<DisplacementField<T>> {
    let f = upsample_field(field, grid)?;
    if f.dims() != grid.dims {
        return Err(Error::Shape(format!(
            "field grid {:?} does not match input grid {:?}",
            f.dims(),
            grid.dims
        )));
    }
    Ok(f)
}

/// Sample positions `x + u(x)` in grid-index coordinates.
fn positions<T: Real>(field: &DisplacementField<T>) -> Vec<[f64; 3]> {
    let g = *field.grid();
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            let [z, y, x] = g.coords(i);
            let u = field.at(i);
            [
                z as f64 + u[0].as_f64(),
                y as f64 + u[1].as_f64(),
                x as f64 + u[2].as_f64(),
            ]
        })
        .collect()
}

fn warp_channel<T: Real>(
    data: &[T],
    dims: [usize; 3],
    pos: &[[f64; 3]],
    interp: Interpolation,
) -> Vec<T> {
    pos.par_iter()
        .map(|&p| match interp {
            Interpolation::Trilinear => Stencil::new(p, dims).sample(data),
            Interpolation::Nearest => data[nearest_index(p, dims)],
        })
        .collect()
}

/// `output(x) = input(x + u(x))` on the volume's voxel grid.
pub fn warp_volume<T: Real>(
    v: &Volume<T>,
    field: &DisplacementField<T>,
    interp: Interpolation,
) -> Result<Volume<T>> {
    let f = field_on(field, &v.grid())?;
    let pos = positions(&f);
    v.with_data(warp_channel(v.data(), v.dims(), &pos, interp))
}

/// Nearest-neighbour warp of a label volume; no new labels can appear.
pub fn warp_labels<T: Real>(v: &Volume<u32>, field: &DisplacementField<T>) -> Result<Volume<u32>> {
    let f = field_on(field, &v.grid())?;
    let pos = positions(&f);
    let dims = v.dims();
    let data = v.data();
    v.with_data(pos.par_iter().map(|&p| data[nearest_index(p, dims)]).collect())
}

/// Warp every channel of a feature volume independently.
pub fn warp_features<T: Real>(
    fv: &FeatureVolume<T>,
    field: &DisplacementField<T>,
    interp: Interpolation,
) -> Result<FeatureVolume<T>> {
    let f = field_on(field, fv.grid())?;
    let pos = positions(&f);
    let dims = fv.dims();
    let mut out = Vec::with_capacity(fv.data().len());
    for c in 0..fv.channels() {
        out.extend(warp_channel(fv.channel(c), dims, &pos, interp));
    }
    let mut w = fv.with_payload(out, fv.channels())?;
    w.explained_variance = fv.explained_variance.clone();
    w.pca_basis = fv.pca_basis.clone();
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_keeps_label_set() {
        let v = Volume::from_fn([6, 6, 6], |z, y, x| ((z + 2 * y + 3 * x) % 4) as u32).unwrap();
        let f = DisplacementField::from_fn(Grid::image([6, 6, 6]), |z, _, x| {
            [0.4 * (x as f64).sin(), 0.7, -0.3 * z as f64]
        })
        .unwrap();
        let w = warp_labels(&v, &f).unwrap();
        assert!(w.data().iter().all(|l| *l < 4));
    }

    #[test]
    fn coarse_field_is_resampled() {
        let v = Volume::from_fn([8, 8, 8], |_, _, x| x as f64).unwrap();
        let coarse = Grid::new([4, 4, 4], [2.0; 3], [0.0; 3]).unwrap();
        // half a coarse voxel == one image voxel
        let f = DisplacementField::constant(coarse, [0.0, 0.0, 0.5]);
        let w = warp_volume(&v, &f, Interpolation::Trilinear).unwrap();
        assert_eq!(w.get(3, 3, 3), 4.0);
        assert_eq!(w.get(3, 3, 7), 7.0);
    }
}
