//! Combining the displacement fields of two registration runs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::registration::sample::Stencil;
use crate::volume::DisplacementField;
use crate::Real;

fn same_grid<T: Real>(a: &DisplacementField<T>, b: &DisplacementField<T>) -> Result<()> {
    if !a.grid().same_lattice(b.grid()) {
        return Err(Error::Shape(format!(
            "fields live on different grids: {:?} vs {:?}",
            a.grid(),
            b.grid()
        )));
    }
    Ok(())
}

/// Component-wise mean of two fields on the same grid.
pub fn mean_fields<T: Real>(
    a: &DisplacementField<T>,
    b: &DisplacementField<T>,
) -> Result<DisplacementField<T>> {
    same_grid(a, b)?;
    let half = T::lit(0.5);
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x + y) * half)
        .collect();
    DisplacementField::new(data, *a.grid())
}

/// `u(x) = first(x) + second(x + first(x))`, with `second` sampled
/// trilinearly and clamped to the grid.
///
/// Warping by the result samples the input where warping first by `second`
/// and then by `first` would: `warp(v, compose(a, b)) == warp(warp(v, b), a)`.
/// See [`chain_registrations`] for the order produced by running two
/// registrations one after the other.
pub fn compose_fields<T: Real>(
    first: &DisplacementField<T>,
    second: &DisplacementField<T>,
) -> Result<DisplacementField<T>> {
    same_grid(first, second)?;
    let g = *first.grid();
    let n = g.len();
    let dims = g.dims;
    let composed: Vec<[T; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let [z, y, x] = g.coords(i);
            let u1 = first.at(i);
            let p = [
                z as f64 + u1[0].as_f64(),
                y as f64 + u1[1].as_f64(),
                x as f64 + u1[2].as_f64(),
            ];
            let st = Stencil::<T>::new(p, dims);
            std::array::from_fn(|c| u1[c] + st.sample(second.component(c)))
        })
        .collect();
    let mut data = vec![T::zero(); 3 * n];
    for (i, u) in composed.iter().enumerate() {
        for c in 0..3 {
            data[c * n + i] = u[c];
        }
    }
    DisplacementField::new(data, g)
}

/// Total field of a sequential pipeline: `earlier` registered the original
/// pair, the moving volume was warped by it, and `later` registered the fixed
/// volume to that warped result.
pub fn chain_registrations<T: Real>(
    earlier: &DisplacementField<T>,
    later: &DisplacementField<T>,
) -> Result<DisplacementField<T>> {
    compose_fields(later, earlier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn mismatched_grids_rejected() {
        let a = DisplacementField::<f64>::zeros(Grid::image([2, 2, 2]));
        let b = DisplacementField::<f64>::zeros(Grid::image([2, 2, 3]));
        assert!(mean_fields(&a, &b).is_err());
        assert!(compose_fields(&a, &b).is_err());
    }
}
