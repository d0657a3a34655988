//! Interpolation primitives shared by warping, resampling and the metrics.
//!
//! All samplers clamp positions to the grid bounds. Outside the bounds the
//! derivative along the clamped axis is zero.

use crate::features::line_starts;
use crate::grid::Grid;
use crate::Real;

#[inline]
pub(crate) fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    a + (b - a) * t
}

/// Interpolation taps along one axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap<T> {
    pub i0: usize,
    pub i1: usize,
    pub t: T,
    /// Position lay outside `[0, n-1]` and was clamped.
    pub clamped: bool,
}

#[inline]
pub(crate) fn tap<T: Real>(p: f64, n: usize) -> Tap<T> {
    let hi = (n - 1) as f64;
    let clamped = !(0.0..=hi).contains(&p);
    let q = p.clamp(0.0, hi);
    let i0 = (q.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    Tap {
        i0,
        i1,
        t: T::lit(q - i0 as f64),
        clamped,
    }
}

/// Trilinear sampling stencil at one continuous `(z, y, x)` grid position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil<T> {
    pub z: Tap<T>,
    pub y: Tap<T>,
    pub x: Tap<T>,
    dims: [usize; 3],
}

impl<T: Real> Stencil<T> {
    #[inline]
    pub fn new(p: [f64; 3], dims: [usize; 3]) -> Self {
        Stencil {
            z: tap(p[0], dims[0]),
            y: tap(p[1], dims[1]),
            x: tap(p[2], dims[2]),
            dims,
        }
    }

    #[inline]
    fn at(&self, data: &[T], z: usize, y: usize, x: usize) -> T {
        data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    #[inline]
    fn plane(&self, data: &[T], z: usize) -> T {
        let (y, x) = (&self.y, &self.x);
        let a = lerp(self.at(data, z, y.i0, x.i0), self.at(data, z, y.i0, x.i1), x.t);
        let b = lerp(self.at(data, z, y.i1, x.i0), self.at(data, z, y.i1, x.i1), x.t);
        lerp(a, b, y.t)
    }

    #[inline]
    pub fn sample(&self, data: &[T]) -> T {
        lerp(self.plane(data, self.z.i0), self.plane(data, self.z.i1), self.z.t)
    }

    /// Sample value and its partial derivatives with respect to the position.
    #[inline]
    pub fn sample_with_gradient(&self, data: &[T]) -> (T, [T; 3]) {
        let (z, y, x) = (&self.z, &self.y, &self.x);
        let c = |zz, yy, xx| self.at(data, zz, yy, xx);
        let c000 = c(z.i0, y.i0, x.i0);
        let c001 = c(z.i0, y.i0, x.i1);
        let c010 = c(z.i0, y.i1, x.i0);
        let c011 = c(z.i0, y.i1, x.i1);
        let c100 = c(z.i1, y.i0, x.i0);
        let c101 = c(z.i1, y.i0, x.i1);
        let c110 = c(z.i1, y.i1, x.i0);
        let c111 = c(z.i1, y.i1, x.i1);

        let a00 = lerp(c000, c001, x.t);
        let a01 = lerp(c010, c011, x.t);
        let a10 = lerp(c100, c101, x.t);
        let a11 = lerp(c110, c111, x.t);
        let b0 = lerp(a00, a01, y.t);
        let b1 = lerp(a10, a11, y.t);
        let value = lerp(b0, b1, z.t);

        let zero = T::zero();
        let dz = if z.clamped || z.i0 == z.i1 { zero } else { b1 - b0 };
        let dy = if y.clamped || y.i0 == y.i1 {
            zero
        } else {
            lerp(a01 - a00, a11 - a10, z.t)
        };
        let dx = if x.clamped || x.i0 == x.i1 {
            zero
        } else {
            let e0 = lerp(c001 - c000, c011 - c010, y.t);
            let e1 = lerp(c101 - c100, c111 - c110, y.t);
            lerp(e0, e1, z.t)
        };
        (value, [dz, dy, dx])
    }
}

/// Nearest-neighbour index of a continuous position, clamped to the grid.
#[inline]
pub(crate) fn nearest_index(p: [f64; 3], dims: [usize; 3]) -> usize {
    let r = |v: f64, n: usize| (v.round().clamp(0.0, (n - 1) as f64)) as usize;
    (r(p[0], dims[0]) * dims[1] + r(p[1], dims[1])) * dims[2] + r(p[2], dims[2])
}

/// Linear resampling map between two lattices along one axis.
#[derive(Debug, Clone)]
pub(crate) struct AxisMap<T> {
    taps: Vec<Tap<T>>,
}

impl<T: Real> AxisMap<T> {
    pub fn new(src: &Grid, dst: &Grid, axis: usize) -> Self {
        let n = src.dims[axis];
        let taps = (0..dst.dims[axis])
            .map(|j| {
                let p = dst.origin[axis] + j as f64 * dst.spacing[axis];
                tap((p - src.origin[axis]) / src.spacing[axis], n)
            })
            .collect();
        AxisMap { taps }
    }
}

fn stride(dims: [usize; 3], axis: usize) -> usize {
    match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    }
}

/// Separable trilinear resampling of scalar channels from one lattice to
/// another. The transpose is available for gradient back-propagation.
#[derive(Debug, Clone)]
pub(crate) struct Resampler<T> {
    src: [usize; 3],
    dst: [usize; 3],
    maps: [AxisMap<T>; 3],
}

impl<T: Real> Resampler<T> {
    pub fn new(src: &Grid, dst: &Grid) -> Self {
        Resampler {
            src: src.dims,
            dst: dst.dims,
            maps: [
                AxisMap::new(src, dst, 0),
                AxisMap::new(src, dst, 1),
                AxisMap::new(src, dst, 2),
            ],
        }
    }

    fn forward_axis(&self, input: &[T], in_dims: [usize; 3], axis: usize) -> (Vec<T>, [usize; 3]) {
        let mut out_dims = in_dims;
        out_dims[axis] = self.dst[axis];
        let mut out = vec![T::zero(); out_dims.iter().product()];
        let (si, so) = (stride(in_dims, axis), stride(out_dims, axis));
        let starts_in = line_starts(in_dims, axis);
        let starts_out = line_starts(out_dims, axis);
        for (&a, &b) in starts_in.iter().zip(&starts_out) {
            for (j, tp) in self.maps[axis].taps.iter().enumerate() {
                out[b + j * so] = lerp(input[a + tp.i0 * si], input[a + tp.i1 * si], tp.t);
            }
        }
        (out, out_dims)
    }

    fn adjoint_axis(&self, grad: &[T], out_dims: [usize; 3], axis: usize) -> (Vec<T>, [usize; 3]) {
        let mut in_dims = out_dims;
        in_dims[axis] = self.src[axis];
        let mut acc = vec![T::zero(); in_dims.iter().product()];
        let (si, so) = (stride(in_dims, axis), stride(out_dims, axis));
        let starts_in = line_starts(in_dims, axis);
        let starts_out = line_starts(out_dims, axis);
        for (&a, &b) in starts_in.iter().zip(&starts_out) {
            for (j, tp) in self.maps[axis].taps.iter().enumerate() {
                let g = grad[b + j * so];
                acc[a + tp.i0 * si] = acc[a + tp.i0 * si] + g * (T::one() - tp.t);
                acc[a + tp.i1 * si] = acc[a + tp.i1 * si] + g * tp.t;
            }
        }
        (acc, in_dims)
    }

    /// Resample one scalar channel from the source to the target lattice.
    pub fn apply(&self, input: &[T]) -> Vec<T> {
        let (a, d) = self.forward_axis(input, self.src, 2);
        let (b, d) = self.forward_axis(&a, d, 1);
        self.forward_axis(&b, d, 0).0
    }

    /// Transpose of [`Resampler::apply`].
    pub fn adjoint(&self, grad: &[T]) -> Vec<T> {
        let (a, d) = self.adjoint_axis(grad, self.dst, 0);
        let (b, d) = self.adjoint_axis(&a, d, 1);
        self.adjoint_axis(&b, d, 2).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_exact_on_linear_function() {
        let dims = [4, 5, 6];
        let g = Grid::image(dims);
        let data: Vec<f64> = (0..g.len())
            .map(|i| {
                let [z, y, x] = g.coords(i);
                1.0 + 2.0 * z as f64 - 0.5 * y as f64 + 0.25 * x as f64
            })
            .collect();
        let s = Stencil::<f64>::new([1.3, 2.7, 4.1], dims);
        let (v, d) = s.sample_with_gradient(&data);
        assert!((v - (1.0 + 2.6 - 1.35 + 1.025)).abs() < 1e-12);
        assert!((d[0] - 2.0).abs() < 1e-12);
        assert!((d[1] + 0.5).abs() < 1e-12);
        assert!((d[2] - 0.25).abs() < 1e-12);
        assert_eq!(s.sample(&data), v);
    }

    #[test]
    fn resampler_adjoint_identity() {
        // <R x, y> == <x, R^T y>
        let src = Grid::new([3, 4, 5], [2.0; 3], [0.0; 3]).unwrap();
        let dst = Grid::image([6, 8, 9]);
        let r = Resampler::<f64>::new(&src, &dst);
        let x: Vec<f64> = (0..src.len()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let y: Vec<f64> = (0..dst.len()).map(|i| ((i * 5) % 11) as f64 - 5.0).collect();
        let rx = r.apply(&x);
        let rty = r.adjoint(&y);
        let lhs: f64 = rx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&rty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
