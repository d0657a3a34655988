//! Feature-wise local cross-correlation.
//!
//! For every channel and every voxel `p`, the squared correlation coefficient
//! of `f` and `m` over the cube of half-width `w` around `p` is computed from
//! box sums. Windows are truncated at the volume border (only in-bounds voxels
//! take part). A window whose variance product falls below [`LCC_EPS`]
//! contributes zero, both to the value and to the gradient. The result is the
//! mean over voxels and channels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::FeatureVolume;
use crate::Real;

/// Lower bound on the variance product of a window.
pub const LCC_EPS: f64 = 1e-5;

/// Sum over the truncated cube of half-width `w` around every voxel.
pub(crate) fn box_sum<T: Real>(data: &[T], dims: [usize; 3], w: usize) -> Vec<T> {
    let [d, h, wd] = dims;
    let plane = h * wd;
    // x: sliding sums along each row
    let mut a = vec![T::zero(); data.len()];
    for (src, dst) in data.chunks_exact(wd).zip(a.chunks_exact_mut(wd)) {
        for (j, o) in dst.iter_mut().enumerate() {
            let lo = j.saturating_sub(w);
            let hi = (j + w).min(wd - 1);
            *o = src[lo..=hi].iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }
    // y: add whole rows
    let mut b = vec![T::zero(); data.len()];
    for z in 0..d {
        let src = &a[z * plane..(z + 1) * plane];
        let dst = &mut b[z * plane..(z + 1) * plane];
        for y in 0..h {
            let out = &mut dst[y * wd..(y + 1) * wd];
            for yy in y.saturating_sub(w)..=(y + w).min(h - 1) {
                for (o, &v) in out.iter_mut().zip(&src[yy * wd..(yy + 1) * wd]) {
                    *o = *o + v;
                }
            }
        }
    }
    // z: add whole planes
    let mut c = vec![T::zero(); data.len()];
    for z in 0..d {
        let out = &mut c[z * plane..(z + 1) * plane];
        for zz in z.saturating_sub(w)..=(z + w).min(d - 1) {
            for (o, &v) in out.iter_mut().zip(&b[zz * plane..(zz + 1) * plane]) {
                *o = *o + v;
            }
        }
    }
    c
}

/// Number of in-bounds voxels in each truncated window.
fn window_counts<T: Real>(dims: [usize; 3], w: usize) -> Vec<T> {
    let span = |j: usize, n: usize| ((j + w).min(n - 1) - j.saturating_sub(w) + 1) as f64;
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                out.push(T::lit(
                    span(z, dims[0]) * span(y, dims[1]) * span(x, dims[2]),
                ));
            }
        }
    }
    out
}

/// Sum of squared local correlations of one channel and, when requested,
/// its gradient with respect to `m`.
fn channel_lcc<T: Real>(
    f: &[T],
    m: &[T],
    counts: &[T],
    dims: [usize; 3],
    w: usize,
    want_grad: bool,
) -> (f64, Option<Vec<T>>) {
    let eps = T::lit(LCC_EPS);
    let ff: Vec<T> = f.iter().map(|&a| a * a).collect();
    let mm: Vec<T> = m.iter().map(|&a| a * a).collect();
    let fm: Vec<T> = f.iter().zip(m).map(|(&a, &b)| a * b).collect();
    let s_f = box_sum(f, dims, w);
    let s_m = box_sum(m, dims, w);
    let s_ff = box_sum(&ff, dims, w);
    let s_mm = box_sum(&mm, dims, w);
    let s_fm = box_sum(&fm, dims, w);

    let n = f.len();
    let mut total = 0.0;
    let (mut a, mut ar, mut af, mut arm) = if want_grad {
        (
            vec![T::zero(); n],
            vec![T::zero(); n],
            vec![T::zero(); n],
            vec![T::zero(); n],
        )
    } else {
        (Vec::new(), Vec::new(), Vec::new(), Vec::new())
    };
    for p in 0..n {
        let cnt = counts[p];
        let cross = s_fm[p] - s_f[p] * s_m[p] / cnt;
        let vf = s_ff[p] - s_f[p] * s_f[p] / cnt;
        let vm = s_mm[p] - s_m[p] * s_m[p] / cnt;
        let den = vf * vm;
        if !(den >= eps) {
            continue;
        }
        total += (cross * cross / den).as_f64();
        if want_grad {
            let ap = (cross + cross) / den;
            let rp = cross / vm;
            a[p] = ap;
            ar[p] = ap * rp;
            af[p] = ap * s_f[p] / cnt;
            arm[p] = ap * rp * s_m[p] / cnt;
        }
    }
    if !want_grad {
        return (total, None);
    }
    let sa = box_sum(&a, dims, w);
    let sar = box_sum(&ar, dims, w);
    let saf = box_sum(&af, dims, w);
    let sarm = box_sum(&arm, dims, w);
    let grad = (0..n)
        .map(|j| (sa[j] * f[j] - sar[j] * m[j]) - (saf[j] - sarm[j]))
        .collect();
    (total, Some(grad))
}

fn check_pair<T: Real>(f: &FeatureVolume<T>, m: &FeatureVolume<T>, window: usize) -> Result<()> {
    if window < 1 {
        return Err(Error::Config("LCC window half-width must be >= 1".into()));
    }
    if f.channels() != m.channels() || f.dims() != m.dims() {
        return Err(Error::Shape(format!(
            "LCC inputs differ in shape: {}x{:?} vs {}x{:?}",
            f.channels(),
            f.dims(),
            m.channels(),
            m.dims()
        )));
    }
    Ok(())
}

pub(crate) fn lcc_raw<T: Real>(
    f: &[T],
    m: &[T],
    channels: usize,
    dims: [usize; 3],
    w: usize,
    want_grad: bool,
) -> (f64, Option<Vec<T>>) {
    let n: usize = dims.iter().product();
    let counts = window_counts::<T>(dims, w);
    let per_channel: Vec<(f64, Option<Vec<T>>)> = (0..channels)
        .into_par_iter()
        .map(|c| {
            let r = c * n..(c + 1) * n;
            channel_lcc(&f[r.clone()], &m[r], &counts, dims, w, want_grad)
        })
        .collect();
    let norm = (channels * n) as f64;
    let value = per_channel.iter().map(|(v, _)| v).sum::<f64>() / norm;
    let grad = want_grad.then(|| {
        let scale = T::lit(1.0 / norm);
        per_channel
            .into_iter()
            .flat_map(|(_, g)| g.unwrap_or_default())
            .map(|g| g * scale)
            .collect()
    });
    (value, grad)
}

/// Mean squared local correlation of `f` and `m_warped`, in `[0, 1]`.
pub fn lcc_similarity<T: Real>(
    f: &FeatureVolume<T>,
    m_warped: &FeatureVolume<T>,
    window: usize,
) -> Result<f64> {
    check_pair(f, m_warped, window)?;
    let (v, _) = lcc_raw(f.data(), m_warped.data(), f.channels(), f.dims(), window, false);
    Ok(v.clamp(0.0, 1.0))
}

/// Unclamped mean local correlation and its gradient with respect to every
/// value of `m` (channel-first, same layout as the feature data).
pub fn lcc_with_gradient<T: Real>(
    f: &FeatureVolume<T>,
    m: &FeatureVolume<T>,
    window: usize,
) -> Result<(f64, Vec<T>)> {
    check_pair(f, m, window)?;
    let (v, g) = lcc_raw(f.data(), m.data(), f.channels(), f.dims(), window, true);
    Ok((v, g.unwrap_or_default()))
}
