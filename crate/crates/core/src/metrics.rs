//! Evaluation metrics: target registration error, Dice overlap, and the
//! spread of the log Jacobian determinant.
//!
//! TRE convention: the fixed landmark is pushed through the field
//! (`p_f + u(p_f)`) and compared with the moving landmark; the difference is
//! converted to millimetres with the moving-image spacing.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::registration::{sample::Stencil, warp_labels};
use crate::volume::{DisplacementField, LandmarkSet, Volume};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreReport {
    pub mean_mm: f64,
    pub per_landmark_mm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiceReport {
    pub per_label: BTreeMap<u32, f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub sd_log_jacobian: f64,
    /// Voxels whose determinant was clamped to the floor.
    pub folded_voxel_count: usize,
}

/// Floor applied to Jacobian determinants before the logarithm.
pub const JACOBIAN_FLOOR: f64 = 1e-6;

fn landmark_errors<T: Real>(lm: &LandmarkSet, field: Option<&DisplacementField<T>>) -> Vec<f64> {
    (0..lm.len())
        .map(|i| {
            let pf = lm.fixed[i];
            let mut warped = pf;
            if let Some(u) = field {
                let g = u.grid();
                let st = Stencil::<T>::new(g.from_image(pf), g.dims);
                for a in 0..3 {
                    warped[a] += st.sample(u.component(a)).as_f64() * g.spacing[a];
                }
            }
            (0..3)
                .map(|a| ((warped[a] - lm.moving[i][a]) * lm.spacing_moving[a]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-landmark and mean target registration error in millimetres. `field`
/// lives on the fixed image grid (or a lattice of it).
pub fn tre<T: Real>(lm: &LandmarkSet, field: &DisplacementField<T>) -> Result<TreReport> {
    if lm.is_empty() {
        return Err(Error::InvalidInput("landmark set is empty".into()));
    }
    let per = landmark_errors(lm, Some(field));
    Ok(TreReport {
        mean_mm: mean(&per),
        per_landmark_mm: per,
    })
}

/// Indices of the `ceil(0.3 N)` pairs with the largest initial error, ties
/// broken by index.
pub fn tre30_subset(lm: &LandmarkSet) -> Vec<usize> {
    let initial = landmark_errors::<f64>(lm, None);
    let mut order: Vec<usize> = (0..lm.len()).collect();
    order.sort_by(|&a, &b| initial[b].total_cmp(&initial[a]).then(a.cmp(&b)));
    order.truncate((3 * lm.len()).div_ceil(10));
    order
}

/// Mean TRE over the 30% of pairs that start furthest apart.
pub fn tre30<T: Real>(lm: &LandmarkSet, field: &DisplacementField<T>) -> Result<f64> {
    let report = tre(lm, field)?;
    let subset: Vec<f64> = tre30_subset(lm)
        .into_iter()
        .map(|i| report.per_landmark_mm[i])
        .collect();
    Ok(mean(&subset))
}

/// Dice overlap per nonzero label after warping `seg_moving` with nearest
/// neighbour interpolation.
pub fn dice<T: Real>(
    seg_fixed: &Volume<u32>,
    seg_moving: &Volume<u32>,
    field: &DisplacementField<T>,
) -> Result<DiceReport> {
    if seg_fixed.dims() != seg_moving.dims() {
        return Err(Error::Shape(format!(
            "segmentations differ in shape: {:?} vs {:?}",
            seg_fixed.dims(),
            seg_moving.dims()
        )));
    }
    let warped = warp_labels(seg_moving, field)?;
    let labels: BTreeSet<u32> = seg_fixed
        .data()
        .iter()
        .chain(warped.data())
        .copied()
        .filter(|&l| l != 0)
        .collect();
    if labels.is_empty() {
        return Err(Error::InvalidInput("no nonzero labels in either segmentation".into()));
    }
    let mut counts: BTreeMap<u32, [usize; 3]> = labels.iter().map(|&l| (l, [0; 3])).collect();
    for (&a, &b) in seg_fixed.data().iter().zip(warped.data()) {
        if a != 0 {
            counts.get_mut(&a).expect("label collected")[0] += 1;
        }
        if b != 0 {
            counts.get_mut(&b).expect("label collected")[1] += 1;
        }
        if a != 0 && a == b {
            counts.get_mut(&a).expect("label collected")[2] += 1;
        }
    }
    let per_label: BTreeMap<u32, f64> = counts
        .into_iter()
        .map(|(l, [na, nb, both])| (l, 2.0 * both as f64 / (na + nb) as f64))
        .collect();
    let mean = per_label.values().sum::<f64>() / per_label.len() as f64;
    Ok(DiceReport { per_label, mean })
}

fn derivative(data: &[f64], dims: [usize; 3], idx: [usize; 3], axis: usize) -> f64 {
    let n = dims[axis];
    let at = |k: usize| {
        let mut p = idx;
        p[axis] = k;
        data[(p[0] * dims[1] + p[1]) * dims[2] + p[2]]
    };
    let i = idx[axis];
    if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        (at(i + 1) - at(i - 1)) * 0.5
    }
}

/// Standard deviation of `log det(I + grad u)` over all voxels.
pub fn sd_log_jacobian<T: Real>(field: &DisplacementField<T>) -> Result<JacobianReport> {
    let dims = field.dims();
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidInput(format!(
            "Jacobian needs at least 2 voxels per axis, got {dims:?}"
        )));
    }
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| field.component(c).iter().map(|v| v.as_f64()).collect())
        .collect();
    let g = field.grid();
    let mut logs = Vec::with_capacity(g.len());
    let mut folded = 0;
    for i in 0..g.len() {
        let idx = g.coords(i);
        let j: [[f64; 3]; 3] = std::array::from_fn(|c| {
            std::array::from_fn(|a| {
                derivative(&comps[c], dims, idx, a) + if a == c { 1.0 } else { 0.0 }
            })
        });
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if det < JACOBIAN_FLOOR {
            folded += 1;
        }
        logs.push(det.max(JACOBIAN_FLOOR).ln());
    }
    let m = mean(&logs);
    let var = logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / logs.len() as f64;
    Ok(JacobianReport {
        sd_log_jacobian: var.sqrt(),
        folded_voxel_count: folded,
    })
}
