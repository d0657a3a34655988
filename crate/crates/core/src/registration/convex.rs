//! Coupled convex optimization: alternate a per-cell discrete argmin of
//! `cost(d) + theta * |d - d_smooth|^2` with Gaussian smoothing of the field,
//! raising `theta` along the schedule.

use rayon::prelude::*;

use super::cost_volume::{argmin_by, ConvexConfig, CostVolume};
use super::warp::upsample_field;
use crate::error::Result;
use crate::features::line_starts;
use crate::grid::Grid;
use crate::volume::DisplacementField;
use crate::Real;

/// Objective totals of one alternation, summed over all cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexIteration {
    pub theta: f64,
    /// Objective of the incoming field against the new smoothed field.
    pub objective_before: f64,
    /// Objective after the argmin step.
    pub objective_after: f64,
    /// Largest per-cell increase (never positive).
    pub max_cell_increase: f64,
    pub changed_cells: usize,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian smoothing with replicated borders.
pub(crate) fn smooth<T: Real>(data: &[T], dims: [usize; 3], sigma: f64) -> Vec<T> {
    let kernel: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::lit).collect();
    if kernel.len() == 1 {
        return data.to_vec();
    }
    let r = (kernel.len() / 2) as i64;
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let n = dims[axis];
        let stride = match axis {
            0 => dims[1] * dims[2],
            1 => dims[2],
            _ => 1,
        };
        let mut next = vec![T::zero(); cur.len()];
        for start in line_starts(dims, axis) {
            for j in 0..n {
                let mut acc = T::zero();
                for (o, &w) in kernel.iter().enumerate() {
                    let i = (j as i64 + o as i64 - r).clamp(0, n as i64 - 1) as usize;
                    acc = acc + w * cur[start + i * stride];
                }
                next[start + j * stride] = acc;
            }
        }
        cur = next;
    }
    cur
}

/// Coupled convex optimization on a cost volume, returning the final field
/// upsampled to the feature grid (units: feature-grid voxels).
pub fn coupled_convex<T: Real>(
    cv: &CostVolume<T>,
    cfg: &ConvexConfig,
) -> Result<DisplacementField<T>> {
    coupled_convex_traced(cv, cfg).map(|(f, _)| f)
}

/// As [`coupled_convex`], also returning the per-alternation objectives and
/// the coarse field before upsampling.
pub fn coupled_convex_traced<T: Real>(
    cv: &CostVolume<T>,
    cfg: &ConvexConfig,
) -> Result<(DisplacementField<T>, Vec<ConvexIteration>)> {
    let (coarse, trace) = coupled_convex_coarse(cv, cfg)?;
    Ok((upsample_field(&coarse, cv.feature_grid())?, trace))
}

/// Coarse-grid result of the alternation (units: coarse-grid voxels).
pub fn coupled_convex_coarse<T: Real>(
    cv: &CostVolume<T>,
    cfg: &ConvexConfig,
) -> Result<(DisplacementField<T>, Vec<ConvexIteration>)> {
    cfg.validate()?;
    let grid: Grid = *cv.coarse_grid();
    let dims = grid.dims;
    let n = grid.len();
    let cands = cv.candidates();
    let cand_t: Vec<[T; 3]> = cands
        .iter()
        .map(|d| [T::lit(d[0] as f64), T::lit(d[1] as f64), T::lit(d[2] as f64)])
        .collect();

    let mut best: Vec<usize> = cv.argmin();
    let mut trace = Vec::with_capacity(cfg.coupling_schedule.len());

    for &theta in &cfg.coupling_schedule {
        let th = T::lit(theta);
        let mut comps = Vec::with_capacity(3);
        for a in 0..3 {
            let cur: Vec<T> = best.iter().map(|&k| cand_t[k][a]).collect();
            comps.push(smooth(&cur, dims, cfg.smoothing));
        }
        let objective = |cell: usize, k: usize| -> T {
            let d = &cand_t[k];
            let mut pen = T::zero();
            for a in 0..3 {
                let e = d[a] - comps[a][cell];
                pen = pen + e * e;
            }
            cv.cost(k, cell) + th * pen
        };
        let updates: Vec<(usize, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|cell| {
                let k = argmin_by(cands, |k| objective(cell, k));
                (
                    k,
                    objective(cell, best[cell]).as_f64(),
                    objective(cell, k).as_f64(),
                )
            })
            .collect();
        let mut it = ConvexIteration {
            theta,
            objective_before: 0.0,
            objective_after: 0.0,
            max_cell_increase: f64::NEG_INFINITY,
            changed_cells: 0,
        };
        for (cell, &(k, before, after)) in updates.iter().enumerate() {
            debug_assert!(after <= before, "argmin step increased the objective");
            it.objective_before += before;
            it.objective_after += after;
            it.max_cell_increase = it.max_cell_increase.max(after - before);
            if k != best[cell] {
                it.changed_cells += 1;
                best[cell] = k;
            }
        }
        log::debug!(
            "coupled convex theta={theta}: objective {:.4} -> {:.4}, {} cells changed",
            it.objective_before,
            it.objective_after,
            it.changed_cells
        );
        trace.push(it);
    }

    let s = T::lit(cv.coarse_stride() as f64);
    let mut data = vec![T::zero(); 3 * n];
    for (cell, &k) in best.iter().enumerate() {
        for a in 0..3 {
            data[a * n + cell] = cand_t[k][a] / s;
        }
    }
    Ok((DisplacementField::new(data, grid)?, trace))
}
