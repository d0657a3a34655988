//! Discrete SSD cost volume over a cubic lattice of candidate displacements.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::FeatureVolume;
use crate::Real;

/// Discrete search and coupling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexConfig {
    /// Search radius in feature-grid voxels.
    pub search_radius: usize,
    /// Candidate spacing in feature-grid voxels; must divide the radius.
    pub quantization: usize,
    /// Feature-grid cells per coarse cell.
    pub coarse_stride: usize,
    /// Strictly increasing coupling weights, one alternation each.
    pub coupling_schedule: Vec<f64>,
    /// Gaussian sigma (coarse cells) used to smooth the field between
    /// alternations.
    pub smoothing: f64,
}

impl Default for ConvexConfig {
    fn default() -> Self {
        ConvexConfig {
            search_radius: 8,
            quantization: 2,
            coarse_stride: 2,
            coupling_schedule: vec![1.0, 2.0, 4.0, 8.0],
            smoothing: 1.0,
        }
    }
}

impl ConvexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quantization < 1 || self.search_radius < self.quantization {
            return Err(Error::Config(format!(
                "need search_radius >= quantization >= 1, got R={} q={}",
                self.search_radius, self.quantization
            )));
        }
        if !self.search_radius.is_multiple_of(self.quantization) {
            return Err(Error::Config(format!(
                "search_radius {} is not a multiple of quantization {}",
                self.search_radius, self.quantization
            )));
        }
        if self.coarse_stride < 1 {
            return Err(Error::Config("coarse_stride must be >= 1".into()));
        }
        if self.coupling_schedule.is_empty() {
            return Err(Error::Config("coupling schedule is empty".into()));
        }
        if self
            .coupling_schedule
            .iter()
            .any(|t| !t.is_finite() || *t <= 0.0)
            || self.coupling_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config(
                "coupling schedule must be positive and strictly increasing".into(),
            ));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("smoothing sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Candidate displacements in lexicographic `(dz, dy, dx)` order.
    pub fn candidates(&self) -> Vec<[i32; 3]> {
        let r = self.search_radius as i32;
        let q = self.quantization.max(1);
        let steps: Vec<i32> = (-r..=r).step_by(q).collect();
        let mut out = Vec::with_capacity(steps.len().pow(3));
        for &dz in &steps {
            for &dy in &steps {
                for &dx in &steps {
                    out.push([dz, dy, dx]);
                }
            }
        }
        out
    }
}

/// Per coarse cell dissimilarity of every candidate displacement.
///
/// Costs are stored cell-major: the `K` candidate costs of one cell are
/// contiguous.
#[derive(Debug, Clone)]
pub struct CostVolume<T> {
    costs: Vec<T>,
    candidates: Vec<[i32; 3]>,
    coarse_grid: Grid,
    feature_grid: Grid,
    coarse_stride: usize,
}

impl<T: Real> CostVolume<T> {
    pub fn from_parts(
        costs: Vec<T>,
        candidates: Vec<[i32; 3]>,
        coarse_grid: Grid,
        feature_grid: Grid,
        coarse_stride: usize,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput("empty candidate set".into()));
        }
        if costs.len() != candidates.len() * coarse_grid.len() {
            return Err(Error::Shape(format!(
                "{} costs for {} candidates x {} cells",
                costs.len(),
                candidates.len(),
                coarse_grid.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return Err(Error::InvalidInput("costs must be finite and non-negative".into()));
        }
        Ok(CostVolume {
            costs,
            candidates,
            coarse_grid,
            feature_grid,
            coarse_stride,
        })
    }

    pub fn candidates(&self) -> &[[i32; 3]] {
        &self.candidates
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn coarse_grid(&self) -> &Grid {
        &self.coarse_grid
    }

    pub fn feature_grid(&self) -> &Grid {
        &self.feature_grid
    }

    pub fn coarse_stride(&self) -> usize {
        self.coarse_stride
    }

    /// Costs of all candidates at one coarse cell.
    pub fn cell(&self, cell: usize) -> &[T] {
        let k = self.candidates.len();
        &self.costs[cell * k..(cell + 1) * k]
    }

    pub fn cost(&self, candidate: usize, cell: usize) -> T {
        self.costs[cell * self.candidates.len() + candidate]
    }

    /// Per-cell index of the cheapest candidate.
    pub fn argmin(&self) -> Vec<usize> {
        (0..self.coarse_grid.len())
            .map(|c| argmin_by(&self.candidates, |k| self.cell(c)[k]))
            .collect()
    }
}

/// Index minimizing `score`. Ties go to the shorter displacement, then to
/// the lower index.
pub(crate) fn argmin_by<T: Real>(candidates: &[[i32; 3]], score: impl Fn(usize) -> T) -> usize {
    let norm = |d: &[i32; 3]| d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let mut best = 0;
    let mut best_v = score(0);
    let mut best_n = norm(&candidates[0]);
    for (k, d) in candidates.iter().enumerate().skip(1) {
        let v = score(k);
        if v < best_v || (v == best_v && norm(d) < best_n) {
            best = k;
            best_v = v;
            best_n = norm(d);
        }
    }
    best
}

/// SSD between the fixed token at each coarse cell centre and the moving
/// token at `centre + d` (nearest neighbour, border-clamped) for every
/// candidate `d`.
pub fn build_cost_volume<T: Real>(
    f: &FeatureVolume<T>,
    m: &FeatureVolume<T>,
    cfg: &ConvexConfig,
) -> Result<CostVolume<T>> {
    cfg.validate()?;
    if f.channels() != m.channels() {
        return Err(Error::Shape(format!(
            "channel mismatch: fixed {} vs moving {}",
            f.channels(),
            m.channels()
        )));
    }
    if !f.grid().same_lattice(m.grid()) {
        return Err(Error::Shape("fixed and moving features live on different grids".into()));
    }
    let fg = *f.grid();
    let dims = fg.dims;
    let s = cfg.coarse_stride;
    let coarse = fg.strided(s);
    let candidates = cfg.candidates();
    let k = candidates.len();
    let c = f.channels();
    let n = fg.len();

    // token-major copy of the moving features for contiguous gathers
    let mut m_tok = vec![T::zero(); n * c];
    for ch in 0..c {
        for (i, &v) in m.channel(ch).iter().enumerate() {
            m_tok[i * c + ch] = v;
        }
    }

    let mut costs = vec![T::zero(); coarse.len() * k];
    costs.par_chunks_mut(k).enumerate().for_each(|(cell, out)| {
        let [cz, cy, cx] = coarse.coords(cell);
        let centre = [cz * s, cy * s, cx * s];
        let ci = fg.index(centre[0], centre[1], centre[2]);
        let ftok: Vec<T> = (0..c).map(|ch| f.channel(ch)[ci]).collect();
        for (slot, d) in out.iter_mut().zip(&candidates) {
            let t = |a: usize| (centre[a] as i64 + d[a] as i64).clamp(0, dims[a] as i64 - 1) as usize;
            let mi = fg.index(t(0), t(1), t(2));
            let mt = &m_tok[mi * c..(mi + 1) * c];
            let mut acc = T::zero();
            for (a, b) in ftok.iter().zip(mt) {
                let diff = *a - *b;
                acc = acc + diff * diff;
            }
            *slot = acc;
        }
    });
    CostVolume::from_parts(costs, candidates, coarse, fg, s)
}
