//! Two-stage optimizer: discrete cost volume with coupled convex smoothing,
//! then Adam refinement; plus warping and field resampling.

mod adam;
mod convex;
mod cost_volume;
mod lcc;
pub(crate) mod sample;
mod warp;

pub use adam::{adam_refine, adam_refine_traced, AdamConfig, Loss};
pub use convex::{coupled_convex, coupled_convex_coarse, coupled_convex_traced, ConvexIteration};
pub use cost_volume::{build_cost_volume, ConvexConfig, CostVolume};
pub use lcc::{lcc_similarity, lcc_with_gradient, LCC_EPS};
pub use warp::{upsample_field, warp_features, warp_labels, warp_volume, Interpolation};

use crate::error::Result;
use crate::volume::{DisplacementField, FeatureVolume};
use crate::Real;

/// Full pipeline: cost volume, coupled convex, Adam refinement.
///
/// The result lives on the feature grid in feature-grid voxels; resample it
/// with [`upsample_field`] to reach the image grid.
pub fn register<T: Real>(
    f: &FeatureVolume<T>,
    m: &FeatureVolume<T>,
    cc: &ConvexConfig,
    ac: &AdamConfig,
) -> Result<DisplacementField<T>> {
    let t0 = std::time::Instant::now();
    let cv = build_cost_volume(f, m, cc)?;
    let t1 = std::time::Instant::now();
    let (coarse, _) = coupled_convex_coarse(&cv, cc)?;
    let t2 = std::time::Instant::now();
    let field = adam_refine(f, m, &coarse, ac)?;
    log::info!(
        "register: cost volume {:.2?}, convex {:.2?}, adam {:.2?}",
        t1 - t0,
        t2 - t1,
        t2.elapsed()
    );
    Ok(field)
}
