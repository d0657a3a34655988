//! Training-free deformable 3D image registration on dense feature volumes.
//!
//! A moving volume is aligned to a fixed volume by matching per-voxel
//! descriptors. Descriptors come either from the built-in MIND-SSC encoder or
//! from an external encoder that exports FTV tensors. Optimization runs in two
//! stages: a discrete SSD cost volume regularized by coupled convex
//! alternation, followed by Adam refinement of a coarse control field under a
//! feature-wise local cross-correlation loss.
//!
//! All numerical code is generic over the scalar type through [`Real`]; the
//! aliases below fix the common instantiations. Arrays are stored C-order with
//! spatial axes `(z, y, x)` and channels leading.
//!
//! # Determinism
//!
//! Data-parallel loops write disjoint outputs and every reduction runs in a
//! fixed order, so all stages (including [`register`]) are bitwise
//! reproducible for a given input, configuration and seed, independent of the
//! number of worker threads.

pub mod ensemble;
pub mod error;
pub mod features;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod registration;
pub mod volume;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use ensemble::{chain_registrations, compose_fields, mean_fields};
pub use error::{Error, Result};
pub use features::{
    encode_mind_ssc, interpolate_slice_gap, joint_pca, MindConfig, PcaBasis, PcaConfig, PcaMode,
};
pub use grid::{Axis, Grid};
pub use io::{
    read_feature_tensor, read_labels, read_landmarks, read_volume, write_feature_tensor,
    write_labels, write_volume, FeatureTensor,
};
pub use metrics::{dice, sd_log_jacobian, tre, tre30, DiceReport, JacobianReport, TreReport};
pub use registration::{
    adam_refine, build_cost_volume, coupled_convex, lcc_similarity, register, upsample_field,
    warp_features, warp_labels, warp_volume, AdamConfig, ConvexConfig, CostVolume, Interpolation,
    Loss,
};
pub use volume::{DisplacementField, FeatureVolume, LandmarkSet, Provenance, SliceLayout, Volume};

/// Floating-point scalar used throughout the engine.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Intensity volume in single precision (the on-disk precision).
pub type Volume3D = Volume<f32>;
/// Integer label volume (segmentations).
pub type LabelVolume = Volume<u32>;

pub type FeatureVolumeF32 = FeatureVolume<f32>;
pub type FeatureVolumeF64 = FeatureVolume<f64>;
pub type DisplacementFieldF32 = DisplacementField<f32>;
pub type DisplacementFieldF64 = DisplacementField<f64>;
pub type CostVolumeF32 = CostVolume<f32>;
pub type CostVolumeF64 = CostVolume<f64>;
