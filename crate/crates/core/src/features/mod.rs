//! Registration-ready feature volumes: native MIND-SSC descriptors, slice-gap
//! densification of externally encoded features, and joint PCA reduction.

mod mind;
mod pca;
mod slice_gap;

pub use mind::{encode_mind_ssc, ssc_pairs, MindConfig, MIND_CHANNELS};
pub(crate) use mind::line_starts;
pub use pca::{fit_pca, joint_pca, PcaBasis, PcaConfig, PcaMode};
pub use slice_gap::interpolate_slice_gap;
