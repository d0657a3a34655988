//! JSON run configuration. Every key is optional; missing keys keep the
//! engine defaults and command-line flags override whatever the file sets.

use std::path::{Path, PathBuf};

use anyhow::Context;
use featreg::{AdamConfig, ConvexConfig, Loss, MindConfig, PcaConfig, PcaMode};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub fixed: Option<PathBuf>,
    pub moving: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub mind: MindSection,
    #[serde(default)]
    pub pca: PcaSection,
    #[serde(default)]
    pub convex: ConvexSection,
    #[serde(default)]
    pub adam: AdamSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MindSection {
    pub patch_radius: Option<usize>,
    pub dilation: Option<usize>,
    pub variance_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSection {
    pub k: Option<usize>,
    pub mode: Option<PcaMode>,
    pub oversampling: Option<usize>,
    pub power_iterations: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexSection {
    pub search_radius: Option<usize>,
    pub quantization: Option<usize>,
    pub coarse_stride: Option<usize>,
    pub coupling_schedule: Option<Vec<f64>>,
    pub smoothing: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub reg_weight: Option<f64>,
    pub lcc_window: Option<usize>,
    pub loss: Option<Loss>,
    pub control_stride: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl MindSection {
    pub fn resolve(&self) -> MindConfig {
        let mut c = MindConfig::default();
        set(&mut c.patch_radius, self.patch_radius);
        set(&mut c.dilation, self.dilation);
        set(&mut c.variance_floor, self.variance_floor);
        c
    }
}

impl PcaSection {
    pub fn resolve(&self) -> PcaConfig {
        let mut c = PcaConfig::default();
        set(&mut c.k, self.k);
        set(&mut c.mode, self.mode);
        set(&mut c.oversampling, self.oversampling);
        set(&mut c.power_iterations, self.power_iterations);
        set(&mut c.seed, self.seed);
        c
    }
}

impl ConvexSection {
    pub fn resolve(&self) -> ConvexConfig {
        let mut c = ConvexConfig::default();
        set(&mut c.search_radius, self.search_radius);
        set(&mut c.quantization, self.quantization);
        set(&mut c.coarse_stride, self.coarse_stride);
        set(&mut c.coupling_schedule, self.coupling_schedule.clone());
        set(&mut c.smoothing, self.smoothing);
        c
    }
}

impl AdamSection {
    pub fn resolve(&self) -> AdamConfig {
        let mut c = AdamConfig::default();
        set(&mut c.epochs, self.epochs);
        set(&mut c.learning_rate, self.learning_rate);
        set(&mut c.reg_weight, self.reg_weight);
        set(&mut c.lcc_window, self.lcc_window);
        set(&mut c.loss, self.loss);
        set(&mut c.control_stride, self.control_stride);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"adam": {"epochs": 3, "loss": "ssd"}}"#).unwrap();
        let a = c.adam.resolve();
        assert_eq!(a.epochs, 3);
        assert_eq!(a.loss, Loss::Ssd);
        assert_eq!(a.learning_rate, AdamConfig::default().learning_rate);
        assert_eq!(c.convex.resolve(), ConvexConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"adam": {"epoch": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"fixd": "a.ftv"}"#).is_err());
    }

    #[test]
    fn lowrank_alias_parses() {
        let c: RunConfig = serde_json::from_str(r#"{"pca": {"mode": "low_rank", "seed": 4}}"#).unwrap();
        assert_eq!(c.pca.resolve().mode, PcaMode::LowRank);
    }
}
