//! Instance optimization of a coarse control-point field with Adam.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lcc::lcc_raw;
use super::sample::{Resampler, Stencil};
use super::warp::upsample_field;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::{DisplacementField, FeatureVolume};
use crate::Real;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[serde(alias = "ncc")]
    Lcc,
    Ssd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub epochs: usize,
    /// Step size in control-grid voxels.
    pub learning_rate: f64,
    /// Weight of the diffusion regularizer.
    pub reg_weight: f64,
    /// LCC window half-width in feature-grid voxels.
    pub lcc_window: usize,
    pub loss: Loss,
    /// Feature-grid voxels per control point.
    pub control_stride: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            epochs: 50,
            learning_rate: 1.0,
            reg_weight: 0.25,
            lcc_window: 1,
            loss: Loss::Lcc,
            control_stride: 2,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::Config("reg_weight must be >= 0".into()));
        }
        if self.lcc_window < 1 {
            return Err(Error::Config("lcc_window must be >= 1".into()));
        }
        if self.control_stride < 1 {
            return Err(Error::Config("control_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean squared forward difference of every component along every axis,
/// replicated boundary, accumulating its gradient into `grad`.
fn diffusion<T: Real>(u: &[Vec<T>; 3], dims: [usize; 3], weight: T, grad: &mut [Vec<T>; 3]) -> f64 {
    let n: usize = dims.iter().product();
    let norm = 9.0 * n as f64;
    let gscale = weight * T::lit(2.0 / norm);
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut total = 0.0;
    for c in 0..3 {
        for axis in 0..3 {
            let s = strides[axis];
            for i in 0..n {
                let pos = (i / s) % dims[axis];
                if pos + 1 >= dims[axis] {
                    continue;
                }
                let d = u[c][i + s] - u[c][i];
                total += d.as_f64() * d.as_f64();
                let g = gscale * d;
                grad[c][i + s] = grad[c][i + s] + g;
                grad[c][i] = grad[c][i] - g;
            }
        }
    }
    total / norm
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let c1 = T::lit(1.0 - BETA1.powi(self.t));
        let c2 = T::lit(1.0 - BETA2.powi(self.t));
        let (lr, eps) = (T::lit(lr), T::lit(ADAM_EPS));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = params[i] - lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Refine `init` by minimizing `-LCC(f, m o phi)` (or the SSD) plus the
/// weighted diffusion penalty. Returns the field on the feature grid in
/// feature-grid voxels.
pub fn adam_refine<T: Real>(
    f: &FeatureVolume<T>,
    m: &FeatureVolume<T>,
    init: &DisplacementField<T>,
    cfg: &AdamConfig,
) -> Result<DisplacementField<T>> {
    adam_refine_traced(f, m, init, cfg).map(|(u, _)| u)
}

/// As [`adam_refine`], also returning the loss of every epoch.
pub fn adam_refine_traced<T: Real>(
    f: &FeatureVolume<T>,
    m: &FeatureVolume<T>,
    init: &DisplacementField<T>,
    cfg: &AdamConfig,
) -> Result<(DisplacementField<T>, Vec<f64>)> {
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
    let fg: Grid = *f.grid();
    if cfg.epochs == 0 {
        return Ok((upsample_field(init, &fg)?, Vec::new()));
    }
    let ctrl = fg.strided(cfg.control_stride);
    let theta0 = upsample_field(init, &ctrl)?;
    let nc = ctrl.len();
    let mut theta: Vec<T> = theta0.data().to_vec();
    let resampler = Resampler::<T>::new(&ctrl, &fg);
    let scale: [T; 3] = std::array::from_fn(|a| T::lit(ctrl.spacing[a] / fg.spacing[a]));

    let dims = fg.dims;
    let n = fg.len();
    let channels = f.channels();
    let mdata = m.data();
    let fdata = f.data();
    let alpha = T::lit(cfg.reg_weight);
    let mut adam = Adam::new(theta.len());
    let mut losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let u: [Vec<T>; 3] = std::array::from_fn(|a| {
            resampler
                .apply(&theta[a * nc..(a + 1) * nc])
                .into_iter()
                .map(|v| v * scale[a])
                .collect()
        });

        let stencils: Vec<Stencil<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let [z, y, x] = fg.coords(i);
                let p = [
                    z as f64 + u[0][i].as_f64(),
                    y as f64 + u[1][i].as_f64(),
                    x as f64 + u[2][i].as_f64(),
                ];
                Stencil::new(p, dims)
            })
            .collect();
        let mut warped = vec![T::zero(); channels * n];
        warped.par_chunks_mut(n).enumerate().for_each(|(c, out)| {
            let src = &mdata[c * n..(c + 1) * n];
            for (o, st) in out.iter_mut().zip(&stencils) {
                *o = st.sample(src);
            }
        });

        let (sim_loss, dl_dw): (f64, Vec<T>) = match cfg.loss {
            Loss::Lcc => {
                let (v, g) = lcc_raw(fdata, &warped, channels, dims, cfg.lcc_window, true);
                let g = g.unwrap_or_default().into_iter().map(|x| -x).collect();
                (-v, g)
            }
            Loss::Ssd => {
                let norm = (channels * n) as f64;
                let s = T::lit(2.0 / norm);
                let mut total = 0.0;
                let g = fdata
                    .iter()
                    .zip(&warped)
                    .map(|(&a, &b)| {
                        let d = b - a;
                        total += d.as_f64() * d.as_f64();
                        s * d
                    })
                    .collect();
                (total / norm, g)
            }
        };

        // chain rule through the trilinear sample positions
        let per_voxel: Vec<[T; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = [T::zero(); 3];
                for c in 0..channels {
                    let w = dl_dw[c * n + i];
                    if w == T::zero() {
                        continue;
                    }
                    let (_, d) = stencils[i].sample_with_gradient(&mdata[c * n..(c + 1) * n]);
                    for a in 0..3 {
                        acc[a] = acc[a] + w * d[a];
                    }
                }
                acc
            })
            .collect();
        let mut g_u: [Vec<T>; 3] =
            std::array::from_fn(|a| per_voxel.iter().map(|g| g[a]).collect());
        let reg = diffusion(&u, dims, alpha, &mut g_u);
        losses.push(sim_loss + cfg.reg_weight * reg);

        let mut g_theta = Vec::with_capacity(3 * nc);
        for a in 0..3 {
            g_theta.extend(resampler.adjoint(&g_u[a]).into_iter().map(|v| v * scale[a]));
        }
        adam.step(&mut theta, &g_theta, cfg.learning_rate);
    }

    log::debug!(
        "adam: {} epochs, loss {:?} -> {:?}",
        cfg.epochs,
        losses.first(),
        losses.last()
    );
    let field = DisplacementField::new(theta, ctrl)?;
    Ok((upsample_field(&field, &fg)?, losses))
}
