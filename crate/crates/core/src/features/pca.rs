//! Joint principal component reduction of two feature volumes.
//!
//! Tokens (voxels) of the fixed and moving volumes are pooled into one
//! matrix, centred, and projected onto a shared set of principal directions.
//! `Full` diagonalises the `C x C` covariance exactly; `LowRank` runs a
//! seeded randomized range finder with power iterations, then diagonalises
//! the small `l x l` Gram matrix of the projected tokens.

use std::sync::Arc;

use nalgebra::{DMatrix, RealField, SymmetricEigen};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{FeatureVolume, Provenance};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaMode {
    Full,
    #[serde(alias = "low_rank")]
    LowRank,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaConfig {
    pub k: usize,
    pub mode: PcaMode,
    /// Extra random projection columns for `LowRank`.
    pub oversampling: usize,
    /// Subspace iterations for `LowRank`.
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            k: 24,
            mode: PcaMode::LowRank,
            oversampling: 10,
            power_iterations: 2,
            seed: 0,
        }
    }
}

/// A fitted projection: `y = components^T (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis<T> {
    pub mean: Vec<T>,
    /// `k` unit vectors of length `C`, strongest first.
    pub components: Vec<Vec<T>>,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub total_variance: f64,
}

impl<T: Real> PcaBasis<T> {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, token: &[T]) -> Vec<T> {
        self.components
            .iter()
            .map(|v| {
                v.iter()
                    .zip(token.iter().zip(&self.mean))
                    .fold(T::zero(), |acc, (&w, (&x, &m))| acc + w * (x - m))
            })
            .collect()
    }

    /// Sum of the explained-variance ratios of the first `n` components.
    pub fn cumulative_ratio(&self, n: usize) -> f64 {
        self.explained_variance_ratio.iter().take(n).sum()
    }
}

fn token_matrix<T: Real + RealField>(volumes: &[&FeatureVolume<T>]) -> DMatrix<T> {
    let c = volumes[0].channels();
    let n: usize = volumes.iter().map(|v| v.voxels()).sum();
    // channel-first storage is already column-major for an N x C matrix
    let mut buf = Vec::with_capacity(n * c);
    for ch in 0..c {
        for v in volumes {
            buf.extend_from_slice(v.channel(ch));
        }
    }
    DMatrix::from_vec(n, c, buf)
}

fn center<T: Real + RealField>(x: &mut DMatrix<T>) -> Vec<T> {
    let n = T::lit(x.nrows() as f64);
    let mut mean = Vec::with_capacity(x.ncols());
    for mut col in x.column_iter_mut() {
        let m = col.iter().fold(T::zero(), |a, &b| a + b) / n;
        for v in col.iter_mut() {
            *v -= m;
        }
        mean.push(m);
    }
    mean
}

fn sign_fix<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if Float::abs(*x) > Float::abs(v[best]) {
            best = i;
        }
    }
    if v[best] < T::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fit a `k`-component basis to the rows of `tokens` (one token per row).
pub fn fit_pca<T: Real + RealField>(tokens: DMatrix<T>, cfg: &PcaConfig) -> Result<PcaBasis<T>> {
    let (n, c) = tokens.shape();
    if cfg.k == 0 || cfg.k > c {
        return Err(Error::Config(format!(
            "PCA target dimension k={} must lie in 1..={c}",
            cfg.k
        )));
    }
    if n < 2 {
        return Err(Error::Degenerate("PCA needs at least two tokens".into()));
    }
    let mut xc = tokens;
    let mean = center(&mut xc);
    let dof = (n - 1) as f64;
    let total_variance = xc.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / dof;
    if total_variance <= 0.0 || !total_variance.is_finite() {
        return Err(Error::Degenerate(
            "all tokens are identical (zero covariance); PCA is undefined".into(),
        ));
    }

    let (variances, mut components): (Vec<f64>, Vec<Vec<T>>) = match cfg.mode {
        PcaMode::Full => {
            let cov = xc.tr_mul(&xc) / T::lit(dof);
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..c).collect();
            order.sort_by(|&a, &b| {
                eig.eigenvalues[b]
                    .as_f64()
                    .total_cmp(&eig.eigenvalues[a].as_f64())
                    .then(a.cmp(&b))
            });
            order
                .iter()
                .take(cfg.k)
                .map(|&i| {
                    (
                        eig.eigenvalues[i].as_f64().max(0.0),
                        eig.eigenvectors.column(i).iter().copied().collect(),
                    )
                })
                .unzip()
        }
        PcaMode::LowRank => {
            let l = (cfg.k + cfg.oversampling).min(c).min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let omega = DMatrix::<T>::from_fn(c, l, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                T::lit(g)
            });
            let mut q = (&xc * &omega).qr().q();
            for _ in 0..cfg.power_iterations {
                let z = xc.tr_mul(&q).qr().q();
                q = (&xc * &z).qr().q();
            }
            // right singular vectors of B = Q^T X from the l x l Gram matrix
            let b = q.tr_mul(&xc);
            let eig = SymmetricEigen::new(&b * b.transpose());
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&i, &j| {
                eig.eigenvalues[j]
                    .as_f64()
                    .total_cmp(&eig.eigenvalues[i].as_f64())
                    .then(i.cmp(&j))
            });
            if order.len() < cfg.k {
                return Err(Error::Linalg(format!(
                    "randomized range finder produced only {} directions",
                    order.len()
                )));
            }
            let mut out = (Vec::with_capacity(cfg.k), Vec::with_capacity(cfg.k));
            for &i in order.iter().take(cfg.k) {
                let s2 = eig.eigenvalues[i].as_f64().max(0.0);
                let v = b.tr_mul(&eig.eigenvectors.column(i).into_owned());
                let norm = v.norm().as_f64();
                if !(norm > 0.0) {
                    return Err(Error::Degenerate(format!(
                        "token cloud spans fewer than k={} directions",
                        cfg.k
                    )));
                }
                let inv = T::lit(1.0 / norm);
                out.0.push(s2 / dof);
                out.1.push(v.iter().map(|&x| x * inv).collect());
            }
            out
        }
    };
    for v in components.iter_mut() {
        sign_fix(v);
    }
    let explained_variance_ratio = variances.iter().map(|v| v / total_variance).collect();
    Ok(PcaBasis {
        mean,
        components,
        variances,
        explained_variance_ratio,
        total_variance,
    })
}

/// Reduce two feature volumes to `cfg.k` channels along a shared basis.
///
/// Both outputs carry the same `Arc<PcaBasis>` and the explained-variance
/// ratios; their provenance is `PcaReduced`.
pub fn joint_pca<T: Real + RealField>(
    f_ref: &FeatureVolume<T>,
    f_mov: &FeatureVolume<T>,
    cfg: &PcaConfig,
) -> Result<(FeatureVolume<T>, FeatureVolume<T>)> {
    if f_ref.channels() != f_mov.channels() {
        return Err(Error::Shape(format!(
            "channel counts differ: {} vs {}",
            f_ref.channels(),
            f_mov.channels()
        )));
    }
    let tokens = token_matrix(&[f_ref, f_mov]);
    let basis = fit_pca(tokens.clone(), cfg)?;

    let c = f_ref.channels();
    let k = basis.k();
    let mut w = DMatrix::<T>::zeros(c, k);
    for (j, comp) in basis.components.iter().enumerate() {
        for (i, &v) in comp.iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    let mut xc = tokens;
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        let m = basis.mean[j];
        for v in col.iter_mut() {
            *v -= m;
        }
    }
    let y = &xc * &w;

    let n_ref = f_ref.voxels();
    let n_mov = f_mov.voxels();
    let mut out_ref = Vec::with_capacity(k * n_ref);
    let mut out_mov = Vec::with_capacity(k * n_mov);
    for col in y.column_iter() {
        let col = col.as_slice();
        out_ref.extend_from_slice(&col[..n_ref]);
        out_mov.extend_from_slice(&col[n_ref..]);
    }

    let basis = Arc::new(basis);
    let wrap = |data: Vec<T>, src: &FeatureVolume<T>| -> Result<FeatureVolume<T>> {
        let mut f = FeatureVolume::new(data, k, *src.grid(), Provenance::PcaReduced)?;
        f.slice_layout = src.slice_layout;
        f.explained_variance = Some(basis.explained_variance_ratio.clone());
        f.pca_basis = Some(Arc::clone(&basis));
        Ok(f)
    };
    Ok((wrap(out_ref, f_ref)?, wrap(out_mov, f_mov)?))
}
