#![allow(dead_code)]

use featreg::{DisplacementField, FeatureVolume, Grid, Provenance, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth blob phantom with an analytic moving image and ground truth.
pub struct Phantom {
    pub fixed: Volume<f32>,
    pub moving: Volume<f32>,
    /// Field `u` with `fixed(x) == moving(x + u(x))`.
    pub truth: DisplacementField<f64>,
    pub mask: Vec<bool>,
}

struct Blob {
    centre: [f64; 3],
    inv_two_sigma2: f64,
    amplitude: f64,
}

fn eval(blobs: &[Blob], p: [f64; 3]) -> f64 {
    blobs
        .iter()
        .map(|b| {
            let d2: f64 = (0..3).map(|a| (p[a] - b.centre[a]).powi(2)).sum();
            b.amplitude * (-d2 * b.inv_two_sigma2).exp()
        })
        .sum()
}

/// Displacement `v` with `moving(y) = P(y + v(y))`.
fn deformation(bumps: &[Blob], dirs: &[[f64; 3]], p: [f64; 3]) -> [f64; 3] {
    let mut v = [0.0; 3];
    for (b, d) in bumps.iter().zip(dirs) {
        let d2: f64 = (0..3).map(|a| (p[a] - b.centre[a]).powi(2)).sum();
        let w = b.amplitude * (-d2 * b.inv_two_sigma2).exp();
        for a in 0..3 {
            v[a] += w * d[a];
        }
    }
    v
}

pub fn phantom(n: usize, max_disp: f64, seed: u64) -> Phantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = n as f64 / 2.0;
    let blobs: Vec<Blob> = (0..40)
        .map(|_| {
            let s: f64 = rng.random_range(2.0..5.0);
            Blob {
                centre: std::array::from_fn(|_| c + rng.random_range(-0.32..0.32) * n as f64),
                inv_two_sigma2: 1.0 / (2.0 * s * s),
                amplitude: rng.random_range(0.4..1.0) * if rng.random_bool(0.25) { -0.5 } else { 1.0 },
            }
        })
        .collect();
    let bumps: Vec<Blob> = (0..4)
        .map(|_| {
            let s = n as f64 * 0.18;
            Blob {
                centre: std::array::from_fn(|_| c + rng.random_range(-0.2..0.2) * n as f64),
                inv_two_sigma2: 1.0 / (2.0 * s * s),
                amplitude: 1.0,
            }
        })
        .collect();
    let dirs: Vec<[f64; 3]> = (0..4)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let dims = [n; 3];
    let g = Grid::image(dims);
    let raw: Vec<[f64; 3]> = (0..g.len())
        .map(|i| {
            let [z, y, x] = g.coords(i);
            deformation(&bumps, &dirs, [z as f64, y as f64, x as f64])
        })
        .collect();
    let peak = raw
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0, f64::max);
    let k = max_disp / peak;
    let dirs: Vec<[f64; 3]> = dirs.iter().map(|d| d.map(|x| x * k)).collect();
    let v = |p: [f64; 3]| deformation(&bumps, &dirs, p);

    let fixed = Volume::from_fn(dims, |z, y, x| eval(&blobs, [z as f64, y as f64, x as f64]) as f32).unwrap();
    let moving = Volume::from_fn(dims, |z, y, x| {
        let p = [z as f64, y as f64, x as f64];
        let d = v(p);
        eval(&blobs, [p[0] + d[0], p[1] + d[1], p[2] + d[2]]) as f32
    })
    .unwrap();
    // solve u = -v(x + u) by fixed-point iteration
    let truth = DisplacementField::from_fn(g, |z, y, x| {
        let p = [z as f64, y as f64, x as f64];
        let mut u = [0.0; 3];
        for _ in 0..100 {
            let d = v([p[0] + u[0], p[1] + u[1], p[2] + u[2]]);
            u = [-d[0], -d[1], -d[2]];
        }
        u
    })
    .unwrap();
    let mask = fixed.data().iter().map(|&p| p > 0.1).collect();
    Phantom {
        fixed,
        moving,
        truth,
        mask,
    }
}

/// Mean endpoint error over voxels where `mask` holds.
pub fn masked_epe(a: &DisplacementField<f64>, b: &DisplacementField<f64>, mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            let (p, q) = (a.at(i), b.at(i));
            sum += (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>().sqrt();
            n += 1;
        }
    }
    sum / n as f64
}

/// Reproducible uniform random feature volume on an image grid.
pub fn random_features(c: usize, dims: [usize; 3], seed: u64) -> FeatureVolume<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c * dims.iter().product::<usize>();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureVolume::new(data, c, Grid::image(dims), Provenance::External).unwrap()
}

/// Separable smoothing of random values, for features with spatial structure.
pub fn smooth_features(c: usize, dims: [usize; 3], seed: u64) -> FeatureVolume<f64> {
    let base = random_features(c, dims, seed);
    let n: usize = dims.iter().product();
    let mut data = base.data().to_vec();
    let strides = [dims[1] * dims[2], dims[2], 1];
    for ch in 0..c {
        let slice = &mut data[ch * n..(ch + 1) * n];
        for axis in 0..3 {
            let prev = slice.to_vec();
            for i in 0..n {
                let pos = (i / strides[axis]) % dims[axis];
                let lo = if pos > 0 { prev[i - strides[axis]] } else { prev[i] };
                let hi = if pos + 1 < dims[axis] { prev[i + strides[axis]] } else { prev[i] };
                slice[i] = 0.25 * lo + 0.5 * prev[i] + 0.25 * hi;
            }
        }
    }
    FeatureVolume::new(data, c, Grid::image(dims), Provenance::External).unwrap()
}
