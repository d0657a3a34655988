//! Axial mid-slice checkerboard of two volumes.

use std::path::Path;

use featreg::io::atomic_write;
use featreg::Volume;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

/// Middle axial slice rescaled to `0..=255` by its own range.
fn mid_slice(v: &Volume<f32>) -> Vec<u8> {
    let [d, h, w] = v.dims();
    let z = d / 2;
    let slice = &v.data()[z * h * w..(z + 1) * h * w];
    let lo = slice.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = slice.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    slice
        .iter()
        .map(|&x| ((x - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Tiles of `tile` pixels alternate between `a` (top-left) and `b`.
pub fn checkerboard(a: &Volume<f32>, b: &Volume<f32>, tile: usize) -> (Vec<u8>, u32, u32) {
    let [_, h, w] = a.dims();
    let (sa, sb) = (mid_slice(a), mid_slice(b));
    let tile = tile.max(1);
    let pixels = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            if (y / tile + x / tile).is_multiple_of(2) { sa[i] } else { sb[i] }
        })
        .collect();
    (pixels, w as u32, h as u32)
}

pub fn write_png(path: &Path, pixels: &[u8], width: u32, height: u32) -> featreg::Result<()> {
    atomic_write(path, |out| {
        PngEncoder::new(out)
            .write_image(pixels, width, height, ExtendedColorType::L8)
            .map_err(std::io::Error::other)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_alternate() {
        let a = Volume::from_fn([3, 4, 4], |_, _, x| x as f32).unwrap();
        let b = Volume::from_fn([3, 4, 4], |_, _, x| -(x as f32)).unwrap();
        let (p, w, h) = checkerboard(&a, &b, 2);
        assert_eq!((w, h), (4, 4));
        assert_eq!(&p[0..4], &[0, 85, 85, 0]);
        assert_eq!(&p[8..12], &[255, 170, 170, 255]);
    }
}
