//! 8-bit binary PGM (P5) slice rendering.
//!
//! Rows and columns follow the two in-plane axes in increasing index order:
//! `z` slices are `y` rows by `x` columns, `y` slices are `z` by `x`, and
//! `x` slices are `z` by `y`. Gray levels use a min-max window over the
//! slice; a constant slice renders as uniform gray 128.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::container::write_file_atomic;
use crate::volume::{FeatureVolume, GridMeta, Mask};

pub const CONSTANT_GRAY: u8 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidInput(format!("unknown axis `{other}`"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Voxel indices of a slice, row-major in image order.
fn slice_indices(meta: &GridMeta, axis: Axis, index: usize) -> Result<(usize, usize, Vec<usize>)> {
    let [nx, ny, nz] = meta.dims;
    let extent = match axis {
        Axis::X => nx,
        Axis::Y => ny,
        Axis::Z => nz,
    };
    if index >= extent {
        return Err(Error::IndexOutOfRange { axis: axis_name(axis), index, extent });
    }
    let (w, h) = match axis {
        Axis::Z => (nx, ny),
        Axis::Y => (nx, nz),
        Axis::X => (ny, nz),
    };
    let mut idx = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            idx.push(match axis {
                Axis::Z => meta.voxel_index(c, r, index),
                Axis::Y => meta.voxel_index(c, index, r),
                Axis::X => meta.voxel_index(index, c, r),
            });
        }
    }
    Ok((w, h, idx))
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

fn window(values: &[f64], width: usize, height: usize) -> GrayImage {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let pixels = if hi > lo {
        values.iter().map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
    } else {
        vec![CONSTANT_GRAY; values.len()]
    };
    GrayImage { width, height, pixels }
}

pub fn slice_feature(f: &FeatureVolume, axis: Axis, index: usize) -> Result<GrayImage> {
    let (w, h, idx) = slice_indices(f.meta(), axis, index)?;
    let vals: Vec<f64> = idx.iter().map(|&i| f.values()[i] as f64).collect();
    Ok(window(&vals, w, h))
}

/// Mask slices are pure black and white, whatever their content.
pub fn slice_mask(m: &Mask, axis: Axis, index: usize) -> Result<GrayImage> {
    let (w, h, idx) = slice_indices(m.meta(), axis, index)?;
    let pixels = idx.iter().map(|&i| if m.values()[i] { 255 } else { 0 }).collect();
    Ok(GrayImage { width: w, height: h, pixels })
}

pub fn render_feature_slice(f: &FeatureVolume, axis: Axis, index: usize, path: &Path) -> Result<GrayImage> {
    let img = slice_feature(f, axis, index)?;
    write_file_atomic(path, &img.to_pgm())?;
    Ok(img)
}

pub fn render_mask_slice(m: &Mask, axis: Axis, index: usize, path: &Path) -> Result<GrayImage> {
    let img = slice_mask(m, axis, index)?;
    write_file_atomic(path, &img.to_pgm())?;
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::FeatureKind;

    fn meta() -> GridMeta {
        GridMeta::new([3, 2, 2], [1.0; 3], 2, 1.0).unwrap()
    }

    #[test]
    fn constant_is_mid_gray() {
        let f = FeatureVolume::new(meta(), vec![4.2; 12], FeatureKind::External).unwrap();
        let img = slice_feature(&f, Axis::Z, 1).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert!(img.pixels.iter().all(|&p| p == CONSTANT_GRAY));
    }

    #[test]
    fn orientation_and_window() {
        let f = FeatureVolume::new(meta(), (0..12).map(|i| i as f32).collect(), FeatureKind::External).unwrap();
        let img = slice_feature(&f, Axis::Y, 0).unwrap();
        // rows are z, columns x: voxels 0,1,2 then 6,7,8
        // slice window spans 0..8: round(v / 8 * 255)
        assert_eq!(img.pixels, vec![0, 32, 64, 191, 223, 255]);
        let img = slice_feature(&f, Axis::X, 2).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert!(slice_feature(&f, Axis::X, 3).is_err());
    }

    #[test]
    fn mask_is_binary_and_pgm_header() {
        let m = Mask::new(meta(), (0..12).map(|i| i % 2 == 0).collect()).unwrap();
        let img = slice_mask(&m, Axis::Z, 0).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0 || p == 255));
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm.len(), 11 + 6);
    }
}
