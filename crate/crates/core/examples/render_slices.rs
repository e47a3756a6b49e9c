//! Renders matching slices of magnitude, speed, WMF and the ground-truth
//! mask as PGM images.
//!
//!     cargo run --release --example render_slices [out_dir]

use std::path::PathBuf;

use wmf4d::angiography::speed_frame;
use wmf4d::io::render::{render_feature_slice, render_mask_slice, Axis};
use wmf4d::phantom::{generate, PhantomSpec};
use wmf4d::spectral::wmf_min_series;

fn main() -> wmf4d::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("wmf4d-render"));
    std::fs::create_dir_all(&dir).map_err(|e| wmf4d::Error::io(&dir, e))?;

    let spec = PhantomSpec::default();
    let p = generate(&spec)?;
    let y = spec.dims[1] / 2; // the arch lies in the x-z plane
    let t = spec.systolic_frame;

    let out = |name: &str| dir.join(format!("{name}_y{y}.pgm"));
    render_feature_slice(&p.magnitude.frame_volume(t)?, Axis::Y, y, &out("magnitude"))?;
    render_feature_slice(&speed_frame(&p.velocity, t)?, Axis::Y, y, &out("speed"))?;
    render_feature_slice(&wmf_min_series(&p.velocity)?, Axis::Y, y, &out("wmf"))?;
    render_mask_slice(&p.mask, Axis::Y, y, &out("mask"))?;
    println!("wrote 4 slices to {}", dir.display());
    Ok(())
}
