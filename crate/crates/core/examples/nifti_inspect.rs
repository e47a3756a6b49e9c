//! Prints the layout and value range of a NIfTI-1 image.
//!
//!     cargo run --example nifti_inspect -- path/to/image.nii

use std::path::PathBuf;

use wmf4d::io::read_nifti1;

fn main() -> wmf4d::Result<()> {
    let path: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/int16_scaled.nii"));
    let img = read_nifti1(&path)?;
    let (lo, hi) = img.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!("{}", path.display());
    println!("  dims    {:?} ({}D)", img.dims, img.ndim);
    println!("  spacing {:?} mm, time step {}", img.spacing, img.time_step);
    println!("  values  {lo} .. {hi} (after rescale)");
    Ok(())
}
