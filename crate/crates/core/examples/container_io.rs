//! Writes a phantom and a few derived features to containers, reads them
//! back, and stacks selected features as channels for an external learner.
//!
//!     cargo run --release --example container_io [out_dir]

use std::path::PathBuf;

use wmf4d::angiography::{pcmra_systolic, DEFAULT_GAMMA};
use wmf4d::features::{invert_wmf, normalize_minmax};
use wmf4d::io::container::{export_channels, read_channels, read_header, read_velocity, write_container, Volume};
use wmf4d::phantom::{generate, PhantomSpec};
use wmf4d::spectral::wmf_min_series;

fn main() -> wmf4d::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("wmf4d-demo"));
    std::fs::create_dir_all(&dir).map_err(|e| wmf4d::Error::io(&dir, e))?;

    let p = generate(&PhantomSpec::straight_tube([32, 32, 16], 20))?;
    let vel_path = dir.join("velocity.json");
    write_container(&vel_path, &Volume::Velocity(p.velocity.clone()))?;
    write_container(&dir.join("mask.json"), &Volume::Mask(p.mask.clone()))?;
    assert_eq!(read_velocity(&vel_path)?, p.velocity);
    let h = read_header(&vel_path)?;
    println!("velocity: dims {:?}, {} frames, {} payload bytes", h.dims, h.n_frames, h.payload_bytes());

    let wmf = normalize_minmax(&wmf_min_series(&p.velocity)?)?;
    let channels = vec![
        normalize_minmax(&p.magnitude.frame_volume(0)?)?,
        invert_wmf(&wmf)?,
        normalize_minmax(&pcmra_systolic(&p.magnitude, &p.velocity, DEFAULT_GAMMA)?)?,
    ];
    let stack_path = dir.join("channels.json");
    export_channels(channels, &stack_path)?;
    let stack = read_channels(&stack_path)?;
    let kinds: Vec<String> = stack.kinds().iter().map(|k| k.to_string()).collect();
    println!("channels: [{}] -> {}", kinds.join(", "), stack_path.display());
    Ok(())
}
