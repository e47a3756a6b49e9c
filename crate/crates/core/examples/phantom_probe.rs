//! Generates the default arch phantom and compares the temporal behaviour of
//! a vessel voxel with a static-tissue voxel: speed curve, component spectra
//! and WMF.
//!
//!     cargo run --release --example phantom_probe

use wmf4d::phantom::{probe_voxels, generate, PhantomSpec};

fn main() -> wmf4d::Result<()> {
    let spec = PhantomSpec::default();
    let p = generate(&spec)?;
    let [nx, ny, nz] = spec.dims;

    // first voxel on the vessel centerline, and a tissue corner far from it
    let mut vessel = None;
    'scan: for z in 0..nz {
        for x in 0..nx {
            let t = spec.voxel_truth(x, ny / 2, z);
            if t.inside && t.profile > 0.9 {
                vessel = Some((x, ny / 2, z));
                break 'scan;
            }
        }
    }
    let vessel = vessel.expect("phantom has a vessel");
    let tissue = (1, 1, 1);

    for r in probe_voxels(&p.magnitude, &p.velocity, &[vessel, tissue])? {
        println!("voxel {:?}", r.point);
        let speed: Vec<String> = r.speed.iter().map(|s| format!("{s:.2}")).collect();
        println!("  speed   [{}]", speed.join(" "));
        for (name, s) in ["u", "v", "w"].iter().zip(&r.spectra) {
            let e: Vec<String> = s.energies().iter().take(6).map(|e| format!("{e:.3}")).collect();
            println!("  E_{name}(1..6) [{}]", e.join(" "));
        }
        println!("  WMF u/v/w {:.2} {:.2} {:.2} -> min {:.2}", r.wmf[0], r.wmf[1], r.wmf[2], r.wmf_min);
    }
    Ok(())
}
