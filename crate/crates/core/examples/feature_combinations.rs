//! Mean optimal-threshold IoU and Dice of every feature combination over a
//! small ensemble of seeded phantoms.
//!
//!     cargo run --release --example feature_combinations [n_seeds]

use wmf4d::angiography::{pcmra_frame, pcmra_systolic, DEFAULT_GAMMA};
use wmf4d::features::{combine, normalize_minmax, CombinationId, CombineInputs};
use wmf4d::phantom::{generate, PhantomSpec};
use wmf4d::segmentation::{mean_metrics, sweep_optimal_threshold};
use wmf4d::spectral::wmf_min_series;
use wmf4d::MetricsReport;

fn main() -> wmf4d::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut per_id: Vec<Vec<MetricsReport>> = vec![Vec::new(); CombinationId::ALL.len()];

    for seed in 0..seeds {
        let spec = PhantomSpec { rng_seed: seed, ..PhantomSpec::default() };
        let t = spec.systolic_frame;
        let p = generate(&spec)?;
        let wmf = normalize_minmax(&wmf_min_series(&p.velocity)?)?;
        let mag_t = normalize_minmax(&p.magnitude.frame_volume(t)?)?;
        let pcmra_t = normalize_minmax(&pcmra_frame(&p.magnitude, &p.velocity, t, DEFAULT_GAMMA)?)?;
        let pcmra_sys = normalize_minmax(&pcmra_systolic(&p.magnitude, &p.velocity, DEFAULT_GAMMA)?)?;
        let inputs = CombineInputs { mag_t: Some(&mag_t), pcmra_t: Some(&pcmra_t), pcmra_sys: Some(&pcmra_sys), wmf: Some(&wmf) };
        for (i, id) in CombinationId::ALL.into_iter().enumerate() {
            let f = combine(id, inputs)?;
            per_id[i].push(sweep_optimal_threshold(&f, &p.mask)?.best_metrics);
        }
    }

    println!("{:<16} {:<22} {:>6} {:>6}", "id", "formula", "IoU", "Dice");
    for (id, reports) in CombinationId::ALL.into_iter().zip(&per_id) {
        let m = mean_metrics(reports).expect("at least one seed");
        println!("{:<16} {:<22} {:>6.3} {:>6.3}", id.to_string(), id.formula(), m.iou, m.dice);
    }
    Ok(())
}
