use std::f64::consts::PI;

use wmf4d::angiography::{detect_systolic_frame, pcmra_frame, pcmra_systolic, speed_frame};
use wmf4d::features::{combine, normalize_minmax, CombinationId, CombineInputs};
use wmf4d::io::render::{slice_feature, slice_mask, Axis};
use wmf4d::phantom::{probe_voxels, generate, Geometry, PhantomSpec, Waveform, VELOCITY_NOISE_FACTOR};
use wmf4d::spectral::{energy_floor, wmf_component, wmf_min, wmf_min_series};
use wmf4d::{Component, FeatureVolume, Mask};

/// Naive DFT energies of bins 1..=T/2.
fn naive_energies(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (1..=n / 2)
        .map(|k| {
            let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &s)| {
                let a = -2.0 * PI * (k * j) as f64 / n as f64;
                (re + s * a.cos(), im + s * a.sin())
            });
            re * re + im * im
        })
        .collect()
}

fn naive_wmf(x: &[f64], floor: f64) -> f64 {
    let e = naive_energies(x);
    let total: f64 = e.iter().sum();
    if total <= floor {
        return e.len() as f64;
    }
    e.iter().enumerate().map(|(i, &v)| v * (i + 1) as f64).sum::<f64>() / total
}

fn noiseless(spec: PhantomSpec) -> PhantomSpec {
    PhantomSpec { snr_mag: f64::INFINITY, ..spec }
}

#[test]
fn noiseless_harmonic_arch_gives_exact_wmf() {
    let spec = noiseless(PhantomSpec { waveform: Waveform::PureHarmonic { harmonic: 2 }, ..PhantomSpec::default() });
    let p = generate(&spec).unwrap();
    let wmf = wmf_min_series(&p.velocity).unwrap();
    let f_n = (spec.n_frames / 2) as f32;
    let mut inside = 0;
    for (i, (&v, &m)) in wmf.values().iter().zip(p.mask.values()).enumerate() {
        let (x, y, z) = p.mask.meta().voxel_coords(i);
        let truth = spec.voxel_truth(x, y, z);
        if m && truth.profile > 0.0 {
            inside += 1;
            assert!((v - 2.0).abs() < 1e-6, "voxel {i}: {v}");
        } else if !m {
            assert_eq!(v, f_n);
        }
    }
    assert!(inside > 100);
}

#[test]
fn arch_wmf_min_matches_brute_force_oracle() {
    let spec = PhantomSpec { dims: [40, 24, 40], rng_seed: 3, ..PhantomSpec::default() };
    let p = generate(&spec).unwrap();
    let comps = Component::ALL.map(|c| wmf_component(&p.velocity, c).unwrap());
    let fused = wmf_min(&comps[0], &comps[1], &comps[2]).unwrap();
    let floor = energy_floor(spec.n_frames, spec.venc);
    let meta = p.velocity.meta();
    for voxel in (0..meta.n_voxels()).filter(|&v| p.mask.values()[v]) {
        let oracle = Component::ALL
            .iter()
            .map(|&c| naive_wmf(&p.velocity.voxel_series(c, voxel), floor))
            .fold(f64::INFINITY, f64::min);
        let got = fused.values()[voxel] as f64;
        assert!((got - oracle).abs() < 1e-5, "voxel {voxel}: {got} vs {oracle}");
        for c in &comps {
            assert!(fused.values()[voxel] <= c.values()[voxel]);
        }
    }
}

#[test]
fn systolic_frame_and_peak_speed() {
    let spec = noiseless(PhantomSpec { systolic_frame: 5, ..PhantomSpec::straight_tube([24, 24, 8], 20) });
    let p = generate(&spec).unwrap();
    assert_eq!(detect_systolic_frame(&p.velocity), 5);
    let speed = speed_frame(&p.velocity, 5).unwrap();
    let max_in = speed
        .values()
        .iter()
        .zip(p.mask.values())
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s as f64)
        .fold(0.0, f64::max);
    assert!((max_in - spec.peak_velocity).abs() < 1e-6, "{max_in}");

    let noisy = generate(&PhantomSpec { snr_mag: 20.0, ..spec }).unwrap();
    assert_eq!(detect_systolic_frame(&noisy.velocity), 5);
    let sys = pcmra_systolic(&noisy.magnitude, &noisy.velocity, 0.2).unwrap();
    let frame5 = pcmra_frame(&noisy.magnitude, &noisy.velocity, 5, 0.2).unwrap();
    assert_eq!(sys.values(), frame5.values());
}

#[test]
fn in_vessel_velocity_noise_matches_phase_contrast_relation() {
    let spec = PhantomSpec { snr_mag: 20.0, rng_seed: 11, ..PhantomSpec::straight_tube([64, 64, 64], 20) };
    let noisy = generate(&spec).unwrap();
    let clean = generate(&noiseless(spec.clone())).unwrap();
    let meta = noisy.velocity.meta();
    let nv = meta.n_voxels();
    let mut sum2 = 0.0;
    let mut n = 0usize;
    for c in Component::ALL {
        let (a, b) = (noisy.velocity.component(c), clean.velocity.component(c));
        for i in 0..meta.n_samples() {
            if noisy.mask.values()[i % nv] {
                let d = (a[i] - b[i]) as f64;
                sum2 += d * d;
                n += 1;
            }
        }
    }
    assert!(n >= 10_000, "only {n} samples");
    let empirical = (sum2 / n as f64).sqrt();
    let expected = (2f64.sqrt() / PI) * spec.venc / spec.snr_mag;
    assert!((empirical / expected - 1.0).abs() < 0.10, "{empirical} vs {expected}");
    assert_eq!(VELOCITY_NOISE_FACTOR, 2f64.sqrt() / PI);
}

#[test]
fn mask_volume_matches_tube_within_one_shell() {
    let spec = PhantomSpec::straight_tube([32, 32, 10], 4);
    let p = generate(&noiseless(spec.clone())).unwrap();
    let r = spec.geometry.radius_mm();
    let [sx, sy, _] = spec.spacing;
    let analytic = PI * r * r / (sx * sy) * spec.dims[2] as f64;
    let shell = 2.0 * PI * r / sx.max(sy) * spec.dims[2] as f64;
    let count = p.mask.count() as f64;
    assert!((count - analytic).abs() <= shell, "{count} vs {analytic} ± {shell}");
}

#[test]
fn probe_points_reproduce_tissue_lung_and_vessel_behaviour() {
    let spec = PhantomSpec { rng_seed: 5, ..PhantomSpec::default() };
    let p = generate(&spec).unwrap();
    let meta = p.velocity.meta().clone();
    let [nx, ny, nz] = meta.dims;
    let mut vessel = Vec::new();
    let mut tissue = Vec::new();
    let mut lung = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let t = spec.voxel_truth(x, y, z);
                if t.inside && t.profile > 0.5 {
                    vessel.push((x, y, z));
                } else if !t.inside && t.distance_mm > 2.0 * spec.geometry.radius_mm() {
                    if t.lung {
                        lung.push((x, y, z));
                    } else {
                        tissue.push((x, y, z));
                    }
                }
            }
        }
    }
    let v = probe_voxels(&p.magnitude, &p.velocity, &vessel).unwrap();
    let t = probe_voxels(&p.magnitude, &p.velocity, &tissue).unwrap();
    let l = probe_voxels(&p.magnitude, &p.velocity, &lung).unwrap();
    let mean = |r: &[wmf4d::phantom::ProbeReport]| r.iter().map(|p| p.wmf_min).sum::<f64>() / r.len() as f64;
    assert!(mean(&t) > mean(&v) + 1.0, "tissue {} vessel {}", mean(&t), mean(&v));
    assert!(mean(&l) > mean(&v) + 1.0);

    // background speed is low next to the vessel's systolic speed
    let speed_at = |r: &[wmf4d::phantom::ProbeReport], k: usize| r.iter().map(|p| p.speed[k]).sum::<f64>() / r.len() as f64;
    assert!(speed_at(&t, spec.systolic_frame) < 0.2 * speed_at(&v, spec.systolic_frame));

    // velocity noise std ratio lung / tissue follows the magnitude ratio
    let pooled_std = |r: &[wmf4d::phantom::ProbeReport]| {
        let (mut s, mut n) = (0.0, 0.0);
        for p in r {
            for c in &p.components {
                for x in c {
                    s += x * x;
                    n += 1.0;
                }
            }
        }
        (s / n).sqrt()
    };
    let expected = spec.velocity_noise_std(spec.lung_mag_level) / spec.velocity_noise_std(spec.background_mag_level);
    let ratio = pooled_std(&l) / pooled_std(&t);
    assert!((ratio / expected - 1.0).abs() < 0.20, "{ratio} vs {expected}");
}

/// Spearman-style rank correlation between a feature and a binary mask.
fn rank_correlation(f: &FeatureVolume, m: &Mask) -> f64 {
    let n = f.values().len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f.values()[a].total_cmp(&f.values()[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && f.values()[order[j + 1]] == f.values()[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let bits: Vec<f64> = m.values().iter().map(|&b| b as u8 as f64).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mr, mb) = (mean(&ranks), mean(&bits));
    let cov: f64 = ranks.iter().zip(&bits).map(|(r, b)| (r - mr) * (b - mb)).sum();
    let vr: f64 = ranks.iter().map(|r| (r - mr).powi(2)).sum();
    let vb: f64 = bits.iter().map(|b| (b - mb).powi(2)).sum();
    cov / (vr * vb).sqrt()
}

#[test]
fn pcmra_over_wmf_squared_ranks_vessel_above_background() {
    let draws = 20;
    let mut positive = 0;
    for seed in 0..draws {
        let spec = PhantomSpec { rng_seed: 100 + seed, ..PhantomSpec::default() };
        let p = generate(&spec).unwrap();
        let wmf = normalize_minmax(&wmf_min_series(&p.velocity).unwrap()).unwrap();
        let pc = normalize_minmax(&pcmra_frame(&p.magnitude, &p.velocity, spec.systolic_frame, 0.2).unwrap()).unwrap();
        let f = combine(
            CombinationId::PcmraDivWmf2,
            CombineInputs { wmf: Some(&wmf), pcmra_t: Some(&pc), ..Default::default() },
        )
        .unwrap();
        if rank_correlation(&f, &p.mask) > 0.0 {
            positive += 1;
        }
    }
    assert!(positive as f64 >= 0.95 * draws as f64, "{positive}/{draws}");
}

#[test]
fn rendered_wmf_slice_shows_dark_vessel() {
    let spec = PhantomSpec { rng_seed: 2, ..PhantomSpec::straight_tube([32, 32, 8], 20) };
    let p = generate(&spec).unwrap();
    let wmf = wmf_min_series(&p.velocity).unwrap();
    let z = spec.dims[2] / 2;
    let img = slice_feature(&wmf, Axis::Z, z).unwrap();
    let mask_img = slice_mask(&p.mask, Axis::Z, z).unwrap();
    let (mut vin, mut nin, mut vout, mut nout) = (0.0, 0.0, 0.0, 0.0);
    for (px, m) in img.pixels.iter().zip(&mask_img.pixels) {
        if *m == 255 {
            vin += *px as f64;
            nin += 1.0;
        } else {
            vout += *px as f64;
            nout += 1.0;
        }
    }
    assert!(vin / nin < vout / nout);
}

#[test]
fn straight_tube_geometry_flows_along_z() {
    let spec = noiseless(PhantomSpec::straight_tube([16, 16, 4], 8));
    assert!(matches!(spec.geometry, Geometry::StraightTube { .. }));
    let p = generate(&spec).unwrap();
    assert!(p.velocity.component(Component::U).iter().all(|&v| v == 0.0));
    assert!(p.velocity.component(Component::W).iter().any(|&v| v > 0.0));
}

#[test]
fn inverted_wmf_recovers_vessel_at_snr_20() {
    for seed in 0..5 {
        let p = generate(&PhantomSpec { rng_seed: 300 + seed, snr_mag: 20.0, ..PhantomSpec::default() }).unwrap();
        let f = wmf4d::features::invert_wmf(&normalize_minmax(&wmf_min_series(&p.velocity).unwrap()).unwrap()).unwrap();
        let s = wmf4d::segmentation::sweep_optimal_threshold(&f, &p.mask).unwrap();
        // brute-force the same grid
        let brute = (0..=50)
            .map(|k| {
                let tau = k as f64 / 50.0;
                let pred: Vec<bool> = f.values().iter().map(|&v| v as f64 > tau).collect();
                wmf4d::segmentation::OverlapCounts::of(&pred, p.mask.values()).metrics(None).iou
            })
            .fold(0.0, f64::max);
        assert_eq!(s.best_metrics.iou, brute);
        assert!(s.best_metrics.iou >= 0.8, "seed {seed}: IoU {}", s.best_metrics.iou);
    }
}

/// Strictly increasing piecewise-linear map of [0, 1] with random knots.
fn random_monotone(seed: u64) -> impl Fn(f32) -> f32 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ys: Vec<f32> = (0..9).map(|_| rng.gen_range(0.01f32..1.0)).collect();
    ys.insert(0, 0.0);
    for i in 1..ys.len() {
        ys[i] += ys[i - 1];
    }
    move |x: f32| {
        let pos = x.clamp(0.0, 1.0) * 9.0;
        let i = (pos.floor() as usize).min(8);
        let frac = pos - i as f32;
        ys[i] + frac * (ys[i + 1] - ys[i])
    }
}

#[test]
fn sweep_is_invariant_to_monotone_rescaling_up_to_grid_quantization() {
    use wmf4d::segmentation::sweep_optimal_threshold;
    let p = generate(&PhantomSpec { rng_seed: 42, ..PhantomSpec::default() }).unwrap();
    let base = wmf4d::features::invert_wmf(&normalize_minmax(&wmf_min_series(&p.velocity).unwrap()).unwrap()).unwrap();
    let s1 = sweep_optimal_threshold(&base, &p.mask).unwrap();
    let fixed: [fn(f32) -> f32; 4] = [|x| x.powf(0.3), |x| x.powi(3), |x| (5.0 * x).exp() - 1.0, |x| (100.0 * x).ln_1p()];
    let mut transforms: Vec<Box<dyn Fn(f32) -> f32>> = fixed.into_iter().map(|f| Box::new(f) as Box<dyn Fn(f32) -> f32>).collect();
    transforms.extend((0..16).map(|s| Box::new(random_monotone(s)) as Box<dyn Fn(f32) -> f32>));
    let adjacent = |s: &wmf4d::segmentation::ThresholdSweepResult| {
        s.curve.windows(2).map(|w| (w[1].metrics.iou - w[0].metrics.iou).abs()).fold(0.0, f64::max)
    };
    for (i, g) in transforms.iter().enumerate() {
        let values: Vec<f32> = base.values().iter().map(|&v| g(v)).collect();
        let raw = FeatureVolume::new(base.meta().clone(), values, wmf4d::FeatureKind::External).unwrap();
        let s2 = sweep_optimal_threshold(&normalize_minmax(&raw).unwrap(), &p.mask).unwrap();
        let bound = adjacent(&s1).max(adjacent(&s2));
        let diff = (s1.best_metrics.iou - s2.best_metrics.iou).abs();
        assert!(diff <= bound, "transform {i}: |dIoU| {diff} > {bound}");
    }
}
