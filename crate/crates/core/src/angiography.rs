//! Phase-contrast angiography (PC-MRA) baselines.
//!
//! Per frame, `PC-MRA(t) = Mag(t) * (|v(t)| / venc)^gamma`. The systolic
//! variant evaluates that formula at the frame of peak flow.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{Component, FeatureKind, FeatureVolume, MagnitudeSeries, VelocitySeries};

/// Default exponent applied to the normalized speed.
pub const DEFAULT_GAMMA: f64 = 0.2;

/// Quantile above which voxel speeds enter the systole score.
pub const SYSTOLE_QUANTILE: f64 = 0.9;

/// Voxel-wise velocity norm at frame `t`, in m/s.
pub fn speed_frame(vel: &VelocitySeries, t: usize) -> Result<FeatureVolume> {
    let [u, v, w] = Component::ALL.map(|c| vel.frame(c, t));
    let (u, v, w) = (u?, v?, w?);
    let values = u
        .iter()
        .zip(v)
        .zip(w)
        .map(|((&a, &b), &c)| {
            let (a, b, c) = (a as f64, b as f64, c as f64);
            (a * a + b * b + c * c).sqrt() as f32
        })
        .collect();
    Ok(FeatureVolume::from_parts_unchecked(vel.meta().clone(), values, FeatureKind::Speed, false))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

/// PC-MRA at frame `t`.
pub fn pcmra_frame(mag: &MagnitudeSeries, vel: &VelocitySeries, t: usize, gamma: f64) -> Result<FeatureVolume> {
    check_gamma(gamma)?;
    mag.meta().ensure_same_grid(vel.meta(), "pcmra")?;
    if mag.meta().n_frames != vel.meta().n_frames {
        return Err(Error::ShapeMismatch(format!(
            "pcmra: magnitude has {} frames, velocity {}",
            mag.meta().n_frames,
            vel.meta().n_frames
        )));
    }
    let speed = speed_frame(vel, t)?;
    let venc = vel.meta().venc;
    let values = mag
        .frame(t)?
        .iter()
        .zip(speed.values())
        .map(|(&m, &s)| (m as f64 * (s as f64 / venc).powf(gamma)) as f32)
        .collect();
    Ok(FeatureVolume::from_parts_unchecked(vel.meta().clone(), values, FeatureKind::PcmraFrame, false))
}

/// Mean of the top-decile voxel speeds at each frame.
pub fn systole_scores(vel: &VelocitySeries) -> Vec<f64> {
    (0..vel.meta().n_frames)
        .into_par_iter()
        .map(|t| {
            let mut speeds: Vec<f64> = speed_frame(vel, t)
                .expect("frame within range")
                .values()
                .iter()
                .map(|&s| s as f64)
                .collect();
            let n = speeds.len();
            let keep = (((1.0 - SYSTOLE_QUANTILE) * n as f64).ceil() as usize).clamp(1, n);
            let split = n - keep;
            speeds.select_nth_unstable_by(split.min(n - 1), |a, b| a.total_cmp(b));
            let top = &mut speeds[split..];
            // fixed summation order regardless of selection layout
            top.sort_unstable_by(|a, b| a.total_cmp(b));
            top.iter().sum::<f64>() / keep as f64
        })
        .collect()
}

/// Frame of peak systole: argmax of the top-decile mean speed, first on ties.
pub fn detect_systolic_frame(vel: &VelocitySeries) -> usize {
    let scores = systole_scores(vel);
    let mut best = 0;
    for (t, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = t;
        }
    }
    best
}

/// PC-MRA at the detected systolic frame.
pub fn pcmra_systolic(mag: &MagnitudeSeries, vel: &VelocitySeries, gamma: f64) -> Result<FeatureVolume> {
    let t = detect_systolic_frame(vel);
    Ok(pcmra_frame(mag, vel, t, gamma)?.with_kind(FeatureKind::PcmraSys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridMeta;
    use proptest::prelude::*;

    fn meta(nt: usize) -> GridMeta {
        GridMeta::new([2, 2, 1], [1.0; 3], nt, 2.0).unwrap()
    }

    fn vel_from(meta: &GridMeta, f: impl Fn(usize, usize) -> [f32; 3]) -> VelocitySeries {
        let n = meta.n_samples();
        let nv = meta.n_voxels();
        let mut comps = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
        for i in 0..n {
            let v = f(i / nv, i % nv);
            for c in 0..3 {
                comps[c][i] = v[c];
            }
        }
        VelocitySeries::new(meta.clone(), comps).unwrap()
    }

    #[test]
    fn speed_examples() {
        let m = meta(2);
        let vel = vel_from(&m, |_, v| if v == 1 { [3.0, 4.0, 0.0] } else { [0.0; 3] });
        let s = speed_frame(&vel, 0).unwrap();
        assert_eq!(s.values(), &[0.0, 5.0, 0.0, 0.0]);
        assert!(matches!(speed_frame(&vel, 2), Err(Error::FrameOutOfRange { .. })));
    }

    #[test]
    fn pcmra_examples() {
        let m = meta(2);
        let venc = m.venc as f32;
        let vel = vel_from(&m, |_, v| match v {
            0 => [0.0; 3],
            1 => [venc, 0.0, 0.0],
            _ => [0.0, venc / 32.0, 0.0],
        });
        let mags: Vec<f32> = (0..m.n_samples()).map(|i| if i % 4 >= 2 { 2.0 } else { 1.0 }).collect();
        let mag = MagnitudeSeries::new(m.clone(), mags).unwrap();
        let p = pcmra_frame(&mag, &vel, 1, 0.2).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert!((p.values()[1] - 1.0).abs() < 1e-7);
        assert!((p.values()[2] - 1.0).abs() < 1e-6);
        for g in [0.0, -1.0, 1.5, f64::NAN] {
            assert!(matches!(pcmra_frame(&mag, &vel, 0, g), Err(Error::InvalidGamma(_))));
        }
        let other = MagnitudeSeries::new(meta(3), vec![1.0; 12]).unwrap();
        assert!(pcmra_frame(&other, &vel, 0, 0.2).is_err());
    }

    #[test]
    fn systole_tie_breaks_to_first_frame() {
        let m = meta(12);
        let constant = vel_from(&m, |_, _| [0.3, 0.1, 0.0]);
        assert_eq!(detect_systolic_frame(&constant), 0);
        let twin = vel_from(&m, |t, _| if t == 4 || t == 9 { [1.0, 0.0, 0.0] } else { [0.1, 0.0, 0.0] });
        assert_eq!(detect_systolic_frame(&twin), 4);
    }

    #[test]
    fn systolic_pcmra_gamma_one_is_normalized_speed() {
        let m = meta(6);
        let vel = vel_from(&m, |t, v| [0.1 * (t + v) as f32, 0.0, 0.0]);
        let mag = MagnitudeSeries::new(m.clone(), vec![1.0; m.n_samples()]).unwrap();
        let p = pcmra_systolic(&mag, &vel, 1.0).unwrap();
        assert_eq!(p.kind(), FeatureKind::PcmraSys);
        let s = speed_frame(&vel, 5).unwrap();
        for (a, b) in p.values().iter().zip(s.values()) {
            assert!((*a as f64 - *b as f64 / m.venc).abs() < 1e-7);
        }
        let still = VelocitySeries::zeros(m).unwrap();
        assert!(pcmra_systolic(&mag, &still, 0.2).unwrap().values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn pcmra_monotone_in_speed_and_nonnegative(
            mags in prop::collection::vec(0.0f32..5.0, 4),
            base in prop::collection::vec(0.0f32..1.0, 4),
            extra in prop::collection::vec(0.0f32..0.9, 4),
            gamma in 0.05f64..1.0,
        ) {
            let m = meta(2);
            let mag = MagnitudeSeries::new(m.clone(), mags.iter().chain(mags.iter()).copied().collect()).unwrap();
            let slow = vel_from(&m, |_, v| [base[v], 0.0, 0.0]);
            let fast = vel_from(&m, |_, v| [base[v] + extra[v], 0.0, 0.0]);
            let a = pcmra_frame(&mag, &fast, 0, gamma).unwrap();
            let b = pcmra_frame(&mag, &slow, 0, gamma).unwrap();
            for i in 0..4 {
                prop_assert!(a.values()[i] >= b.values()[i]);
                prop_assert!(b.values()[i] >= 0.0);
                if mags[i] == 0.0 || base[i] == 0.0 {
                    prop_assert_eq!(b.values()[i], 0.0);
                }
            }
        }

        #[test]
        fn systole_invariant_under_scaling(peaks in prop::collection::vec(0.0f32..1.0, 8), alpha in 0.01f32..1.5) {
            let m = meta(8);
            let vel = vel_from(&m, |t, v| [peaks[t] * (1 + v) as f32 * 0.25, 0.0, 0.0]);
            let scaled = vel_from(&m, |t, v| [alpha * peaks[t] * (1 + v) as f32 * 0.25, 0.0, 0.0]);
            prop_assert_eq!(detect_systolic_frame(&vel), detect_systolic_frame(&scaled));
        }
    }
}
