//! Min-max normalization and the feature combinations used for threshold
//! segmentation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{FeatureKind, FeatureVolume};

/// Lower bound applied to the normalized WMF before dividing by it.
pub const DIVISION_GUARD: f64 = 1e-6;

/// Feature formulas evaluated by threshold segmentation. `wmf` below is the
/// fused, min-max normalized WMF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CombinationId {
    /// `1 - wmf`
    InvWmf,
    /// `mag * (1 - wmf)^8`
    MagXInvWmf8,
    /// `mag / wmf`
    MagDivWmf,
    /// `mag / wmf^2`
    MagDivWmf2,
    /// `pcmra(t) / wmf`
    PcmraDivWmf,
    /// `pcmra(t) / wmf^2`
    PcmraDivWmf2,
    /// `pcmra(t)`
    PcmraT,
    /// `pcmra(sys)`
    PcmraSys,
}

impl CombinationId {
    pub const ALL: [CombinationId; 8] = [
        CombinationId::InvWmf,
        CombinationId::MagXInvWmf8,
        CombinationId::MagDivWmf,
        CombinationId::MagDivWmf2,
        CombinationId::PcmraDivWmf,
        CombinationId::PcmraDivWmf2,
        CombinationId::PcmraT,
        CombinationId::PcmraSys,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CombinationId::InvWmf => "inv_wmf",
            CombinationId::MagXInvWmf8 => "mag_x_invwmf8",
            CombinationId::MagDivWmf => "mag_div_wmf",
            CombinationId::MagDivWmf2 => "mag_div_wmf2",
            CombinationId::PcmraDivWmf => "pcmra_div_wmf",
            CombinationId::PcmraDivWmf2 => "pcmra_div_wmf2",
            CombinationId::PcmraT => "pcmra_t",
            CombinationId::PcmraSys => "pcmra_sys",
        }
    }

    /// Human-readable formula.
    pub fn formula(self) -> &'static str {
        match self {
            CombinationId::InvWmf => "1-WMF",
            CombinationId::MagXInvWmf8 => "Mag(t)*(1-WMF)^8",
            CombinationId::MagDivWmf => "Mag(t)/WMF",
            CombinationId::MagDivWmf2 => "Mag(t)/WMF^2",
            CombinationId::PcmraDivWmf => "PC-MRA(t)/WMF",
            CombinationId::PcmraDivWmf2 => "PC-MRA(t)/WMF^2",
            CombinationId::PcmraT => "PC-MRA(t)",
            CombinationId::PcmraSys => "PC-MRA(sys)",
        }
    }

    pub fn uses_wmf(self) -> bool {
        !matches!(self, CombinationId::PcmraT | CombinationId::PcmraSys)
    }

    pub fn uses_magnitude(self) -> bool {
        matches!(self, CombinationId::MagXInvWmf8 | CombinationId::MagDivWmf | CombinationId::MagDivWmf2)
    }

    pub fn uses_pcmra_frame(self) -> bool {
        matches!(self, CombinationId::PcmraDivWmf | CombinationId::PcmraDivWmf2 | CombinationId::PcmraT)
    }
}

impl fmt::Display for CombinationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CombinationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinationId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownCombination(s.to_string()))
    }
}

/// Rescales to `[0, 1]` via `(x - min) / (max - min)`; constant volumes map to 0.
pub fn normalize_minmax(f: &FeatureVolume) -> Result<FeatureVolume> {
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cannot normalize a volume with non-finite values".into()));
    }
    let (lo, hi) = f.range();
    let (lo, hi) = (lo as f64, hi as f64);
    let values = if hi > lo {
        let span = hi - lo;
        f.values().iter().map(|&v| ((v as f64 - lo) / span).clamp(0.0, 1.0) as f32).collect()
    } else {
        vec![0.0; f.values().len()]
    };
    Ok(FeatureVolume::from_parts_unchecked(f.meta().clone(), values, f.kind(), true))
}

/// `1 - x` on a normalized WMF volume.
pub fn invert_wmf(wmf: &FeatureVolume) -> Result<FeatureVolume> {
    if !wmf.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let values = wmf.values().iter().map(|&v| 1.0 - v).collect();
    Ok(FeatureVolume::from_parts_unchecked(
        wmf.meta().clone(),
        values,
        FeatureKind::Combination(CombinationId::InvWmf),
        true,
    ))
}

/// Inputs to [`combine`]. Only the volumes the selected formula reads are
/// required; each must be normalized and share the WMF grid.
#[derive(Clone, Copy, Debug, Default)]
pub struct CombineInputs<'a> {
    pub mag_t: Option<&'a FeatureVolume>,
    pub pcmra_t: Option<&'a FeatureVolume>,
    pub pcmra_sys: Option<&'a FeatureVolume>,
    pub wmf: Option<&'a FeatureVolume>,
}

fn require<'a>(v: Option<&'a FeatureVolume>, what: &str, id: CombinationId) -> Result<&'a FeatureVolume> {
    let v = v.ok_or_else(|| Error::InvalidInput(format!("{id} needs the {what} volume")))?;
    if !v.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok(v)
}

/// Evaluates one combination voxel-wise, then min-max normalizes the result.
pub fn combine(id: CombinationId, inputs: CombineInputs<'_>) -> Result<FeatureVolume> {
    let wmf = if id.uses_wmf() { Some(require(inputs.wmf, "wmf", id)?) } else { None };
    let mag = if id.uses_magnitude() { Some(require(inputs.mag_t, "Mag(t)", id)?) } else { None };
    let pcmra = if id.uses_pcmra_frame() { Some(require(inputs.pcmra_t, "PC-MRA(t)", id)?) } else { None };
    let sys = if id == CombinationId::PcmraSys { Some(require(inputs.pcmra_sys, "PC-MRA(sys)", id)?) } else { None };

    let present: Vec<&FeatureVolume> = [wmf, mag, pcmra, sys].into_iter().flatten().collect();
    let reference = present[0];
    for other in &present[1..] {
        reference.meta().ensure_same_grid(other.meta(), "combine")?;
    }

    let n = reference.values().len();
    let at = |f: Option<&FeatureVolume>, i: usize| f.map_or(0.0, |f| f.values()[i] as f64);
    let guarded = |i: usize| at(wmf, i).max(DIVISION_GUARD);
    let raw: Vec<f32> = (0..n)
        .map(|i| {
            let v = match id {
                CombinationId::InvWmf => 1.0 - at(wmf, i),
                CombinationId::MagXInvWmf8 => at(mag, i) * (1.0 - at(wmf, i)).powi(8),
                CombinationId::MagDivWmf => at(mag, i) / guarded(i),
                CombinationId::MagDivWmf2 => at(mag, i) / guarded(i).powi(2),
                CombinationId::PcmraDivWmf => at(pcmra, i) / guarded(i),
                CombinationId::PcmraDivWmf2 => at(pcmra, i) / guarded(i).powi(2),
                CombinationId::PcmraT => at(pcmra, i),
                CombinationId::PcmraSys => at(sys, i),
            };
            v as f32
        })
        .collect();
    let evaluated =
        FeatureVolume::from_parts_unchecked(reference.meta().clone(), raw, FeatureKind::Combination(id), false);
    normalize_minmax(&evaluated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{GridMeta, Validate};
    use proptest::prelude::*;

    fn meta(n: usize) -> GridMeta {
        GridMeta::new([n, 1, 1], [1.0; 3], 4, 1.0).unwrap()
    }

    fn vol(vals: Vec<f32>) -> FeatureVolume {
        FeatureVolume::new(meta(vals.len()), vals, FeatureKind::WmfMin).unwrap()
    }

    #[test]
    fn minmax_examples() {
        let n = normalize_minmax(&vol(vec![2.0, 4.0, 6.0])).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
        assert!(n.is_normalized());
        assert_eq!(normalize_minmax(&vol(vec![3.0; 4])).unwrap().values(), &[0.0; 4]);
        let canon = vec![0.0, 0.3, 1.0, 0.7];
        assert_eq!(normalize_minmax(&vol(canon.clone())).unwrap().values(), &canon[..]);
        assert!(normalize_minmax(&vol(vec![0.0, f32::INFINITY])).is_err());
    }

    #[test]
    fn invert_examples() {
        let n = normalize_minmax(&vol(vec![0.0, 1.0, 0.25])).unwrap();
        let inv = invert_wmf(&n).unwrap();
        assert_eq!(inv.values(), &[1.0, 0.0, 0.75]);
        assert_eq!(invert_wmf(&inv).unwrap().values(), n.values());
        assert!(matches!(invert_wmf(&vol(vec![0.5])), Err(Error::NotNormalized)));
    }

    #[test]
    fn inv_wmf_single_bright_voxel() {
        let wmf = FeatureVolume::new_normalized(meta(4), vec![0.2, 0.2, 0.8, 0.2], FeatureKind::WmfMin).unwrap();
        let out = combine(CombinationId::InvWmf, CombineInputs { wmf: Some(&wmf), ..Default::default() }).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn mag_times_inverse_wmf_power() {
        // pre-normalization value (1 - 0.5)^8 = 1/256 next to a zero voxel
        let wmf = FeatureVolume::new_normalized(meta(2), vec![0.5, 1.0], FeatureKind::WmfMin).unwrap();
        let mag = FeatureVolume::new_normalized(meta(2), vec![1.0, 1.0], FeatureKind::Magnitude).unwrap();
        let out = combine(
            CombinationId::MagXInvWmf8,
            CombineInputs { wmf: Some(&wmf), mag_t: Some(&mag), ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.values(), &[1.0, 0.0]);
        let raw = 1.0 * (1.0f64 - 0.5).powi(8);
        assert_eq!(raw, 1.0 / 256.0);
    }

    #[test]
    fn division_guard_keeps_outputs_finite() {
        let wmf = FeatureVolume::new_normalized(meta(3), vec![0.0, 0.5, 1.0], FeatureKind::WmfMin).unwrap();
        let mag = FeatureVolume::new_normalized(meta(3), vec![1.0, 0.5, 0.0], FeatureKind::Magnitude).unwrap();
        let pc = mag.clone().with_kind(FeatureKind::PcmraFrame);
        for id in CombinationId::ALL {
            let out = combine(
                id,
                CombineInputs { wmf: Some(&wmf), mag_t: Some(&mag), pcmra_t: Some(&pc), pcmra_sys: Some(&pc) },
            )
            .unwrap();
            assert!(out.validate().is_empty(), "{id}: {:?}", out.validate());
            assert_eq!(out.kind(), FeatureKind::Combination(id));
        }
    }

    #[test]
    fn combine_rejects_missing_or_mismatched_inputs() {
        let wmf = FeatureVolume::new_normalized(meta(3), vec![0.0, 0.5, 1.0], FeatureKind::WmfMin).unwrap();
        assert!(combine(CombinationId::MagDivWmf, CombineInputs { wmf: Some(&wmf), ..Default::default() }).is_err());
        let small = FeatureVolume::new_normalized(meta(2), vec![0.0, 1.0], FeatureKind::Magnitude).unwrap();
        let r = combine(CombinationId::MagDivWmf, CombineInputs { wmf: Some(&wmf), mag_t: Some(&small), ..Default::default() });
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
        let raw = vol(vec![0.0, 0.5, 1.0]);
        assert!(matches!(
            combine(CombinationId::InvWmf, CombineInputs { wmf: Some(&raw), ..Default::default() }),
            Err(Error::NotNormalized)
        ));
        assert!(matches!("nope".parse::<CombinationId>(), Err(Error::UnknownCombination(_))));
    }

    #[test]
    fn names_round_trip() {
        for id in CombinationId::ALL {
            assert_eq!(id.name().parse::<CombinationId>().unwrap(), id);
        }
    }

    proptest! {
        #[test]
        fn minmax_idempotent_and_rank_preserving(vals in prop::collection::vec(-100.0f32..100.0, 2..40)) {
            let once = normalize_minmax(&vol(vals.clone())).unwrap();
            let twice = normalize_minmax(&once).unwrap();
            prop_assert_eq!(once.values(), twice.values());
            prop_assert!(once.validate().is_empty());
            for i in 0..vals.len() {
                for j in 0..vals.len() {
                    if vals[i] < vals[j] {
                        prop_assert!(once.values()[i] <= once.values()[j]);
                    }
                }
            }
        }
    }
}
