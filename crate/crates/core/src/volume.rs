//! Grid metadata, the 4D series and 3D volume containers, and invariant checks.
//!
//! Every field is stored as `f32` in t-major order: frame, then z, then y,
//! with x varying fastest. A voxel's time series is therefore a gather with
//! the fixed stride `nx * ny * nz`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CombinationId;

/// Relative tolerance used when comparing voxel spacings of two grids.
const SPACING_RTOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// Voxel counts `[nx, ny, nz]`.
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    pub n_frames: usize,
    /// Seconds per cardiac frame, when known.
    pub frame_duration: Option<f64>,
    /// Velocity-encoding limit in m/s.
    pub venc: f64,
}

impl GridMeta {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], n_frames: usize, venc: f64) -> Result<Self> {
        let meta = GridMeta { dims, spacing, n_frames, frame_duration: None, venc };
        meta.check()?;
        Ok(meta)
    }

    pub fn with_frame_duration(mut self, seconds: f64) -> Self {
        self.frame_duration = Some(seconds);
        self
    }

    /// Returns the list of broken metadata invariants.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dims.contains(&0) {
            out.push(format!("dims {:?} must all be >= 1", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            out.push(format!("spacing {:?} must be finite and > 0", self.spacing));
        }
        if self.n_frames < 2 {
            out.push(format!("n_frames {} must be >= 2", self.n_frames));
        }
        if !(self.venc.is_finite() && self.venc > 0.0) {
            out.push(format!("venc {} must be finite and > 0", self.venc));
        }
        if let Some(d) = self.frame_duration {
            if !(d.is_finite() && d > 0.0) {
                out.push(format!("frame_duration {d} must be finite and > 0"));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_samples(&self) -> usize {
        self.n_voxels() * self.n_frames
    }

    /// Flat index of voxel `(x, y, z)` within one frame.
    #[inline]
    pub fn voxel_index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.dims;
        (z * ny + y) * nx + x
    }

    #[inline]
    pub fn voxel_coords(&self, index: usize) -> (usize, usize, usize) {
        let [nx, ny, _] = self.dims;
        (index % nx, (index / nx) % ny, index / (nx * ny))
    }

    /// Flat index of sample `(t, x, y, z)` in a 4D field.
    #[inline]
    pub fn sample_index(&self, t: usize, x: usize, y: usize, z: usize) -> usize {
        t * self.n_voxels() + self.voxel_index(x, y, z)
    }

    #[inline]
    pub fn sample_coords(&self, index: usize) -> (usize, usize, usize, usize) {
        let nv = self.n_voxels();
        let (x, y, z) = self.voxel_coords(index % nv);
        (index / nv, x, y, z)
    }

    /// Number of strictly positive frequency bins, `floor(T / 2)`.
    pub fn n_positive_bins(&self) -> usize {
        self.n_frames / 2
    }

    /// Same voxel grid: equal dims and spacings equal to a relative 1e-4.
    pub fn same_grid(&self, other: &GridMeta) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= SPACING_RTOL * a.abs().max(b.abs()))
    }

    pub(crate) fn ensure_same_grid(&self, other: &GridMeta, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: grid {:?}@{:?} vs {:?}@{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// Velocity component axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// Left-right.
    U,
    /// Anterior-posterior.
    V,
    /// Foot-head.
    W,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::U, Component::V, Component::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::U => "u",
            Component::V => "v",
            Component::W => "w",
        }
    }
}

/// Three-component velocity field in m/s.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySeries {
    meta: GridMeta,
    components: [Vec<f32>; 3],
}

impl VelocitySeries {
    pub fn new(meta: GridMeta, components: [Vec<f32>; 3]) -> Result<Self> {
        meta.check()?;
        let n = meta.n_samples();
        for (c, data) in Component::ALL.iter().zip(components.iter()) {
            if data.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "component {} has {} samples, grid needs {n}",
                    c.name(),
                    data.len()
                )));
            }
        }
        Ok(VelocitySeries { meta, components })
    }

    pub fn zeros(meta: GridMeta) -> Result<Self> {
        let n = meta.n_samples();
        Self::new(meta, [vec![0.0; n], vec![0.0; n], vec![0.0; n]])
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn component(&self, c: Component) -> &[f32] {
        &self.components[c.index()]
    }

    pub fn components(&self) -> &[Vec<f32>; 3] {
        &self.components
    }

    pub fn into_components(self) -> (GridMeta, [Vec<f32>; 3]) {
        (self.meta, self.components)
    }

    /// Slice of one component at frame `t`.
    pub fn frame(&self, c: Component, t: usize) -> Result<&[f32]> {
        check_frame(&self.meta, t)?;
        let nv = self.meta.n_voxels();
        Ok(&self.components[c.index()][t * nv..(t + 1) * nv])
    }

    /// Time series of component `c` at a voxel.
    pub fn voxel_series(&self, c: Component, voxel: usize) -> Vec<f64> {
        gather_series(&self.components[c.index()], &self.meta, voxel)
    }
}

/// Anatomical magnitude over time, non-negative scanner units.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSeries {
    meta: GridMeta,
    values: Vec<f32>,
}

impl MagnitudeSeries {
    pub fn new(meta: GridMeta, values: Vec<f32>) -> Result<Self> {
        meta.check()?;
        if values.len() != meta.n_samples() {
            return Err(Error::ShapeMismatch(format!(
                "magnitude has {} samples, grid needs {}",
                values.len(),
                meta.n_samples()
            )));
        }
        Ok(MagnitudeSeries { meta, values })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> Result<&[f32]> {
        check_frame(&self.meta, t)?;
        let nv = self.meta.n_voxels();
        Ok(&self.values[t * nv..(t + 1) * nv])
    }

    /// The magnitude image at frame `t` as an unnormalized feature volume.
    pub fn frame_volume(&self, t: usize) -> Result<FeatureVolume> {
        let data = self.frame(t)?.to_vec();
        FeatureVolume::new(self.meta.clone(), data, FeatureKind::Magnitude)
    }

    pub fn voxel_series(&self, voxel: usize) -> Vec<f64> {
        gather_series(&self.values, &self.meta, voxel)
    }
}

fn check_frame(meta: &GridMeta, t: usize) -> Result<()> {
    if t < meta.n_frames {
        Ok(())
    } else {
        Err(Error::FrameOutOfRange { frame: t, n_frames: meta.n_frames })
    }
}

fn gather_series(data: &[f32], meta: &GridMeta, voxel: usize) -> Vec<f64> {
    let nv = meta.n_voxels();
    (0..meta.n_frames).map(|t| data[t * nv + voxel] as f64).collect()
}

/// Formula that produced a feature volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    WmfU,
    WmfV,
    WmfW,
    WmfMin,
    PcmraFrame,
    PcmraSys,
    /// Velocity norm at one frame.
    Speed,
    /// Anatomical image at one frame.
    Magnitude,
    Combination(CombinationId),
    /// Imported from a foreign file with no known provenance.
    External,
}

impl FeatureKind {
    pub fn wmf_of(c: Component) -> Self {
        match c {
            Component::U => FeatureKind::WmfU,
            Component::V => FeatureKind::WmfV,
            Component::W => FeatureKind::WmfW,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureKind::WmfU => "wmf_u",
            FeatureKind::WmfV => "wmf_v",
            FeatureKind::WmfW => "wmf_w",
            FeatureKind::WmfMin => "wmf_min",
            FeatureKind::PcmraFrame => "pcmra_frame",
            FeatureKind::PcmraSys => "pcmra_sys",
            FeatureKind::Speed => "speed",
            FeatureKind::Magnitude => "magnitude",
            FeatureKind::External => "external",
            FeatureKind::Combination(id) => return write!(f, "combo:{}", id.name()),
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "wmf_u" => FeatureKind::WmfU,
            "wmf_v" => FeatureKind::WmfV,
            "wmf_w" => FeatureKind::WmfW,
            "wmf_min" => FeatureKind::WmfMin,
            "pcmra_frame" => FeatureKind::PcmraFrame,
            "pcmra_sys" => FeatureKind::PcmraSys,
            "speed" => FeatureKind::Speed,
            "magnitude" => FeatureKind::Magnitude,
            "external" => FeatureKind::External,
            other => match other.strip_prefix("combo:") {
                Some(id) => FeatureKind::Combination(id.parse()?),
                None => return Err(Error::Header(format!("unknown feature kind `{other}`"))),
            },
        })
    }
}

/// One scalar per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    meta: GridMeta,
    values: Vec<f32>,
    kind: FeatureKind,
    normalized: bool,
}

impl FeatureVolume {
    /// Builds an unnormalized volume.
    pub fn new(meta: GridMeta, values: Vec<f32>, kind: FeatureKind) -> Result<Self> {
        meta.check()?;
        if values.len() != meta.n_voxels() {
            return Err(Error::ShapeMismatch(format!(
                "feature has {} voxels, grid needs {}",
                values.len(),
                meta.n_voxels()
            )));
        }
        Ok(FeatureVolume { meta, values, kind, normalized: false })
    }

    /// Builds a volume flagged as normalized, rejecting values outside [0, 1].
    pub fn new_normalized(meta: GridMeta, values: Vec<f32>, kind: FeatureKind) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "normalized feature contains {bad}, outside [0, 1]"
            )));
        }
        let mut f = Self::new(meta, values, kind)?;
        f.normalized = true;
        Ok(f)
    }

    pub(crate) fn from_parts_unchecked(
        meta: GridMeta,
        values: Vec<f32>,
        kind: FeatureKind,
        normalized: bool,
    ) -> Self {
        debug_assert_eq!(values.len(), meta.n_voxels());
        FeatureVolume { meta, values, kind, normalized }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.meta.voxel_index(x, y, z)]
    }

    /// `(min, max)` over all voxels.
    pub fn range(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Binary segmentation volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    meta: GridMeta,
    values: Vec<bool>,
}

impl Mask {
    pub fn new(meta: GridMeta, values: Vec<bool>) -> Result<Self> {
        meta.check()?;
        if values.len() != meta.n_voxels() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} voxels, grid needs {}",
                values.len(),
                meta.n_voxels()
            )));
        }
        Ok(Mask { meta, values })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[self.meta.voxel_index(x, y, z)]
    }
}

/// Overlap metrics between a prediction and a ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub dice: f64,
    pub recall: f64,
    pub precision: f64,
    /// Threshold that produced the prediction, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
}

/// What went wrong, and where.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Meta(String),
    Shape(String),
    VelocityOutOfRange { component: Component, t: usize, x: usize, y: usize, z: usize, value: f32 },
    NonFinite { field: &'static str, t: usize, x: usize, y: usize, z: usize },
    NegativeMagnitude { t: usize, x: usize, y: usize, z: usize, value: f32 },
    OutsideUnitRange { x: usize, y: usize, z: usize, value: f32 },
    NotCanonicalRange { min: f32, max: f32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Meta(s) => write!(f, "metadata: {s}"),
            Violation::Shape(s) => write!(f, "shape: {s}"),
            Violation::VelocityOutOfRange { component, t, x, y, z, value } => write!(
                f,
                "velocity component {} at (t={t}, x={x}, y={y}, z={z}) = {value} exceeds venc",
                component.name()
            ),
            Violation::NonFinite { field, t, x, y, z } => {
                write!(f, "{field} at (t={t}, x={x}, y={y}, z={z}) is not finite")
            }
            Violation::NegativeMagnitude { t, x, y, z, value } => {
                write!(f, "magnitude at (t={t}, x={x}, y={y}, z={z}) = {value} is negative")
            }
            Violation::OutsideUnitRange { x, y, z, value } => {
                write!(f, "normalized value at (x={x}, y={y}, z={z}) = {value} outside [0, 1]")
            }
            Violation::NotCanonicalRange { min, max } => {
                write!(f, "normalized non-constant volume spans [{min}, {max}], expected [0, 1]")
            }
        }
    }
}

/// Invariant checks that report problems as data instead of failing.
pub trait Validate {
    fn validate(&self) -> Vec<Violation>;
}

impl Validate for GridMeta {
    fn validate(&self) -> Vec<Violation> {
        self.problems().into_iter().map(Violation::Meta).collect()
    }
}

impl Validate for VelocitySeries {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.meta.validate();
        let venc = self.meta.venc;
        for c in Component::ALL {
            for (i, &v) in self.component(c).iter().enumerate() {
                let (t, x, y, z) = self.meta.sample_coords(i);
                if !v.is_finite() {
                    out.push(Violation::NonFinite { field: c.name(), t, x, y, z });
                } else if (v as f64).abs() > venc {
                    out.push(Violation::VelocityOutOfRange { component: c, t, x, y, z, value: v });
                }
            }
        }
        out
    }
}

impl Validate for MagnitudeSeries {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.meta.validate();
        for (i, &v) in self.values.iter().enumerate() {
            let (t, x, y, z) = self.meta.sample_coords(i);
            if !v.is_finite() {
                out.push(Violation::NonFinite { field: "magnitude", t, x, y, z });
            } else if v < 0.0 {
                out.push(Violation::NegativeMagnitude { t, x, y, z, value: v });
            }
        }
        out
    }
}

impl Validate for FeatureVolume {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.meta.validate();
        let mut finite = true;
        for (i, &v) in self.values.iter().enumerate() {
            let (x, y, z) = self.meta.voxel_coords(i);
            if !v.is_finite() {
                finite = false;
                out.push(Violation::NonFinite { field: "feature", t: 0, x, y, z });
            } else if self.normalized && !(0.0..=1.0).contains(&v) {
                out.push(Violation::OutsideUnitRange { x, y, z, value: v });
            }
        }
        if self.normalized && finite && !self.values.is_empty() {
            let (min, max) = self.range();
            let constant = min == max;
            if !constant && (min != 0.0 || max != 1.0) {
                out.push(Violation::NotCanonicalRange { min, max });
            }
        }
        out
    }
}

impl Validate for Mask {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.meta.validate();
        if self.values.len() != self.meta.n_voxels() {
            out.push(Violation::Shape(format!(
                "mask has {} voxels, grid needs {}",
                self.values.len(),
                self.meta.n_voxels()
            )));
        }
        out
    }
}
