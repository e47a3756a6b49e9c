//! Synthetic pulsatile-flow phantom with exact ground truth.
//!
//! The vessel is an analytic tube (straight, or an inverted U resembling an
//! aortic arch) carrying a blunted parabolic profile scaled by a cardiac waveform.
//! Magnitude is bright in the vessel, `background_mag_level` in tissue and
//! `lung_mag_level` in an optional low-signal slab. Velocity noise follows the
//! phase-contrast relation `sigma_v = (sqrt(2) / pi) * venc / SNR_local`, so
//! dark regions get noisy velocities.
//!
//! Noise for sample `(t, voxel)` is drawn from its own ChaCha stream, which
//! keeps generation bit-identical for any thread count.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{energy_floor, wmf_scalar, SpectralPlan, Spectrum};
use crate::volume::{Component, GridMeta, MagnitudeSeries, Mask, VelocitySeries};

/// Factor in front of `venc / SNR` in the velocity noise std.
pub const VELOCITY_NOISE_FACTOR: f64 = SQRT_2 / PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Geometry {
    /// Tube along z through the middle of the x-y plane.
    StraightTube { radius_mm: f64 },
    /// Inverted U in the x-z plane: two legs joined by a half-circle arch of
    /// centerline radius `arch_radius_mm`. Flow rises in the low-x leg and
    /// descends in the high-x leg.
    UArch { radius_mm: f64, arch_radius_mm: f64 },
}

impl Geometry {
    pub fn radius_mm(&self) -> f64 {
        match *self {
            Geometry::StraightTube { radius_mm } | Geometry::UArch { radius_mm, .. } => radius_mm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// Gaussian bump peaking at the systolic frame on top of a constant
    /// diastolic level, both relative to peak velocity.
    SystolicPulse {
        #[serde(default = "default_tail")]
        diastolic_tail: f64,
        #[serde(default = "default_width")]
        width_frames: f64,
    },
    /// `cos(2 pi k (t - t_sys) / T)`.
    PureHarmonic { harmonic: usize },
}

fn default_tail() -> f64 {
    0.15
}

fn default_width() -> f64 {
    3.0
}

impl Waveform {
    /// Relative flow at frame `t`; 1 at the systolic frame.
    pub fn value(&self, t: usize, systolic_frame: usize, n_frames: usize) -> f64 {
        match *self {
            Waveform::SystolicPulse { diastolic_tail, width_frames } => {
                let raw = (t as f64 - systolic_frame as f64).abs();
                let d = raw.min(n_frames as f64 - raw);
                let bump = (-d * d / (2.0 * width_frames * width_frames)).exp();
                1.0 - (1.0 - diastolic_tail) * (1.0 - bump)
            }
            Waveform::PureHarmonic { harmonic } => {
                let phase = (t as f64 - systolic_frame as f64) / n_frames as f64;
                (2.0 * PI * harmonic as f64 * phase).cos()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: Geometry,
    pub dims: [usize; 3],
    /// mm
    pub spacing: [f64; 3],
    pub n_frames: usize,
    #[serde(default)]
    pub frame_duration: Option<f64>,
    /// m/s
    pub venc: f64,
    /// m/s, on the centerline at systole.
    pub peak_velocity: f64,
    pub systolic_frame: usize,
    pub waveform: Waveform,
    /// Radial profile `1 - (d/R)^n`; 2 is Poiseuille. The default 4 gives the
    /// blunter profile of large-artery systolic flow.
    #[serde(default = "default_profile_exponent")]
    pub profile_exponent: f64,
    /// Magnitude SNR of the vessel signal (vessel magnitude is 1). `inf`
    /// disables all noise.
    pub snr_mag: f64,
    /// Tissue magnitude as a fraction of vessel magnitude.
    pub background_mag_level: f64,
    /// Magnitude in the lung slab as a fraction of vessel magnitude.
    #[serde(default = "default_lung_level")]
    pub lung_mag_level: f64,
    /// Fraction of the y extent, at high y, occupied by lung. 0 disables it.
    #[serde(default)]
    pub lung_fraction: f64,
    pub rng_seed: u64,
}

fn default_profile_exponent() -> f64 {
    4.0
}

fn default_lung_level() -> f64 {
    0.1
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            geometry: Geometry::UArch { radius_mm: 6.0, arch_radius_mm: 25.0 },
            dims: [40, 24, 40],
            spacing: [2.5, 2.5, 2.5],
            n_frames: 20,
            frame_duration: None,
            venc: 1.5,
            peak_velocity: 1.0,
            systolic_frame: 5,
            waveform: Waveform::SystolicPulse { diastolic_tail: default_tail(), width_frames: default_width() },
            profile_exponent: default_profile_exponent(),
            snr_mag: 20.0,
            background_mag_level: 1.0,
            lung_mag_level: default_lung_level(),
            lung_fraction: 0.25,
            rng_seed: 0,
        }
    }
}

/// Generated phantom.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub magnitude: MagnitudeSeries,
    pub velocity: VelocitySeries,
    pub mask: Mask,
}

/// Noise-free properties of one voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelTruth {
    pub inside: bool,
    /// Distance to the centerline in mm.
    pub distance_mm: f64,
    /// Unit flow direction at the nearest centerline point.
    pub direction: [f64; 3],
    /// Poiseuille factor `1 - (d / R)^2`, 0 outside.
    pub profile: f64,
    pub magnitude: f64,
    pub lung: bool,
}

impl PhantomSpec {
    pub fn straight_tube(dims: [usize; 3], n_frames: usize) -> Self {
        PhantomSpec {
            geometry: Geometry::StraightTube { radius_mm: 6.0 },
            dims,
            n_frames,
            lung_fraction: 0.0,
            systolic_frame: 5.min(n_frames - 1),
            ..PhantomSpec::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: PhantomSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("phantom spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn meta(&self) -> Result<GridMeta> {
        let mut meta = GridMeta::new(self.dims, self.spacing, self.n_frames, self.venc)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        meta.frame_duration = self.frame_duration;
        meta.check().map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(meta)
    }

    fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.dims[a] as f64 * self.spacing[a])
    }

    /// Centerline anchor snapped to a voxel center near the middle of an axis.
    fn mid(&self, axis: usize) -> f64 {
        ((self.dims[axis] / 2) as f64 + 0.5) * self.spacing[axis]
    }

    fn lung_start_mm(&self) -> f64 {
        (1.0 - self.lung_fraction) * self.extent()[1]
    }

    /// Arch center height in mm, leaving two voxels above the vessel.
    fn arch_center_z(&self, radius: f64, arch_radius: f64) -> f64 {
        self.extent()[2] - arch_radius - radius - 2.0 * self.spacing[2]
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        self.meta()?;
        let r = self.geometry.radius_mm();
        let max_spacing = self.spacing.iter().copied().fold(0.0, f64::max);
        if !(r >= 2.0 * max_spacing) {
            return bad(format!("radius {r} mm must be at least twice the largest spacing {max_spacing} mm"));
        }
        if !(self.peak_velocity > 0.0 && self.peak_velocity <= self.venc) {
            return bad(format!("peak_velocity {} must lie in (0, venc={}]", self.peak_velocity, self.venc));
        }
        if self.systolic_frame >= self.n_frames {
            return bad(format!("systolic_frame {} must be < n_frames {}", self.systolic_frame, self.n_frames));
        }
        if !(self.profile_exponent >= 1.0 && self.profile_exponent.is_finite()) {
            return bad(format!("profile_exponent {} must be finite and >= 1", self.profile_exponent));
        }
        if !(self.snr_mag > 0.0) {
            return bad(format!("snr_mag {} must be > 0", self.snr_mag));
        }
        for (name, level) in [("background_mag_level", self.background_mag_level), ("lung_mag_level", self.lung_mag_level)] {
            if !(level.is_finite() && level >= 0.0) {
                return bad(format!("{name} {level} must be finite and >= 0"));
            }
        }
        if !(0.0..1.0).contains(&self.lung_fraction) {
            return bad(format!("lung_fraction {} must lie in [0, 1)", self.lung_fraction));
        }
        match self.waveform {
            Waveform::SystolicPulse { diastolic_tail, width_frames } => {
                if !(0.0..=1.0).contains(&diastolic_tail) || !(width_frames > 0.0) {
                    return bad("systolic pulse needs tail in [0, 1] and width > 0".into());
                }
            }
            Waveform::PureHarmonic { harmonic } => {
                if harmonic == 0 || harmonic > self.n_frames / 2 {
                    return bad(format!("harmonic {harmonic} must lie in 1..={}", self.n_frames / 2));
                }
            }
        }
        let ext = self.extent();
        let cy = self.mid(1);
        if cy - r < 0.0 || cy + r > ext[1] {
            return bad("vessel does not fit along y".into());
        }
        if self.lung_fraction > 0.0 && cy + r >= self.lung_start_mm() {
            return bad("lung slab overlaps the vessel".into());
        }
        match self.geometry {
            Geometry::StraightTube { .. } => {
                let cx = self.mid(0);
                if cx - r < 0.0 || cx + r > ext[0] {
                    return bad("tube does not fit along x".into());
                }
            }
            Geometry::UArch { arch_radius_mm: ra, .. } => {
                if !(ra >= 2.0 * r) {
                    return bad(format!("arch radius {ra} mm must be at least twice the tube radius"));
                }
                let cx = self.mid(0);
                if cx - ra - r < 0.0 || cx + ra + r > ext[0] {
                    return bad("arch does not fit along x".into());
                }
                if self.arch_center_z(r, ra) < r {
                    return bad("arch does not fit along z".into());
                }
            }
        }
        Ok(())
    }

    /// Position of voxel `(x, y, z)` center in mm.
    fn position(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            (x as f64 + 0.5) * self.spacing[0],
            (y as f64 + 0.5) * self.spacing[1],
            (z as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Distance to the centerline and flow direction there.
    fn centerline(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let cx = self.mid(0);
        let cy = self.mid(1);
        match self.geometry {
            Geometry::StraightTube { .. } => (((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt(), [0.0, 0.0, 1.0]),
            Geometry::UArch { radius_mm, arch_radius_mm: ra } => {
                let cz = self.arch_center_z(radius_mm, ra);
                let dy = p[1] - cy;
                let leg = |x0: f64| {
                    let zc = p[2].clamp(0.0, cz);
                    ((p[0] - x0).powi(2) + dy * dy + (p[2] - zc).powi(2)).sqrt()
                };
                let mut best = (leg(cx - ra), [0.0, 0.0, 1.0]);
                let right = leg(cx + ra);
                if right < best.0 {
                    best = (right, [0.0, 0.0, -1.0]);
                }
                let (qx, qz) = (p[0] - cx, p[2] - cz);
                if qz > 0.0 {
                    let rho = (qx * qx + qz * qz).sqrt();
                    let d = ((rho - ra).powi(2) + dy * dy).sqrt();
                    if d < best.0 {
                        // tangent of the arch traversed from the low-x leg to the high-x leg
                        best = (d, [qz / rho, 0.0, -qx / rho]);
                    }
                }
                best
            }
        }
    }

    pub fn voxel_truth(&self, x: usize, y: usize, z: usize) -> VoxelTruth {
        let p = self.position(x, y, z);
        let r = self.geometry.radius_mm();
        let (d, direction) = self.centerline(p);
        let inside = d <= r;
        let lung = !inside && self.lung_fraction > 0.0 && p[1] >= self.lung_start_mm();
        let magnitude = if inside {
            1.0
        } else if lung {
            self.lung_mag_level
        } else {
            self.background_mag_level
        };
        VoxelTruth {
            inside,
            distance_mm: d,
            direction,
            profile: if inside { 1.0 - (d / r).powf(self.profile_exponent) } else { 0.0 },
            magnitude,
            lung,
        }
    }

    /// Magnitude noise std (vessel magnitude is 1).
    pub fn magnitude_noise_std(&self) -> f64 {
        if self.snr_mag.is_finite() {
            1.0 / self.snr_mag
        } else {
            0.0
        }
    }

    /// Velocity noise std for a voxel of true magnitude `level`, capped at venc.
    pub fn velocity_noise_std(&self, level: f64) -> f64 {
        if !self.snr_mag.is_finite() {
            return 0.0;
        }
        let snr_local = level * self.snr_mag;
        if snr_local <= 0.0 {
            return self.venc;
        }
        (VELOCITY_NOISE_FACTOR * self.venc / snr_local).min(self.venc)
    }
}

fn wrap_to_venc(v: f64, venc: f64) -> f64 {
    if v.abs() <= venc {
        v
    } else {
        (v + venc).rem_euclid(2.0 * venc) - venc
    }
}

/// Builds magnitude, velocity and the exact vessel mask.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.check()?;
    let meta = spec.meta()?;
    let [nx, ny, nz] = spec.dims;
    let nt = spec.n_frames;
    let nv = meta.n_voxels();
    let slice_len = nx * ny;

    let truth: Vec<VoxelTruth> = (0..nv)
        .into_par_iter()
        .map(|i| {
            let (x, y, z) = meta.voxel_coords(i);
            spec.voxel_truth(x, y, z)
        })
        .collect();
    let waveform: Vec<f64> = (0..nt).map(|t| spec.waveform.value(t, spec.systolic_frame, nt)).collect();
    let sigma_m = spec.magnitude_noise_std();
    let noisy = sigma_m > 0.0;
    let base_rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let n = meta.n_samples();
    let (mut u, mut v, mut w, mut mag) = (vec![0f32; n], vec![0f32; n], vec![0f32; n], vec![0f32; n]);
    u.par_chunks_mut(slice_len)
        .zip(v.par_chunks_mut(slice_len))
        .zip(w.par_chunks_mut(slice_len))
        .zip(mag.par_chunks_mut(slice_len))
        .enumerate()
        .for_each(|(chunk, (((us, vs), ws), ms))| {
            let t = chunk / nz;
            let z = chunk % nz;
            for k in 0..slice_len {
                let voxel = z * slice_len + k;
                let vt = &truth[voxel];
                let flow = spec.peak_velocity * vt.profile * waveform[t];
                let mut vel = vt.direction.map(|d| d * flow);
                let mut m = vt.magnitude;
                if noisy {
                    let mut rng = base_rng.clone();
                    rng.set_stream((voxel * nt + t) as u64);
                    let sigma_v = spec.velocity_noise_std(vt.magnitude);
                    for c in vel.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *c = wrap_to_venc(*c + sigma_v * e, spec.venc);
                    }
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m = (m + sigma_m * e).abs();
                }
                us[k] = vel[0] as f32;
                vs[k] = vel[1] as f32;
                ws[k] = vel[2] as f32;
                ms[k] = m as f32;
            }
        });

    let mask_bits = truth.iter().map(|t| t.inside).collect();
    Ok(Phantom {
        magnitude: MagnitudeSeries::new(meta.clone(), mag)?,
        velocity: VelocitySeries::new(meta.clone(), [u, v, w])?,
        mask: Mask::new(meta, mask_bits)?,
    })
}

/// Diagnostics at one voxel: speed over time, component spectra and WMFs.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub point: (usize, usize, usize),
    pub speed: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Velocity samples per component, `u, v, w`.
    pub components: [Vec<f64>; 3],
    pub spectra: [Spectrum; 3],
    pub wmf: [f64; 3],
    pub wmf_min: f64,
}

/// Point-wise speed and spectral analysis at the given voxels.
pub fn probe_voxels(
    mag: &MagnitudeSeries,
    vel: &VelocitySeries,
    points: &[(usize, usize, usize)],
) -> Result<Vec<ProbeReport>> {
    mag.meta().ensure_same_grid(vel.meta(), "probe")?;
    let meta = vel.meta();
    let plan = SpectralPlan::new(meta.n_frames)?;
    let floor = energy_floor(meta.n_frames, meta.venc);
    points
        .iter()
        .map(|&(x, y, z)| {
            for (axis, i, n) in [("x", x, meta.dims[0]), ("y", y, meta.dims[1]), ("z", z, meta.dims[2])] {
                if i >= n {
                    return Err(Error::IndexOutOfRange { axis, index: i, extent: n });
                }
            }
            let voxel = meta.voxel_index(x, y, z);
            let components = Component::ALL.map(|c| vel.voxel_series(c, voxel));
            let speed = (0..meta.n_frames)
                .map(|t| components.iter().map(|s| s[t] * s[t]).sum::<f64>().sqrt())
                .collect();
            let spectra = [
                plan.energy_spectrum(&components[0])?,
                plan.energy_spectrum(&components[1])?,
                plan.energy_spectrum(&components[2])?,
            ];
            let wmf = [0, 1, 2].map(|c| wmf_scalar(&spectra[c], floor));
            let wmf_min = wmf[0].min(wmf[1]).min(wmf[2]);
            Ok(ProbeReport {
                point: (x, y, z),
                speed,
                magnitude: mag.voxel_series(voxel),
                components,
                spectra,
                wmf,
                wmf_min,
            })
        })
        .collect()
}
