//! Per-voxel temporal Fourier energies and the weighted mean frequency (WMF).
//!
//! Frequencies are harmonic indices of the cardiac cycle: bin `i` of a
//! `T`-frame series sits at `f_i = i`. Only the strictly positive bins
//! `1..=floor(T/2)` are kept; DC and the negative half are dropped. For even
//! `T` the Nyquist bin is kept once.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{Component, FeatureKind, FeatureVolume, GridMeta, VelocitySeries};

/// Relative energy floor: spectra whose total energy is at most
/// `ENERGY_FLOOR_SCALE * T * venc^2` are treated as empty.
pub const ENERGY_FLOOR_SCALE: f64 = 1e-12;

/// Energy floor below which a voxel is considered non-pulsatile.
pub fn energy_floor(n_frames: usize, venc: f64) -> f64 {
    ENERGY_FLOOR_SCALE * n_frames as f64 * venc * venc
}

/// Energies of the strictly positive frequency bins of one real series.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    energies: Vec<f64>,
    freqs: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum over harmonics `1..=energies.len()`.
    pub fn from_energies(energies: Vec<f64>) -> Result<Self> {
        if let Some(e) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::InvalidInput(format!("spectral energy {e} is not a finite non-negative value")));
        }
        let freqs = (1..=energies.len()).map(|i| i as f64).collect();
        Ok(Spectrum { energies, freqs })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Number of strictly positive bins.
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn total_energy(&self) -> f64 {
        self.energies.iter().sum()
    }

    /// Harmonic of the most energetic bin (first on ties).
    pub fn peak_freq(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&e, &f) in self.energies.iter().zip(&self.freqs) {
            if best.is_none_or(|(be, _)| e > be) {
                best = Some((e, f));
            }
        }
        best.map(|(_, f)| f)
    }
}

/// A forward transform of fixed length, reusable across voxels and threads.
#[derive(Clone)]
pub struct SpectralPlan {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectralPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::DegenerateSeries(len));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(SpectralPlan { len, fft })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn n_bins(&self) -> usize {
        self.len / 2
    }

    /// Transforms every consecutive `len`-chunk of `buf` in place.
    fn transform(&self, buf: &mut [Complex<f64>], scratch: &mut Vec<Complex<f64>>) {
        let need = self.fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex::new(0.0, 0.0));
        }
        self.fft.process_with_scratch(buf, &mut scratch[..need]);
    }

    pub fn energy_spectrum(&self, samples: &[f64]) -> Result<Spectrum> {
        if samples.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "series has {} samples, plan expects {}",
                samples.len(),
                self.len
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("series contains a non-finite sample".into()));
        }
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        let mut scratch = Vec::new();
        self.transform(&mut buf, &mut scratch);
        let energies = positive_energies(&buf);
        Ok(Spectrum { freqs: (1..=energies.len()).map(|i| i as f64).collect(), energies })
    }
}

fn positive_energies(coeffs: &[Complex<f64>]) -> Vec<f64> {
    coeffs[1..=coeffs.len() / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// `|FT|^2` of a real series over the strictly positive frequency bins.
pub fn energy_spectrum(samples: &[f64]) -> Result<Spectrum> {
    SpectralPlan::new(samples.len())?.energy_spectrum(samples)
}

/// Energy-weighted mean of the positive harmonics.
///
/// When the total energy does not exceed `floor` the voxel carries no
/// pulsatile signal and the highest harmonic `f_n` is returned.
pub fn wmf_scalar(spec: &Spectrum, floor: f64) -> f64 {
    wmf_from_energies(&spec.energies, floor)
}

fn wmf_from_energies(energies: &[f64], floor: f64) -> f64 {
    let n = energies.len() as f64;
    let mut total = 0.0;
    let mut weighted = 0.0;
    for (i, &e) in energies.iter().enumerate() {
        total += e;
        weighted += e * (i + 1) as f64;
    }
    if !(total > floor) {
        return n;
    }
    (weighted / total).clamp(1.0, n)
}

/// WMF of one scalar `(T, nx, ny, nz)` field, computed voxel by voxel.
///
/// Work is split by z-slice; each voxel's arithmetic is independent of the
/// schedule, so results are bit-identical for any thread count.
pub fn wmf_field(meta: &GridMeta, field: &[f32], kind: FeatureKind) -> Result<FeatureVolume> {
    meta.check()?;
    if field.len() != meta.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} samples, grid needs {}",
            field.len(),
            meta.n_samples()
        )));
    }
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("field contains a non-finite sample".into()));
    }
    let plan = SpectralPlan::new(meta.n_frames)?;
    let floor = energy_floor(meta.n_frames, meta.venc);
    let nt = meta.n_frames;
    let nv = meta.n_voxels();
    let slice_len = meta.dims[0] * meta.dims[1];

    let mut out = vec![0f32; nv];
    out.par_chunks_mut(slice_len).enumerate().for_each_init(
        || (Vec::new(), Vec::new()),
        |(buf, scratch): &mut (Vec<Complex<f64>>, Vec<Complex<f64>>), (z, dst)| {
            let base = z * slice_len;
            let count = dst.len();
            buf.clear();
            buf.resize(count * nt, Complex::new(0.0, 0.0));
            for t in 0..nt {
                let frame = &field[t * nv + base..t * nv + base + count];
                for (v, &s) in frame.iter().enumerate() {
                    buf[v * nt + t] = Complex::new(s as f64, 0.0);
                }
            }
            plan.transform(buf, scratch);
            let mut energies = Vec::with_capacity(nt / 2);
            for (v, d) in dst.iter_mut().enumerate() {
                energies.clear();
                energies.extend(positive_energies(&buf[v * nt..(v + 1) * nt]));
                *d = wmf_from_energies(&energies, floor) as f32;
            }
        },
    );
    Ok(FeatureVolume::from_parts_unchecked(meta.clone(), out, kind, false))
}

/// WMF volume of one velocity component.
pub fn wmf_component(series: &VelocitySeries, c: Component) -> Result<FeatureVolume> {
    wmf_field(series.meta(), series.component(c), FeatureKind::wmf_of(c))
}

/// The three per-component WMF volumes, in `u, v, w` order.
pub fn wmf_components(series: &VelocitySeries) -> Result<[FeatureVolume; 3]> {
    Ok([
        wmf_component(series, Component::U)?,
        wmf_component(series, Component::V)?,
        wmf_component(series, Component::W)?,
    ])
}

/// Voxel-wise minimum of the three component WMF volumes.
pub fn wmf_min(a: &FeatureVolume, b: &FeatureVolume, c: &FeatureVolume) -> Result<FeatureVolume> {
    a.meta().ensure_same_grid(b.meta(), "wmf_min")?;
    a.meta().ensure_same_grid(c.meta(), "wmf_min")?;
    for f in [a, b, c] {
        if f.is_normalized() {
            return Err(Error::InvalidInput("wmf_min expects unnormalized component volumes".into()));
        }
    }
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .zip(c.values())
        .map(|((&x, &y), &z)| x.min(y).min(z))
        .collect();
    Ok(FeatureVolume::from_parts_unchecked(a.meta().clone(), values, FeatureKind::WmfMin, false))
}

/// Fused WMF straight from a velocity series.
pub fn wmf_min_series(series: &VelocitySeries) -> Result<FeatureVolume> {
    let [u, v, w] = wmf_components(series)?;
    wmf_min(&u, &v, &w)
}
