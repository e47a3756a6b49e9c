//! Weighted mean frequency (WMF) features for 4D flow MRI, the PC-MRA
//! baseline, threshold segmentation with overlap metrics, and a synthetic
//! pulsatile-flow phantom that supplies ground truth.

pub mod angiography;
pub mod cli;
pub mod error;
pub mod features;
pub mod io;
pub mod phantom;
pub mod segmentation;
pub mod spectral;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Component, FeatureKind, FeatureVolume, GridMeta, MagnitudeSeries, Mask, MetricsReport, Validate, VelocitySeries};
