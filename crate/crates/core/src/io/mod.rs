//! On-disk formats: the native container, NIfTI-1 ingestion and PGM slices.

pub mod container;
pub mod nifti;
pub mod render;

pub use container::{
    export_channels, read_channels, read_container, read_feature, read_magnitude, read_mask, read_velocity,
    write_container, ChannelStack, Volume,
};
pub use nifti::{read_nifti1, NiftiImage};
pub use render::{render_feature_slice, render_mask_slice, Axis};
