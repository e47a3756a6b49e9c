//! Raw + JSON sidecar volume container.
//!
//! A container is two files: a JSON header (the path given to the API) and a
//! payload of little-endian `f32` samples next to it with extension `.raw`.
//! The payload holds each component in turn, each stored frame-major with
//! axis order `t, z, y, x` (x fastest). Its length is always
//! `nx * ny * nz * frames * components * 4` bytes, where `frames` is the
//! series length for 4D kinds and 1 for 3D kinds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::volume::{FeatureKind, FeatureVolume, GridMeta, MagnitudeSeries, Mask, VelocitySeries};

pub const FORMAT_NAME: &str = "wmf4d-container";
pub const FORMAT_VERSION: u32 = 1;
pub const AXIS_ORDER: &str = "t,z,y,x";
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Velocity,
    Magnitude,
    Feature,
    Mask,
    Channels,
}

/// One channel of a multi-channel stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub kind: String,
    pub normalized: bool,
}

/// Parsed JSON header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format: String,
    pub version: u32,
    pub kind: ContainerKind,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub n_frames: usize,
    pub frame_duration: Option<f64>,
    pub venc: f64,
    pub axis_order: String,
    pub dtype: String,
    /// Frames stored per component: `n_frames` for series, 1 for volumes.
    pub frames: usize,
    pub components: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelInfo>>,
    /// Payload file name, relative to the header's directory.
    pub payload: String,
}

const REQUIRED_KEYS: [&str; 13] = [
    "format", "version", "kind", "dims", "spacing", "n_frames", "venc", "axis_order", "dtype", "frames",
    "components", "payload", "frame_duration",
];

impl ContainerHeader {
    fn new(kind: ContainerKind, meta: &GridMeta, frames: usize, components: Vec<String>, payload: String) -> Self {
        ContainerHeader {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            kind,
            dims: meta.dims,
            spacing: meta.spacing,
            n_frames: meta.n_frames,
            frame_duration: meta.frame_duration,
            venc: meta.venc,
            axis_order: AXIS_ORDER.into(),
            dtype: DTYPE_F32LE.into(),
            frames,
            components,
            feature_kind: None,
            normalized: None,
            channels: None,
            payload,
        }
    }

    pub fn meta(&self) -> Result<GridMeta> {
        let meta = GridMeta {
            dims: self.dims,
            spacing: self.spacing,
            n_frames: self.n_frames,
            frame_duration: self.frame_duration,
            venc: self.venc,
        };
        meta.check()?;
        Ok(meta)
    }

    pub fn payload_bytes(&self) -> u64 {
        self.dims.iter().product::<usize>() as u64 * self.frames as u64 * self.components.len() as u64 * 4
    }

    fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Header(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| Error::Header("header is not a JSON object".into()))?;
        if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !obj.contains_key(**k)) {
            return Err(Error::MissingKey(missing.to_string()));
        }
        let header: ContainerHeader = serde_json::from_value(value).map_err(|e| Error::Header(e.to_string()))?;
        if header.format != FORMAT_NAME {
            return Err(Error::Header(format!("unknown format `{}`", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::Header(format!("unsupported version {}", header.version)));
        }
        if header.dtype != DTYPE_F32LE {
            return Err(Error::UnknownDtype(header.dtype));
        }
        if header.axis_order != AXIS_ORDER {
            return Err(Error::Header(format!("unsupported axis order `{}`", header.axis_order)));
        }
        if header.components.is_empty() {
            return Err(Error::Header("no components listed".into()));
        }
        Ok(header)
    }
}

/// Any value a container can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Velocity(VelocitySeries),
    Magnitude(MagnitudeSeries),
    Feature(FeatureVolume),
    Mask(Mask),
    Channels(ChannelStack),
}

impl Volume {
    pub fn kind(&self) -> ContainerKind {
        match self {
            Volume::Velocity(_) => ContainerKind::Velocity,
            Volume::Magnitude(_) => ContainerKind::Magnitude,
            Volume::Feature(_) => ContainerKind::Feature,
            Volume::Mask(_) => ContainerKind::Mask,
            Volume::Channels(_) => ContainerKind::Channels,
        }
    }

    pub fn meta(&self) -> &GridMeta {
        match self {
            Volume::Velocity(v) => v.meta(),
            Volume::Magnitude(v) => v.meta(),
            Volume::Feature(v) => v.meta(),
            Volume::Mask(v) => v.meta(),
            Volume::Channels(v) => &v.meta,
        }
    }
}

/// Co-registered 3D volumes stacked as channels for an external learner.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    pub meta: GridMeta,
    pub channels: Vec<FeatureVolume>,
}

impl ChannelStack {
    pub fn new(channels: Vec<FeatureVolume>) -> Result<Self> {
        let first = channels.first().ok_or(Error::EmptySelection)?;
        for c in &channels[1..] {
            first.meta().ensure_same_grid(c.meta(), "channel stack")?;
        }
        Ok(ChannelStack { meta: first.meta().clone(), channels })
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.channels.iter().map(|c| c.kind()).collect()
    }
}

/// Path of the payload that accompanies a header path.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, bytes)
}

fn encode(parts: &[&[f32]]) -> Vec<u8> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(total * 4);
    for part in parts {
        for v in *part {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn mask_as_f32(mask: &Mask) -> Vec<f32> {
    mask.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// Writes header and payload.
pub fn write_container(path: &Path, vol: &Volume) -> Result<()> {
    let payload = payload_path(path);
    let payload_name = payload
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("bad container path {}", path.display())))?
        .to_string();
    let meta = vol.meta();
    let (header, bytes) = match vol {
        Volume::Velocity(v) => {
            let h = ContainerHeader::new(
                ContainerKind::Velocity,
                meta,
                meta.n_frames,
                vec!["u".into(), "v".into(), "w".into()],
                payload_name,
            );
            let c = v.components();
            (h, encode(&[&c[0], &c[1], &c[2]]))
        }
        Volume::Magnitude(m) => {
            let h = ContainerHeader::new(ContainerKind::Magnitude, meta, meta.n_frames, vec!["magnitude".into()], payload_name);
            (h, encode(&[m.values()]))
        }
        Volume::Feature(f) => {
            let mut h = ContainerHeader::new(ContainerKind::Feature, meta, 1, vec![f.kind().to_string()], payload_name);
            h.feature_kind = Some(f.kind().to_string());
            h.normalized = Some(f.is_normalized());
            (h, encode(&[f.values()]))
        }
        Volume::Mask(m) => {
            let h = ContainerHeader::new(ContainerKind::Mask, meta, 1, vec!["mask".into()], payload_name);
            (h, encode(&[&mask_as_f32(m)]))
        }
        Volume::Channels(stack) => {
            let names = stack.channels.iter().map(|c| c.kind().to_string()).collect();
            let mut h = ContainerHeader::new(ContainerKind::Channels, meta, 1, names, payload_name);
            h.channels = Some(
                stack
                    .channels
                    .iter()
                    .map(|c| ChannelInfo { kind: c.kind().to_string(), normalized: c.is_normalized() })
                    .collect(),
            );
            let parts: Vec<&[f32]> = stack.channels.iter().map(|c| c.values()).collect();
            (h, encode(&parts))
        }
    };
    debug_assert_eq!(bytes.len() as u64, header.payload_bytes());
    atomic_write(&payload, &bytes)?;
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Header(e.to_string()))?;
    atomic_write(path, text.as_bytes())
}

/// Reads only the header.
pub fn read_header(path: &Path) -> Result<ContainerHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ContainerHeader::parse(&text)
}

fn split_components(data: Vec<f32>, n: usize) -> Vec<Vec<f32>> {
    let per = data.len() / n;
    data.chunks(per).map(|c| c.to_vec()).collect()
}

/// Reads a container of any kind.
pub fn read_container(path: &Path) -> Result<Volume> {
    let header = read_header(path)?;
    let meta = header.meta()?;
    let payload = path.parent().unwrap_or_else(|| Path::new("")).join(&header.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let expected = header.payload_bytes();
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch { path: payload, expected, actual: bytes.len() as u64 });
    }
    let data: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let ncomp = header.components.len();
    let want_frames = |frames: usize| {
        if header.frames == frames {
            Ok(())
        } else {
            Err(Error::Header(format!("{:?} container must store {frames} frames, header says {}", header.kind, header.frames)))
        }
    };
    let want_components = |n: usize| {
        if ncomp == n {
            Ok(())
        } else {
            Err(Error::Header(format!("{:?} container must list {n} components, found {ncomp}", header.kind)))
        }
    };
    Ok(match header.kind {
        ContainerKind::Velocity => {
            want_frames(meta.n_frames)?;
            want_components(3)?;
            let mut parts = split_components(data, 3).into_iter();
            let comps = [parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap()];
            Volume::Velocity(VelocitySeries::new(meta, comps)?)
        }
        ContainerKind::Magnitude => {
            want_frames(meta.n_frames)?;
            want_components(1)?;
            Volume::Magnitude(MagnitudeSeries::new(meta, data)?)
        }
        ContainerKind::Feature => {
            want_frames(1)?;
            want_components(1)?;
            let kind: FeatureKind = header.feature_kind.as_deref().ok_or_else(|| Error::MissingKey("feature_kind".into()))?.parse()?;
            let normalized = header.normalized.ok_or_else(|| Error::MissingKey("normalized".into()))?;
            Volume::Feature(feature_from(meta, data, kind, normalized)?)
        }
        ContainerKind::Mask => {
            want_frames(1)?;
            want_components(1)?;
            Volume::Mask(mask_from(meta, &data)?)
        }
        ContainerKind::Channels => {
            want_frames(1)?;
            let infos = header.channels.clone().ok_or_else(|| Error::MissingKey("channels".into()))?;
            if infos.len() != ncomp {
                return Err(Error::Header("channels and components disagree".into()));
            }
            let channels = split_components(data, ncomp)
                .into_iter()
                .zip(infos)
                .map(|(values, info)| feature_from(meta.clone(), values, info.kind.parse()?, info.normalized))
                .collect::<Result<Vec<_>>>()?;
            Volume::Channels(ChannelStack::new(channels)?)
        }
    })
}

fn feature_from(meta: GridMeta, values: Vec<f32>, kind: FeatureKind, normalized: bool) -> Result<FeatureVolume> {
    if normalized {
        FeatureVolume::new_normalized(meta, values, kind)
    } else {
        FeatureVolume::new(meta, values, kind)
    }
}

fn mask_from(meta: GridMeta, data: &[f32]) -> Result<Mask> {
    let bits = data
        .iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(Error::InvalidInput(format!("mask value {other} is neither 0 nor 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Mask::new(meta, bits)
}

fn wrong_kind(path: &Path, want: &str, got: ContainerKind) -> Error {
    Error::Header(format!("{} holds a {got:?} container, expected {want}", path.display()))
}

pub fn read_velocity(path: &Path) -> Result<VelocitySeries> {
    match read_container(path)? {
        Volume::Velocity(v) => Ok(v),
        other => Err(wrong_kind(path, "velocity", other.kind())),
    }
}

pub fn read_magnitude(path: &Path) -> Result<MagnitudeSeries> {
    match read_container(path)? {
        Volume::Magnitude(v) => Ok(v),
        other => Err(wrong_kind(path, "magnitude", other.kind())),
    }
}

pub fn read_feature(path: &Path) -> Result<FeatureVolume> {
    match read_container(path)? {
        Volume::Feature(v) => Ok(v),
        other => Err(wrong_kind(path, "feature", other.kind())),
    }
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    match read_container(path)? {
        Volume::Mask(v) => Ok(v),
        other => Err(wrong_kind(path, "mask", other.kind())),
    }
}

pub fn read_channels(path: &Path) -> Result<ChannelStack> {
    match read_container(path)? {
        Volume::Channels(v) => Ok(v),
        other => Err(wrong_kind(path, "channels", other.kind())),
    }
}

/// Stacks `selection` in order and writes it as one multi-channel container.
pub fn export_channels(selection: Vec<FeatureVolume>, path: &Path) -> Result<ChannelStack> {
    let stack = ChannelStack::new(selection)?;
    let vol = Volume::Channels(stack);
    write_container(path, &vol)?;
    match vol {
        Volume::Channels(s) => Ok(s),
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> GridMeta {
        GridMeta::new([3, 2, 2], [2.5, 2.5, 3.0], 4, 1.5).unwrap().with_frame_duration(0.04)
    }

    #[test]
    fn feature_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = meta();
        let f = FeatureVolume::new(m.clone(), (0..12).map(|i| i as f32 * 0.3 - 1.0).collect(), FeatureKind::WmfMin).unwrap();
        let p = dir.path().join("f.json");
        write_container(&p, &Volume::Feature(f.clone())).unwrap();
        assert_eq!(read_feature(&p).unwrap(), f);
        assert!(payload_path(&p).exists());

        let mask = Mask::new(m, (0..12).map(|i| i % 3 == 0).collect()).unwrap();
        let p = dir.path().join("m.json");
        write_container(&p, &Volume::Mask(mask.clone())).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);
        assert!(read_feature(&p).is_err());
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let m = meta();
        let mag = MagnitudeSeries::new(m.clone(), vec![1.0; m.n_samples()]).unwrap();
        let p = dir.path().join("mag.json");
        write_container(&p, &Volume::Magnitude(mag)).unwrap();
        let raw = payload_path(&p);
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 6]).unwrap();
        match read_container(&p) {
            Err(Error::LengthMismatch { expected, actual, .. }) => {
                assert_eq!(expected, 192);
                assert_eq!(actual, 186);
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    fn rewrite_header(p: &Path, edit: impl FnOnce(&mut serde_json::Map<String, Value>)) {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        edit(v.as_object_mut().unwrap());
        fs::write(p, serde_json::to_string(&v).unwrap()).unwrap();
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = meta();
        let f = FeatureVolume::new(m, vec![0.0; 12], FeatureKind::Speed).unwrap();
        let p = dir.path().join("f.json");
        write_container(&p, &Volume::Feature(f.clone())).unwrap();

        rewrite_header(&p, |o| {
            o.insert("venc".into(), Value::from(0.0));
        });
        assert!(matches!(read_container(&p), Err(Error::Validation(_))));

        write_container(&p, &Volume::Feature(f.clone())).unwrap();
        rewrite_header(&p, |o| {
            o.insert("dtype".into(), Value::from("i16le"));
        });
        assert!(matches!(read_container(&p), Err(Error::UnknownDtype(d)) if d == "i16le"));

        write_container(&p, &Volume::Feature(f)).unwrap();
        rewrite_header(&p, |o| {
            o.remove("dims");
        });
        assert!(matches!(read_container(&p), Err(Error::MissingKey(k)) if k == "dims"));
    }

    #[test]
    fn channel_export_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let m = meta();
        let mk = |k, v: f32| FeatureVolume::new(m.clone(), vec![v; 12], k).unwrap();
        let sel = vec![mk(FeatureKind::Magnitude, 1.0), mk(FeatureKind::Speed, 2.0), mk(FeatureKind::WmfMin, 3.0)];
        let p = dir.path().join("ch.json");
        let stack = export_channels(sel, &p).unwrap();
        assert_eq!(stack.kinds(), vec![FeatureKind::Magnitude, FeatureKind::Speed, FeatureKind::WmfMin]);
        let header = read_header(&p).unwrap();
        assert_eq!(header.components, vec!["magnitude", "speed", "wmf_min"]);
        assert_eq!(read_channels(&p).unwrap(), stack);
        assert!(matches!(export_channels(vec![], &p), Err(Error::EmptySelection)));
    }
}
