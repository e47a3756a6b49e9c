//! Minimal NIfTI-1 reader.
//!
//! Supports single-file `.nii` (magic `n+1`) and header/image pairs (magic
//! `ni1`, data in the sibling `.img`), either byte order, up to four
//! dimensions, and the `uint8`, `int16` and `float32` datatypes. When
//! `scl_slope` is non-zero and finite, values are rescaled to
//! `value * scl_slope + scl_inter`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::volume::{FeatureKind, FeatureVolume, GridMeta, MagnitudeSeries, Mask};

pub const HEADER_SIZE: usize = 348;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

/// Header fields the reader uses.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub big_endian: bool,
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Header(format!("NIfTI header needs {HEADER_SIZE} bytes, got {}", bytes.len())));
        }
        let big_endian = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            false
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            true
        } else {
            return Err(Error::Header("sizeof_hdr is not 348 in either byte order".into()));
        };
        if big_endian {
            Self::parse_with::<BigEndian>(bytes, true)
        } else {
            Self::parse_with::<LittleEndian>(bytes, false)
        }
    }

    fn parse_with<B: ByteOrder>(bytes: &[u8], big_endian: bool) -> Result<Self> {
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[344..348]);
        if &magic != b"n+1\0" && &magic != b"ni1\0" {
            return Err(Error::BadMagic(magic));
        }
        let io = |e: std::io::Error| Error::Header(e.to_string());
        let mut dim = [0i16; 8];
        let mut c = Cursor::new(&bytes[40..56]);
        c.read_i16_into::<B>(&mut dim).map_err(io)?;
        let mut pixdim = [0f32; 8];
        let mut c = Cursor::new(&bytes[76..108]);
        c.read_f32_into::<B>(&mut pixdim).map_err(io)?;
        Ok(NiftiHeader {
            dim,
            datatype: B::read_i16(&bytes[70..72]),
            bitpix: B::read_i16(&bytes[72..74]),
            pixdim,
            vox_offset: B::read_f32(&bytes[108..112]),
            scl_slope: B::read_f32(&bytes[112..116]),
            scl_inter: B::read_f32(&bytes[116..120]),
            magic,
            big_endian,
        })
    }

    pub fn single_file(&self) -> bool {
        &self.magic == b"n+1\0"
    }

    pub fn ndim(&self) -> Result<usize> {
        let n = self.dim[0];
        if !(1..=7).contains(&n) {
            return Err(Error::Header(format!("dim[0] = {n} is not a valid dimensionality")));
        }
        let n = n as usize;
        if n > 4 {
            return Err(Error::TooManyDims(n));
        }
        Ok(n)
    }

    fn bytes_per_voxel(&self) -> Result<usize> {
        match self.datatype {
            DT_UINT8 => Ok(1),
            DT_INT16 => Ok(2),
            DT_FLOAT32 => Ok(4),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }
}

/// Decoded image, x fastest then y, z, t.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiImage {
    /// Extent along each of the first four axes (1 for absent axes).
    pub dims: [usize; 4],
    pub ndim: usize,
    /// Voxel size along x, y, z in file units (normally mm).
    pub spacing: [f64; 3],
    /// Time step (pixdim[4]), 0 when absent.
    pub time_step: f64,
    pub data: Vec<f32>,
}

/// Reads a NIfTI-1 file, applying the intensity rescale.
pub fn read_nifti1(path: &Path) -> Result<NiftiImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = NiftiHeader::parse(&bytes)?;
    let ndim = header.ndim()?;
    let bpv = header.bytes_per_voxel()?;
    let mut dims = [1usize; 4];
    for (a, d) in dims.iter_mut().enumerate().take(ndim) {
        let v = header.dim[a + 1];
        if v < 1 {
            return Err(Error::Header(format!("dim[{}] = {v} must be >= 1", a + 1)));
        }
        *d = v as usize;
    }
    let count: usize = dims.iter().product();
    let (raw, offset): (Vec<u8>, usize) = if header.single_file() {
        (bytes, header.vox_offset.max(HEADER_SIZE as f32) as usize)
    } else {
        let img = path.with_extension("img");
        (fs::read(&img).map_err(|e| Error::io(&img, e))?, header.vox_offset.max(0.0) as usize)
    };
    let need = count * bpv;
    if raw.len() < offset + need {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: (offset + need) as u64,
            actual: raw.len() as u64,
        });
    }
    let body = &raw[offset..offset + need];
    let mut data: Vec<f32> = match (header.datatype, header.big_endian) {
        (DT_UINT8, _) => body.iter().map(|&b| b as f32).collect(),
        (DT_INT16, false) => body.chunks_exact(2).map(|b| LittleEndian::read_i16(b) as f32).collect(),
        (DT_INT16, true) => body.chunks_exact(2).map(|b| BigEndian::read_i16(b) as f32).collect(),
        (DT_FLOAT32, false) => body.chunks_exact(4).map(LittleEndian::read_f32).collect(),
        (DT_FLOAT32, true) => body.chunks_exact(4).map(BigEndian::read_f32).collect(),
        (other, _) => return Err(Error::UnsupportedDtype(other)),
    };
    let (slope, inter) = (header.scl_slope, header.scl_inter);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    let pix = |i: usize| {
        let p = header.pixdim[i].abs() as f64;
        if p > 0.0 && p.is_finite() {
            p
        } else {
            1.0
        }
    };
    Ok(NiftiImage {
        dims,
        ndim,
        spacing: [pix(1), pix(2), pix(3)],
        time_step: if ndim == 4 { header.pixdim[4].abs() as f64 } else { 0.0 },
        data,
    })
}

impl NiftiImage {
    pub fn n_voxels(&self) -> usize {
        self.dims[..3].iter().product()
    }

    /// Grid with this image's spatial layout. `n_frames` defaults to the
    /// fourth axis when it has at least two samples.
    pub fn grid_meta(&self, n_frames: Option<usize>, venc: f64) -> Result<GridMeta> {
        let frames = n_frames.unwrap_or(if self.dims[3] >= 2 { self.dims[3] } else { 2 });
        GridMeta::new([self.dims[0], self.dims[1], self.dims[2]], self.spacing, frames, venc)
    }

    fn require_3d(&self) -> Result<()> {
        if self.dims[3] == 1 {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("expected a 3D image, found {} frames", self.dims[3])))
        }
    }

    /// 3D image as a feature volume on `meta` (spatial layout must agree).
    pub fn to_feature(&self, meta: &GridMeta) -> Result<FeatureVolume> {
        self.require_3d()?;
        self.check_grid(meta)?;
        FeatureVolume::new(meta.clone(), self.data.clone(), FeatureKind::External)
    }

    /// 3D label image as a mask: voxels equal to `label`, or any non-zero
    /// voxel when `label` is `None`.
    pub fn to_mask(&self, meta: &GridMeta, label: Option<f32>) -> Result<Mask> {
        self.require_3d()?;
        self.check_grid(meta)?;
        let bits = self
            .data
            .iter()
            .map(|&v| match label {
                Some(l) => v == l,
                None => v != 0.0,
            })
            .collect();
        Mask::new(meta.clone(), bits)
    }

    /// 4D image as a magnitude series.
    pub fn to_magnitude(&self, venc: f64) -> Result<MagnitudeSeries> {
        let meta = self.grid_meta(Some(self.dims[3]), venc)?;
        MagnitudeSeries::new(meta, self.data.clone())
    }

    /// 4D image as one velocity component field in `(t, z, y, x)` order.
    pub fn to_component_field(&self, venc: f64) -> Result<(GridMeta, Vec<f32>)> {
        let meta = self.grid_meta(Some(self.dims[3]), venc)?;
        Ok((meta, self.data.clone()))
    }

    fn check_grid(&self, meta: &GridMeta) -> Result<()> {
        let own = self.grid_meta(Some(meta.n_frames), meta.venc)?;
        own.ensure_same_grid(meta, "NIfTI image")
    }
}
