//! Command-line front end. Every subcommand is a thin wrapper over library
//! calls; `main.rs` only forwards `std::env::args`.
//!
//! Exit codes: 0 success, 1 invalid arguments or data, 2 file or format
//! errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::angiography::{pcmra_frame, pcmra_systolic, speed_frame, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::features::{combine, invert_wmf, normalize_minmax, CombinationId, CombineInputs};
use crate::io::container::{self, write_file_atomic, Volume};
use crate::io::nifti::read_nifti1;
use crate::io::render::{render_feature_slice, render_mask_slice, Axis};
use crate::phantom::{generate, PhantomSpec};
use crate::segmentation::{evaluate, sweep_optimal_threshold, ThresholdSweepResult};
use crate::spectral::{wmf_components, wmf_min};
use crate::volume::{FeatureVolume, GridMeta, Mask, MetricsReport, Validate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wmf4d", version, about = "WMF and PC-MRA features for 4D flow MRI")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the phantom RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom (magnitude, velocity, ground-truth mask).
    Phantom(PhantomArgs),
    /// Velocity container -> fused WMF volume.
    Wmf(WmfArgs),
    /// PC-MRA at one frame or at the detected systole.
    Pcmra(PcmraArgs),
    /// Evaluate one feature combination (normalized output).
    Combine(CombineArgs),
    /// Optimal-threshold sweep against a ground-truth mask.
    Segment(SegmentArgs),
    /// Overlap metrics of a predicted mask against a ground truth.
    Eval(EvalArgs),
    /// Stack features into a multi-channel container.
    ExportChannels(ExportArgs),
    /// Render one slice as an 8-bit PGM image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// TOML phantom description; defaults to the built-in arch phantom.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct WmfArgs {
    #[arg(long)]
    pub velocity: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the u, v and w volumes next to the output.
    #[arg(long)]
    pub per_component: bool,
}

#[derive(Debug, Args)]
pub struct PcmraArgs {
    #[arg(long)]
    pub magnitude: PathBuf,
    #[arg(long)]
    pub velocity: PathBuf,
    #[arg(long, conflicts_with = "systolic", required_unless_present = "systolic")]
    pub frame: Option<usize>,
    #[arg(long)]
    pub systolic: bool,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// Combination id, e.g. inv_wmf, mag_x_invwmf8, pcmra_div_wmf2, pcmra_sys.
    #[arg(long)]
    pub formula: String,
    /// Fused WMF volume (normalized here if it is not already).
    #[arg(long)]
    pub wmf: Option<PathBuf>,
    #[arg(long)]
    pub magnitude: Option<PathBuf>,
    #[arg(long)]
    pub velocity: Option<PathBuf>,
    /// Evaluated frame for Mag(t) and PC-MRA(t).
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub feature: PathBuf,
    /// Ground-truth mask: container or NIfTI label image.
    #[arg(long)]
    pub gt: PathBuf,
    /// Label value selecting the vessel in a NIfTI ground truth (default: any non-zero).
    #[arg(long, allow_hyphen_values = true)]
    pub label: Option<f32>,
    /// Min-max normalize the feature first if it is not normalized.
    #[arg(long)]
    pub normalize: bool,
    /// Sweep curve CSV.
    #[arg(long)]
    pub csv: PathBuf,
    /// Best mask container.
    #[arg(long)]
    pub mask_out: PathBuf,
    /// Best-threshold metrics JSON.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub label: Option<f32>,
    /// JSON output file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a one-row CSV with IoU, Dice, Recall and Precision.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Comma-separated channel list from: mag, speed, wmf, inv_wmf, pcmra, pcmra_sys.
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<String>,
    #[arg(long)]
    pub magnitude: Option<PathBuf>,
    #[arg(long)]
    pub velocity: Option<PathBuf>,
    #[arg(long)]
    pub wmf: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Min-max normalize every channel.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Feature or mask container, or a NIfTI image.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "z")]
    pub axis: String,
    #[arg(long)]
    pub index: usize,
    /// Frame to render for 4D inputs (magnitude renders the image, velocity the speed).
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::InvalidInput(format!("thread pool: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a, cli.seed),
        Command::Wmf(a) => cmd_wmf(a),
        Command::Pcmra(a) => cmd_pcmra(a),
        Command::Combine(a) => cmd_combine(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportChannels(a) => cmd_export(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn is_nifti(path: &Path) -> bool {
    let name = path.to_string_lossy().to_ascii_lowercase();
    name.ends_with(".nii") || name.ends_with(".hdr")
}

fn reject_violations(what: &str, report: Vec<crate::volume::Violation>) -> Result<()> {
    if report.is_empty() {
        return Ok(());
    }
    let shown: Vec<String> = report.iter().take(5).map(|v| v.to_string()).collect();
    Err(Error::Validation(format!("{what}: {} violation(s): {}", report.len(), shown.join("; "))))
}

fn load_velocity(path: &Path) -> Result<crate::volume::VelocitySeries> {
    let v = container::read_velocity(path)?;
    reject_violations("velocity", v.validate())?;
    Ok(v)
}

fn load_magnitude(path: &Path) -> Result<crate::volume::MagnitudeSeries> {
    let m = container::read_magnitude(path)?;
    reject_violations("magnitude", m.validate())?;
    Ok(m)
}

fn load_feature(path: &Path) -> Result<FeatureVolume> {
    if is_nifti(path) {
        let img = read_nifti1(path)?;
        let meta = img.grid_meta(Some(2), 1.0)?;
        return img.to_feature(&meta);
    }
    let f = container::read_feature(path)?;
    reject_violations("feature", f.validate())?;
    Ok(f)
}

fn load_mask(path: &Path, template: Option<&GridMeta>, label: Option<f32>) -> Result<Mask> {
    if is_nifti(path) {
        let img = read_nifti1(path)?;
        let meta = match template {
            Some(m) => m.clone(),
            None => img.grid_meta(Some(2), 1.0)?,
        };
        return img.to_mask(&meta, label);
    }
    container::read_mask(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Header(e.to_string()))?;
    write_file_atomic(path, text.as_bytes())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.json"))
}

fn cmd_phantom(a: &PhantomArgs, seed: Option<u64>) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => PhantomSpec::load(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let p = generate(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    container::write_container(&a.out_dir.join("magnitude.json"), &Volume::Magnitude(p.magnitude))?;
    container::write_container(&a.out_dir.join("velocity.json"), &Volume::Velocity(p.velocity))?;
    container::write_container(&a.out_dir.join("mask.json"), &Volume::Mask(p.mask))?;
    write_file_atomic(&a.out_dir.join("phantom.toml"), spec.to_toml_string().as_bytes())
}

fn cmd_wmf(a: &WmfArgs) -> Result<()> {
    let vel = load_velocity(&a.velocity)?;
    let [u, v, w] = wmf_components(&vel)?;
    let fused = wmf_min(&u, &v, &w)?;
    container::write_container(&a.out, &Volume::Feature(fused))?;
    if a.per_component {
        for (name, f) in [("u", u), ("v", v), ("w", w)] {
            container::write_container(&sibling(&a.out, name), &Volume::Feature(f))?;
        }
    }
    Ok(())
}

fn cmd_pcmra(a: &PcmraArgs) -> Result<()> {
    let mag = load_magnitude(&a.magnitude)?;
    let vel = load_velocity(&a.velocity)?;
    let f = match (a.systolic, a.frame) {
        (true, _) => pcmra_systolic(&mag, &vel, a.gamma)?,
        (false, Some(t)) => pcmra_frame(&mag, &vel, t, a.gamma)?,
        (false, None) => return Err(Error::InvalidInput("pass --frame N or --systolic".into())),
    };
    container::write_container(&a.out, &Volume::Feature(f))
}

fn normalized(f: FeatureVolume) -> Result<FeatureVolume> {
    if f.is_normalized() {
        Ok(f)
    } else {
        normalize_minmax(&f)
    }
}

fn cmd_combine(a: &CombineArgs) -> Result<()> {
    let id: CombinationId = a.formula.parse()?;
    let wmf = match &a.wmf {
        Some(p) => Some(normalized(load_feature(p)?)?),
        None => None,
    };
    let mag = match &a.magnitude {
        Some(p) => Some(load_magnitude(p)?),
        None => None,
    };
    let vel = match &a.velocity {
        Some(p) => Some(load_velocity(p)?),
        None => None,
    };
    let need = |what: &str| Error::InvalidInput(format!("{id} requires --{what}"));
    let frame = || a.frame.ok_or_else(|| need("frame"));
    let mag_t = if id.uses_magnitude() {
        let m = mag.as_ref().ok_or_else(|| need("magnitude"))?;
        Some(normalize_minmax(&m.frame_volume(frame()?)?)?)
    } else {
        None
    };
    let pcmra_t = if id.uses_pcmra_frame() {
        let (m, v) = (mag.as_ref().ok_or_else(|| need("magnitude"))?, vel.as_ref().ok_or_else(|| need("velocity"))?);
        Some(normalize_minmax(&pcmra_frame(m, v, frame()?, a.gamma)?)?)
    } else {
        None
    };
    let pcmra_sys = if id == CombinationId::PcmraSys {
        let (m, v) = (mag.as_ref().ok_or_else(|| need("magnitude"))?, vel.as_ref().ok_or_else(|| need("velocity"))?);
        Some(normalize_minmax(&pcmra_systolic(m, v, a.gamma)?)?)
    } else {
        None
    };
    if id.uses_wmf() && wmf.is_none() {
        return Err(need("wmf"));
    }
    let out = combine(
        id,
        CombineInputs { mag_t: mag_t.as_ref(), pcmra_t: pcmra_t.as_ref(), pcmra_sys: pcmra_sys.as_ref(), wmf: wmf.as_ref() },
    )?;
    container::write_container(&a.out, &Volume::Feature(out))
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let mut f = load_feature(&a.feature)?;
    if a.normalize {
        f = normalized(f)?;
    }
    let gt = load_mask(&a.gt, Some(f.meta()), a.label)?;
    let sweep = sweep_optimal_threshold(&f, &gt)?;
    write_sweep_csv(&a.csv, &sweep)?;
    let best = crate::segmentation::apply_threshold(&f, sweep.best_threshold)?;
    container::write_container(&a.mask_out, &Volume::Mask(best))?;
    if let Some(p) = &a.metrics {
        write_json(p, &sweep.best_metrics)?;
    }
    Ok(())
}

fn write_sweep_csv(path: &Path, sweep: &ThresholdSweepResult) -> Result<()> {
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
    write_file_atomic(path, &buf)
}

/// One-row metrics table in the column order IoU, Dice, Recall, Precision.
pub fn metrics_csv(m: &MetricsReport) -> String {
    format!("iou,dice,recall,precision\n{},{},{},{}\n", m.iou, m.dice, m.recall, m.precision)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = load_mask(&a.pred, None, a.label)?;
    let gt = load_mask(&a.gt, Some(pred.meta()), a.label)?;
    let m = evaluate(&pred, &gt)?;
    match &a.out {
        Some(p) => write_json(p, &m)?,
        None => println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Error::Header(e.to_string()))?),
    }
    if let Some(p) = &a.csv {
        write_file_atomic(p, metrics_csv(&m).as_bytes())?;
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    if a.channels.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mag = a.magnitude.as_deref().map(load_magnitude).transpose()?;
    let vel = a.velocity.as_deref().map(load_velocity).transpose()?;
    let wmf = a.wmf.as_deref().map(load_feature).transpose()?;
    let need = |what: &str, ch: &str| Error::InvalidInput(format!("channel `{ch}` requires --{what}"));
    let mut selection = Vec::with_capacity(a.channels.len());
    for ch in &a.channels {
        let vol = match ch.as_str() {
            "mag" => mag.as_ref().ok_or_else(|| need("magnitude", ch))?.frame_volume(a.frame)?,
            "speed" => speed_frame(vel.as_ref().ok_or_else(|| need("velocity", ch))?, a.frame)?,
            "wmf" => wmf.clone().ok_or_else(|| need("wmf", ch))?,
            "inv_wmf" => invert_wmf(&normalized(wmf.clone().ok_or_else(|| need("wmf", ch))?)?)?,
            "pcmra" => pcmra_frame(
                mag.as_ref().ok_or_else(|| need("magnitude", ch))?,
                vel.as_ref().ok_or_else(|| need("velocity", ch))?,
                a.frame,
                a.gamma,
            )?,
            "pcmra_sys" => pcmra_systolic(
                mag.as_ref().ok_or_else(|| need("magnitude", ch))?,
                vel.as_ref().ok_or_else(|| need("velocity", ch))?,
                a.gamma,
            )?,
            other => return Err(Error::InvalidInput(format!("unknown channel `{other}`"))),
        };
        selection.push(if a.normalize { normalized(vol)? } else { vol });
    }
    container::export_channels(selection, &a.out)?;
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let axis: Axis = a.axis.parse()?;
    if is_nifti(&a.input) {
        let img = read_nifti1(&a.input)?;
        let meta = img.grid_meta(Some(2), 1.0)?;
        let nv = img.n_voxels();
        if a.frame >= img.dims[3] {
            return Err(Error::FrameOutOfRange { frame: a.frame, n_frames: img.dims[3] });
        }
        let data = img.data[a.frame * nv..(a.frame + 1) * nv].to_vec();
        let f = FeatureVolume::new(meta, data, crate::volume::FeatureKind::External)?;
        render_feature_slice(&f, axis, a.index, &a.out)?;
        return Ok(());
    }
    match container::read_container(&a.input)? {
        Volume::Feature(f) => render_feature_slice(&f, axis, a.index, &a.out).map(drop),
        Volume::Mask(m) => render_mask_slice(&m, axis, a.index, &a.out).map(drop),
        Volume::Magnitude(m) => render_feature_slice(&m.frame_volume(a.frame)?, axis, a.index, &a.out).map(drop),
        Volume::Velocity(v) => render_feature_slice(&speed_frame(&v, a.frame)?, axis, a.index, &a.out).map(drop),
        Volume::Channels(s) => {
            let ch = s.channels.get(a.frame).ok_or(Error::FrameOutOfRange { frame: a.frame, n_frames: s.channels.len() })?;
            render_feature_slice(ch, axis, a.index, &a.out).map(drop)
        }
    }
}
