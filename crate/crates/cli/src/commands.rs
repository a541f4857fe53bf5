use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use flof_core::deformation::error_metric;
use flof_core::flof::{match_pair, MatchResult};
use flof_core::interpolation::{temporal_filter, DataKind, Mode, ParameterSpace};
use flof_core::levelset::{assemble_raw, assemble_spacetime, iso_from_density, AssembleParams, SpaceTimeSdf};
use flof_core::optical_flow::FlofParams;
use flof_core::pipeline::manifest::{read_dataset, write_dataset};
use flof_core::pipeline::raster::{plane, rasterize};
use flof_core::pipeline::scenes::{gen_scene, Scene, SceneParams};
use flof_core::pipeline::space::load_space;
use flof_core::pipeline::volume::{self, Volume};
use flof_core::ScalarField;

use crate::encode_png;

#[derive(Parser, Debug)]
#[command(name = "flof", version, about = "Match and interpolate space-time fluid surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the frames of an analytic scene plus a manifest.
    GenScene(GenScene),
    /// Assemble frames into one redistanced space-time SDF volume.
    BuildSdf(BuildSdf),
    /// Compute forward and backward deformations between two SDF volumes.
    Match(Match),
    /// Print the error metric between two SDF volumes.
    Error(ErrorCmd),
    /// Synthesize one output slice from a parameter space.
    Interp(Interp),
    /// Serve interpolated frames over HTTP.
    Serve(Serve),
}

#[derive(Args, Debug)]
pub struct GenScene {
    #[arg(long)]
    pub scene: String,
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    #[arg(long, default_value_t = 32)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Shift along x in cells.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spatial axes (3 only for translating-circle).
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Parameter vector recorded in the manifest; defaults to the offset.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub parameter: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct BuildSdf {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 40.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 5)]
    pub repeat_first: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Smoke only: where to write the padded density volume.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
    /// Smoke only: surface level as a fraction of the peak density.
    #[arg(long, default_value_t = flof_core::levelset::DEFAULT_DENSITY_LEVEL)]
    pub level: f64,
}

#[derive(Args, Debug)]
pub struct Match {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub dst: PathBuf,
    /// JSON file with parameter overrides.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ErrorCmd {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Args, Debug)]
pub struct Interp {
    #[arg(long)]
    pub space: PathBuf,
    /// Position in parameter space, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub weights: String,
    /// Frame index of the original sequence.
    #[arg(long)]
    pub frame: usize,
    #[arg(long, default_value = "union")]
    pub mode: String,
    /// Union with the next frame's slice.
    #[arg(long)]
    pub temporal_filter: bool,
    /// Axis dropped when rasterizing 3D slices.
    #[arg(long, default_value_t = 2)]
    pub axis: usize,
    /// `.png` writes a preview image, anything else a FLOF volume.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Serve {
    #[arg(long, required = true)]
    pub space: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene(c) => gen_scene_cmd(c),
        Command::BuildSdf(c) => build_sdf(c),
        Command::Match(c) => match_cmd(c),
        Command::Error(c) => {
            println!("{}", error_cmd(&c)?);
            Ok(())
        }
        Command::Interp(c) => interp(c),
        Command::Serve(c) => crate::server::serve(&c.space, &c.host, c.port),
    }
}

fn gen_scene_cmd(c: GenScene) -> Result<()> {
    let scene: Scene = c.scene.parse()?;
    let params = SceneParams {
        offset: c.offset,
        seed: c.seed,
        spatial_axes: c.dims,
    };
    let frames = gen_scene(scene, c.res, c.frames, &params)?;
    let name = format!("{}-{}", scene.name(), c.offset);
    let parameter = c.parameter.unwrap_or_else(|| vec![c.offset]);
    write_dataset(&c.out, &name, parameter, scene.kind(), &frames)?;
    Ok(())
}

fn build_sdf(c: BuildSdf) -> Result<()> {
    let (manifest, frames) = read_dataset(&c.input)?;
    let params = AssembleParams {
        gamma_max: c.gamma,
        margin: c.margin,
        repeat_first: c.repeat_first,
    };
    let sdf = match manifest.kind {
        DataKind::LiquidSdf => {
            if c.data_out.is_some() {
                bail!("--data-out applies to smoke datasets only");
            }
            assemble_spacetime(&frames, &params)?
        }
        DataKind::SmokeDensity => {
            let iso = frames
                .iter()
                .map(|f| iso_from_density(f, c.level))
                .collect::<flof_core::Result<Vec<_>>>()?;
            if let Some(path) = &c.data_out {
                let density = assemble_raw(&frames, &params, 0.0)?;
                volume::write(path, &Volume::Scalar(density))?;
            }
            assemble_spacetime(&iso, &params)?
        }
    };
    volume::write(&c.out, &Volume::Scalar(sdf.field))?;
    Ok(())
}

fn read_scalar(path: &Path) -> Result<ScalarField> {
    volume::read_scalar(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_params(path: Option<&Path>) -> Result<FlofParams> {
    let params = match path {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => FlofParams::default(),
    };
    params.validate()?;
    Ok(params)
}

fn report(r: &MatchResult) -> serde_json::Value {
    json!({
        "error_initial": r.error_initial,
        "error_final": r.error_final,
        "level_trace": r.level_trace,
    })
}

fn match_cmd(c: Match) -> Result<()> {
    let params = load_params(c.params.as_deref())?;
    let a = SpaceTimeSdf::from_field(read_scalar(&c.src)?, params.gamma_max);
    let b = SpaceTimeSdf::from_field(read_scalar(&c.dst)?, params.gamma_max);
    let (forward, backward) = match_pair(&a, &b, &params)?;
    fs::create_dir_all(&c.out)?;
    volume::write(c.out.join("forward.flof"), &Volume::Deformation(forward.deformation.field().clone()))?;
    volume::write(c.out.join("backward.flof"), &Volume::Deformation(backward.deformation.field().clone()))?;
    let doc = json!({
        "params": params,
        "forward": report(&forward),
        "backward": report(&backward),
    });
    fs::write(c.out.join("report.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn error_cmd(c: &ErrorCmd) -> Result<f64> {
    let a = read_scalar(&c.a)?;
    let b = read_scalar(&c.b)?;
    Ok(error_metric(&a, &b)?)
}

pub fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let v: f64 = p.trim().parse().with_context(|| format!("bad weight `{p}`"))?;
            if !v.is_finite() {
                bail!("bad weight `{p}`");
            }
            Ok(v)
        })
        .collect()
}

/// Slab index in the stored volumes for a frame of the original sequence.
pub fn slab_index(space: &ParameterSpace, frame: usize) -> Result<usize> {
    let t = frame + space.frames_repeated;
    if t >= space.time_extent() {
        bail!(
            "frame {frame} out of range 0..{}",
            space.time_extent() - space.frames_repeated
        );
    }
    Ok(t)
}

/// One output slice, with the optional temporal union applied.
pub fn render_slice(
    space: &ParameterSpace,
    x: &[f64],
    frame: usize,
    mode: Mode,
    filter: bool,
) -> Result<(ScalarField, flof_core::interpolation::Synthesis)> {
    let t = slab_index(space, frame)?;
    let synth = space.synthesize(x, t, mode)?;
    let mut slice = synth.slice.clone();
    if filter && space.kind == DataKind::LiquidSdf && t + 1 < space.time_extent() {
        let next = space.synthesize(x, t + 1, mode)?;
        slice = temporal_filter(&slice, &next.slice)?;
    }
    Ok((slice, synth))
}

/// Reduces a slice to 2D for display, taking the middle plane of 3D slices.
pub fn display_plane(slice: &ScalarField, axis: usize) -> Result<ScalarField> {
    match slice.dims().ndim() {
        2 => Ok(slice.clone()),
        3 => {
            let mid = slice.dims().extent(axis.min(2)) / 2;
            Ok(plane(slice, axis, mid)?)
        }
        n => bail!("cannot display a {n}-axis slice"),
    }
}

fn interp(c: Interp) -> Result<()> {
    let space = load_space(&c.space).with_context(|| format!("loading {}", c.space.display()))?;
    let x = parse_weights(&c.weights)?;
    let mode: Mode = c.mode.parse()?;
    let (slice, _) = render_slice(&space, &x, c.frame, mode, c.temporal_filter)?;
    let is_png = c.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let img = rasterize(&display_plane(&slice, c.axis)?, space.kind)?;
        fs::write(&c.out, encode_png(&img)?)?;
    } else {
        volume::write(&c.out, &Volume::Scalar(slice))?;
    }
    Ok(())
}
