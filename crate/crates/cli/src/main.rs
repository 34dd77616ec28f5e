use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lfr_core::calib::{apply_affine, fit_calibration, synthetic_samples, CalibrationSamples, Coefficients, PanelCalibration};
use lfr_core::depth::field_to_depth;
use lfr_core::disparity::estimate_all_views;
use lfr_core::model::io::{load_grid_dir, load_png, read_json, save_light_field, save_png, write_json};
use lfr_core::panel::{BlendMode, Quantizer};
use lfr_core::pipeline::{self, DirLock, PipelineConfig};
use lfr_core::retarget::retarget_grid;
use lfr_core::service::{FrameMode, ViewRequest, ViewService};
use lfr_core::synth::ViewerPose;
use lfr_core::synthetic::SyntheticScene;
use lfr_core::LightFieldGrid;

mod serve;

#[derive(Parser)]
#[command(name = "lfr", version, about = "Light-field retargeting for multi-panel depth displays")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled synthetic light field as a view grid.
    MakeSynthetic(MakeSynthetic),
    /// Estimate disparity for every view into <out>/disparity.
    EstimateDisparity(GridStage),
    /// Convert <out>/disparity to normalized depth in <out>/depth.
    DisparityToDepth(DepthStage),
    /// Retarget every view into <out>/synth and <out>/synth_depth.
    Retarget(RetargetStage),
    /// Quantize depth onto panels and write per-view panel images.
    Panelize(PanelizeStage),
    /// Render the display composite for one viewer pose.
    RenderView(RenderView),
    /// Fit a calibration from measured samples.
    FitCalib(FitCalib),
    /// Apply one panel's calibration at a pose to an image.
    ApplyCalib(ApplyCalib),
    /// Write calibration samples of a synthetic misalignment model.
    SynthCalib(SynthCalib),
    /// Run the whole pipeline.
    Run(GridStage),
    /// Serve rendered views over HTTP.
    Serve(Serve),
}

#[derive(Args)]
struct MakeSynthetic {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    vx: usize,
    #[arg(long, default_value_t = 5)]
    vy: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GridStage {
    /// View grid directory (grid.json plus view PNGs).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Working directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DepthStage {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_z: Option<f64>,
    #[arg(long)]
    max_z: Option<f64>,
}

#[derive(Args)]
struct RetargetStage {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    slices: Option<usize>,
    #[arg(long)]
    ref_d: Option<f64>,
}

#[derive(Args)]
struct PanelizeStage {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    panels: Option<usize>,
    #[arg(long)]
    blend: Option<BlendMode>,
    #[arg(long)]
    quantizer: Option<Quantizer>,
    /// Also write a false-colour composite per view.
    #[arg(long)]
    falsecolor: bool,
}

#[derive(Args)]
struct RenderView {
    /// Pipeline output directory.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    ang_x: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    ang_y: f64,
    #[arg(long)]
    blend: Option<BlendMode>,
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value = "composite")]
    mode: FrameMode,
    /// Shorthand for `--mode falsecolor`.
    #[arg(long)]
    falsecolor: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitCalib {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApplyCalib {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    panel: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    ang_x: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    ang_y: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthCalib {
    #[arg(long, default_value_t = 3)]
    panels: usize,
    #[arg(long, default_value_t = 541)]
    display_width: usize,
    #[arg(long, default_value_t = 375)]
    display_height: usize,
    /// Poses per axis of the sample lattice.
    #[arg(long, default_value_t = 5)]
    grid: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Serve {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    blend: Option<BlendMode>,
    #[arg(long)]
    calib: Option<PathBuf>,
}

fn required<'a>(p: &'a Option<PathBuf>, fallback: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match p.as_ref().or(fallback.as_ref()) {
        Some(p) => Ok(p),
        None => bail!("--{flag} is required (or set `{flag}` in the config file)"),
    }
}

fn load_calib(path: Option<&PathBuf>) -> Result<Option<PanelCalibration>> {
    path.map(|p| {
        let c: PanelCalibration = read_json(p)?;
        c.validate()?;
        Ok(c)
    })
    .transpose()
}

/// Misalignment used by `synth-calib`: panel p drifts by a scale and shift
/// that grow with its distance from the reference panel.
fn misalignment_model(panel: usize) -> Coefficients {
    let k = panel as f64;
    Coefficients {
        sx: [1.0 + 0.015 * k, 0.01 * k, 0.0],
        sy: [1.0 + 0.015 * k, 0.0, 0.01 * k],
        tx: [2.0 * k, 6.0 * k, 0.0],
        ty: [-k, 0.0, 4.0 * k],
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };

    match cli.command {
        Command::MakeSynthetic(a) => {
            let lf = SyntheticScene::bundled(a.vx, a.vy, a.width, a.height)
                .with_noise(a.noise, a.seed)
                .render()?;
            save_light_field(&lf.grid, &a.out)?;
            let maps: Vec<_> = lf.disparity.iter().map(|m| &m.0).collect();
            pipeline::write_map_dir(&maps, a.vx, a.vy, &a.out.join("ground_truth"))?;
            println!("wrote {}x{} views of {}x{} to {}", a.vx, a.vy, a.width, a.height, a.out.display());
        }
        Command::EstimateDisparity(a) => {
            let input = required(&a.input, &cfg.input, "input")?;
            let out = required(&a.out, &cfg.output, "out")?;
            cfg.disparity.validate()?;
            let _lock = DirLock::acquire(out)?;
            let grid = load_grid_dir(input)?;
            let field = estimate_all_views(&grid, &cfg.disparity)?;
            pipeline::write_disparity(&field, &out.join("disparity"))?;
        }
        Command::DisparityToDepth(a) => {
            let out = required(&a.out, &cfg.output, "out")?;
            let _lock = DirLock::acquire(out)?;
            let field = pipeline::read_disparity(&out.join("disparity"))?;
            let (min_z, max_z) = (a.min_z.unwrap_or(cfg.depth.min_z), a.max_z.unwrap_or(cfg.depth.max_z));
            let (params, depths) = field_to_depth(&field, min_z, max_z)?;
            pipeline::write_depth(&depths, field.vx, field.vy, &out.join("depth"))?;
            write_json(&out.join("depth").join("conversion.json"), &params)?;
        }
        Command::Retarget(a) => {
            let input = required(&a.input, &cfg.input, "input")?;
            let out = required(&a.out, &cfg.output, "out")?;
            if let Some(s) = a.scale {
                cfg.boost.scale = s;
            }
            if let Some(n) = a.slices {
                cfg.boost.num_slices = n;
            }
            if let Some(d) = a.ref_d {
                cfg.boost.ref_d = d;
            }
            let _lock = DirLock::acquire(out)?;
            let grid = load_grid_dir(input)?;
            let (_, depths) = pipeline::read_depth(&out.join("depth"))?;
            let views = retarget_grid(&grid, &depths, &cfg.boost)?;
            let (vx, vy) = (grid.vx(), grid.vy());
            let synth_depths: Vec<_> = views.iter().map(|r| r.depth.clone()).collect();
            let synth = LightFieldGrid::new(vx, vy, views.into_iter().map(|r| r.image).collect())?;
            save_light_field(&synth, &out.join("synth"))?;
            pipeline::write_depth(&synth_depths, vx, vy, &out.join("synth_depth"))?;
        }
        Command::Panelize(a) => {
            let out = required(&a.out, &cfg.output, "out")?;
            if let Some(n) = a.panels {
                cfg.panels.num_panels = n;
            }
            if let Some(q) = a.quantizer {
                cfg.panels.quantizer = q;
            }
            let blend = a.blend.unwrap_or(cfg.blend);
            cfg.validate()?;
            let _lock = DirLock::acquire(out)?;
            let synth = load_grid_dir(&out.join("synth"))?;
            let (_, depths) = pipeline::read_depth(&out.join("synth_depth"))?;
            let layout = pipeline::reference_layout(&depths, synth.vx(), synth.vy(), &cfg)?;
            write_json(&out.join(pipeline::LAYOUT_FILE), &layout)?;
            pipeline::write_panels(&synth, &depths, &layout, blend, &out.join("panels"), a.falsecolor)?;
            println!("{}", serde_json::to_string(&layout)?);
        }
        Command::RenderView(a) => {
            let calib = load_calib(a.calib.as_ref().or(cfg.calibration.as_ref()))?;
            let scene = pipeline::load_scene(&a.scene)?;
            let service = ViewService::new(scene, a.blend.unwrap_or(cfg.blend), calib)?;
            let mode = if a.falsecolor { FrameMode::Falsecolor } else { a.mode };
            let req = ViewRequest::new(a.ang_x, a.ang_y, mode);
            if req.clamped {
                log::warn!("pose clamped to ({}, {})", req.pose.ang_x, req.pose.ang_y);
            }
            std::fs::write(&a.out, service.render_png(&req)?).with_context(|| format!("writing {}", a.out.display()))?;
        }
        Command::FitCalib(a) => {
            let samples: CalibrationSamples = read_json(&a.samples)?;
            let calib = fit_calibration(&samples)?;
            for p in &calib.panels {
                let r = p.residuals;
                println!("panel {}: rms residual sx {:.3e} sy {:.3e} tx {:.3e} ty {:.3e}", p.panel, r.sx, r.sy, r.tx, r.ty);
            }
            write_json(&a.out, &calib)?;
        }
        Command::ApplyCalib(a) => {
            let calib = load_calib(Some(&a.calib))?.expect("path given");
            if a.panel >= calib.num_panels() {
                bail!("panel {} outside the {} calibrated panels", a.panel, calib.num_panels());
            }
            let (pose, clamped) = ViewerPose::new(a.ang_x, a.ang_y);
            let at = calib.at(pose);
            if clamped || at.clamped {
                log::warn!("pose clamped to the calibration bounds");
            }
            let img = load_png(&a.input)?;
            let out = apply_affine(&img, &at.params[a.panel], calib.display_width, calib.display_height)?;
            save_png(&out, &a.out)?;
        }
        Command::SynthCalib(a) => {
            if a.panels < 2 {
                bail!("--panels must be at least 2");
            }
            let truth: Vec<_> = (1..a.panels).map(|p| (p, misalignment_model(p))).collect();
            let s = synthetic_samples(&truth, 0, (a.display_width, a.display_height), a.grid, a.noise, a.seed);
            write_json(&a.out, &s)?;
        }
        Command::Run(a) => {
            let input = required(&a.input, &cfg.input, "input")?.to_path_buf();
            let out = required(&a.out, &cfg.output, "out")?.to_path_buf();
            let report = pipeline::run_pipeline(&cfg, &input, &out)?;
            for s in &report.stages {
                println!("{:<12} {:>9.3} s", s.stage, s.seconds);
            }
        }
        Command::Serve(a) => {
            let calib = load_calib(a.calib.as_ref().or(cfg.calibration.as_ref()))?;
            let _lock = DirLock::acquire(&a.scene)?;
            let scene = pipeline::load_scene(&a.scene)?;
            let service = Arc::new(ViewService::new(scene, a.blend.unwrap_or(cfg.blend), calib)?);
            let addr = format!("{}:{}", a.host, a.port.unwrap_or(cfg.port));
            serve::run(service, &addr)?;
        }
    }
    Ok(())
}
