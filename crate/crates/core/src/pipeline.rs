//! End-to-end orchestration with on-disk intermediates.
//!
//! Output directory layout:
//!
//! ```text
//! disparity/      view_RR_CC.pfm, grid.json, field.json
//! depth/          view_RR_CC.pfm, grid.json, conversion.json
//! synth/          view_RR_CC.png, grid.json       (retargeted views)
//! synth_depth/    view_RR_CC.pfm, grid.json
//! layout.json     panel depths and thresholds
//! panels/         view_RR_CC_pK.png
//! timing.json     wall-clock seconds per stage
//! ```

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calib::PanelCalibration;
use crate::depth::{field_to_depth, DepthConversionParams};
use crate::disparity::{estimate_all_views, DisparityConfig, DisparityField};
use crate::error::{Error, Result};
use crate::model::io::{ensure_dir, load_grid_dir, read_json, save_light_field, save_png, view_file_name, write_json, GridLayout};
use crate::model::pfm;
use crate::model::{AngularCoord, DepthMap, LightFieldGrid, ScalarMap};
use crate::panel::{blend_to_panels, layout_from_depth, BlendMode, PanelLayout, Quantizer};
use crate::retarget::{retarget_grid, BoostConfig};
use crate::synth::{DisplayOptions, DisplayScene, ViewerPose};

pub const LOCK_FILE: &str = ".lfr.lock";
pub const LAYOUT_FILE: &str = "layout.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DepthBounds {
    pub min_z: f64,
    pub max_z: f64,
}

impl Default for DepthBounds {
    fn default() -> Self {
        Self { min_z: 1.0, max_z: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PanelRequest {
    pub num_panels: usize,
    pub quantizer: Quantizer,
}

impl Default for PanelRequest {
    fn default() -> Self {
        Self {
            num_panels: 3,
            quantizer: Quantizer::Otsu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub disparity: DisparityConfig,
    pub depth: DepthBounds,
    pub boost: BoostConfig,
    pub panels: PanelRequest,
    pub blend: BlendMode,
    pub calibration: Option<PathBuf>,
    pub port: u16,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            disparity: DisparityConfig::default(),
            depth: DepthBounds::default(),
            boost: BoostConfig::default(),
            panels: PanelRequest::default(),
            blend: BlendMode::AllPanel,
            calibration: None,
            port: 8080,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Checks everything that does not depend on the input grid.
    pub fn validate(&self) -> Result<()> {
        self.disparity.validate()?;
        self.boost.validate()?;
        if self.panels.num_panels < 2 {
            return Err(Error::InvalidConfig(format!(
                "numPanels must be at least 2, got {}",
                self.panels.num_panels
            )));
        }
        if self.panels.num_panels > self.boost.num_slices {
            return Err(Error::InvalidConfig(format!(
                "numPanels ({}) exceeds numSlices ({})",
                self.panels.num_panels, self.boost.num_slices
            )));
        }
        let d = &self.depth;
        if !(d.min_z > 0.0 && d.max_z > d.min_z) {
            return Err(Error::InvalidConfig(format!(
                "depth bounds need 0 < minZ < maxZ, got {} and {}",
                d.min_z, d.max_z
            )));
        }
        Ok(())
    }

    /// Checks the parts that depend on the grid shape.
    pub fn validate_for_grid(&self, vx: usize, vy: usize) -> Result<()> {
        self.validate()?;
        self.boost.reference(vx, vy)?;
        self.disparity.reference_views(vx, vy)?;
        Ok(())
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        ensure_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn map_layout(vx: usize, vy: usize, w: usize, h: usize) -> GridLayout {
    GridLayout {
        vx,
        vy,
        width: w,
        height: h,
        channels: 1,
    }
}

/// Writes row-major maps as `view_RR_CC.pfm` plus a `grid.json`.
pub fn write_map_dir(maps: &[&ScalarMap], vx: usize, vy: usize, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let first = maps.first().ok_or_else(|| Error::InvalidGrid("no maps to write".into()))?;
    map_layout(vx, vy, first.width(), first.height()).write(dir)?;
    let idx: Vec<usize> = (0..maps.len()).collect();
    crate::par::map(&idx, |k| pfm::save_map(maps[*k], &dir.join(view_file_name(k / vx, k % vx, "pfm"))))
        .into_iter()
        .collect()
}

pub fn read_map_dir(dir: &Path) -> Result<(GridLayout, Vec<ScalarMap>)> {
    let layout = GridLayout::read(dir)?;
    let idx: Vec<usize> = (0..layout.vx * layout.vy).collect();
    let maps = crate::par::map(&idx, |k| {
        let path = dir.join(view_file_name(k / layout.vx, k % layout.vx, "pfm"));
        if !path.is_file() {
            return Err(Error::MissingView {
                row: k / layout.vx,
                col: k % layout.vx,
                path,
            });
        }
        let m = pfm::load_map(&path)?;
        if !m.same_dims(layout.width, layout.height) {
            return Err(Error::InconsistentView {
                path,
                found: format!("{}x{}", m.width(), m.height()),
                expected: format!("{}x{}", layout.width, layout.height),
            });
        }
        Ok(m)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((layout, maps))
}

/// Summary written next to the disparity maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldSummary {
    pub references: Vec<(usize, usize)>,
    pub invalid_fraction: Vec<f64>,
}

pub fn write_disparity(field: &DisparityField, dir: &Path) -> Result<()> {
    let maps: Vec<&ScalarMap> = field.maps.iter().map(|m| &m.0).collect();
    write_map_dir(&maps, field.vx, field.vy, dir)?;
    write_json(
        &dir.join("field.json"),
        &FieldSummary {
            references: field.references.iter().map(|c| (c.i, c.j)).collect(),
            invalid_fraction: field.invalid_fraction.clone(),
        },
    )
}

pub fn read_disparity(dir: &Path) -> Result<DisparityField> {
    let (layout, maps) = read_map_dir(dir)?;
    let summary: Option<FieldSummary> = read_json(&dir.join("field.json")).ok();
    let (references, invalid_fraction) = match summary {
        Some(s) => (
            s.references
                .into_iter()
                .map(|(i, j)| AngularCoord::from_grid(i, j, layout.vx, layout.vy))
                .collect(),
            s.invalid_fraction,
        ),
        None => (Vec::new(), vec![0.0; maps.len()]),
    };
    Ok(DisparityField {
        vx: layout.vx,
        vy: layout.vy,
        maps: maps.into_iter().map(Into::into).collect(),
        references,
        invalid_fraction,
    })
}

pub fn write_depth(depths: &[DepthMap], vx: usize, vy: usize, dir: &Path) -> Result<()> {
    let maps: Vec<&ScalarMap> = depths.iter().map(|m| &m.0).collect();
    write_map_dir(&maps, vx, vy, dir)
}

pub fn read_depth(dir: &Path) -> Result<(GridLayout, Vec<DepthMap>)> {
    let (layout, maps) = read_map_dir(dir)?;
    Ok((layout, maps.into_iter().map(Into::into).collect()))
}

/// Writes each view's panels as `view_RR_CC_pK.png`, plus an optional
/// false-colour composite `view_RR_CC_falsecolor.png`.
pub fn write_panels(
    grid: &LightFieldGrid,
    depths: &[DepthMap],
    layout: &PanelLayout,
    mode: BlendMode,
    dir: &Path,
    falsecolor: bool,
) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(LAYOUT_FILE), layout)?;
    let coords = grid.coords();
    crate::par::map(&coords, |c| {
        let k = c.j * grid.vx() + c.i;
        let stack = blend_to_panels(grid.view(c.i, c.j), &depths[k], layout, mode)?;
        let stem = format!("view_{:02}_{:02}", c.j, c.i);
        for (p, img) in stack.panels.iter().enumerate() {
            save_png(img, &dir.join(format!("{stem}_p{p}.png")))?;
        }
        if falsecolor {
            save_png(&stack.falsecolor(), &dir.join(format!("{stem}_falsecolor.png")))?;
        }
        Ok(())
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// What a pipeline run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineReport {
    pub stages: Vec<StageTiming>,
    pub conversion: DepthConversionParams,
    pub layout: PanelLayout,
    pub references: usize,
    pub filled_holes: usize,
}

struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        let seconds = t.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3} s");
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        Ok(out)
    }
}

/// Panel layout from the reference view's synthesized depth, so panel
/// geometry stays fixed across viewing angles.
pub fn reference_layout(depths: &[DepthMap], vx: usize, vy: usize, cfg: &PipelineConfig) -> Result<PanelLayout> {
    let r = cfg.boost.reference(vx, vy)?;
    layout_from_depth(&depths[r.j * vx + r.i], cfg.panels.num_panels, cfg.panels.quantizer)
}

/// Runs every stage on the grid in `input`, writing all intermediates to
/// `output`.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    let _lock = DirLock::acquire(output)?;
    let mut timer = Timer { stages: Vec::new() };

    let grid = timer.run("load", || load_grid_dir(input))?;
    let (vx, vy) = (grid.vx(), grid.vy());
    cfg.validate_for_grid(vx, vy)?;
    let calibration = match &cfg.calibration {
        Some(p) => Some(timer.run("calibration", || {
            let c: PanelCalibration = read_json(p)?;
            c.validate()?;
            Ok(c)
        })?),
        None => None,
    };

    let field = timer.run("disparity", || {
        let f = estimate_all_views(&grid, &cfg.disparity)?;
        write_disparity(&f, &output.join("disparity"))?;
        Ok(f)
    })?;
    let (conversion, depths) = timer.run("depth", || {
        let (params, depths) = field_to_depth(&field, cfg.depth.min_z, cfg.depth.max_z)?;
        write_depth(&depths, vx, vy, &output.join("depth"))?;
        write_json(&output.join("depth").join("conversion.json"), &params)?;
        Ok((params, depths))
    })?;
    let retargeted = timer.run("retarget", || retarget_grid(&grid, &depths, &cfg.boost))?;
    let filled_holes = retargeted.iter().map(|r| r.holes).sum();
    let synth_views: Vec<_> = retargeted.iter().map(|r| r.image.clone()).collect();
    let synth_depths: Vec<DepthMap> = retargeted.into_iter().map(|r| r.depth).collect();
    let synth = LightFieldGrid::new(vx, vy, synth_views)?;
    timer.run("write-synth", || {
        save_light_field(&synth, &output.join("synth"))?;
        write_depth(&synth_depths, vx, vy, &output.join("synth_depth"))
    })?;
    let layout = timer.run("layout", || {
        let l = reference_layout(&synth_depths, vx, vy, cfg)?;
        write_json(&output.join(LAYOUT_FILE), &l)?;
        Ok(l)
    })?;
    timer.run("panels", || write_panels(&synth, &synth_depths, &layout, cfg.blend, &output.join("panels"), false))?;

    let scene = DisplayScene::new(vx, vy, synth.into_views(), synth_depths, layout.clone())?;
    timer.run("interactive", || {
        let opts = DisplayOptions {
            mode: cfg.blend,
            calibration: calibration.as_ref(),
            misalignment: None,
        };
        scene.render(ViewerPose::new(0.0, 0.0).0, &opts).map(|_| ())
    })?;

    let report = PipelineReport {
        stages: timer.stages,
        conversion,
        layout,
        references: field.references.len(),
        filled_holes,
    };
    write_json(&output.join(TIMING_FILE), &report.stages)?;
    Ok(report)
}

/// Loads the synthesized grid, its depths and the panel layout written by
/// [`run_pipeline`].
pub fn load_scene(dir: &Path) -> Result<DisplayScene> {
    let grid = load_grid_dir(&dir.join("synth"))?;
    let (_, depths) = read_depth(&dir.join("synth_depth"))?;
    let layout: PanelLayout = read_json(&dir.join(LAYOUT_FILE))?;
    let (vx, vy) = (grid.vx(), grid.vy());
    DisplayScene::new(vx, vy, grid.into_views(), depths, layout)
}
