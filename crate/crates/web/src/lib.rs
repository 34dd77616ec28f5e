//! Browser demo: the bundled synthetic light field, retargeted and shown on
//! a simulated additive multi-panel display.
//!
//! [`Session`] holds all state and is plain Rust; [`Demo`] is the thin
//! JavaScript-facing wrapper.

use wasm_bindgen::prelude::*;

use lfr_core::depth::field_to_depth;
use lfr_core::disparity::{estimate_all_views, DisparityConfig, DisparityField};
use lfr_core::model::io::to_u8;
use lfr_core::panel::{layout_from_depth, BlendMode, Quantizer};
use lfr_core::retarget::{retarget_grid, BoostConfig};
use lfr_core::service::{FrameMode, ViewRequest, ViewService};
use lfr_core::synth::DisplayScene;
use lfr_core::synthetic::SyntheticScene;
use lfr_core::{DisparityMap, LightFieldGrid, Result, ViewImage};

/// An RGBA frame ready for a canvas `ImageData`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgba: Vec<u8>,
    pub clamped: bool,
}

pub struct Session {
    grid: LightFieldGrid,
    truth: Vec<DisparityMap>,
    disparity: Vec<DisparityMap>,
    estimated: bool,
    scale: f64,
    num_panels: usize,
    holes: usize,
    service: ViewService,
}

impl Session {
    /// Renders the bundled scene and retargets it with the default boost.
    pub fn new(vx: usize, vy: usize, width: usize, height: usize) -> Result<Self> {
        let lf = SyntheticScene::bundled(vx, vy, width, height).render()?;
        let cfg = BoostConfig::default();
        let (service, holes) = build(&lf.grid, &lf.disparity, cfg.scale, 3)?;
        Ok(Self {
            grid: lf.grid,
            disparity: lf.disparity.clone(),
            truth: lf.disparity,
            estimated: false,
            scale: cfg.scale,
            num_panels: 3,
            holes,
            service,
        })
    }

    /// Re-runs boosting and panel layout; returns the number of holes filled.
    pub fn retarget(&mut self, scale: f64, num_panels: usize) -> Result<usize> {
        let (mut service, holes) = build(&self.grid, &self.disparity, scale, num_panels)?;
        service.blend = self.service.blend;
        self.service = service;
        self.scale = scale;
        self.num_panels = num_panels;
        self.holes = holes;
        Ok(holes)
    }

    /// Replaces the ground-truth disparity with an estimate from the views
    /// and returns its mean absolute error in pixels.
    pub fn estimate_disparity(&mut self) -> Result<f64> {
        let cfg = DisparityConfig {
            ref_count: Some(5),
            cross_offset: 1,
            ..Default::default()
        };
        let field = estimate_all_views(&self.grid, &cfg)?;
        let (mut err, mut n) = (0.0, 0usize);
        for (e, t) in field.maps.iter().zip(&self.truth) {
            for (a, b) in e.values().iter().zip(t.values()) {
                err += (a - b).abs() as f64;
                n += 1;
            }
        }
        self.disparity = field.maps;
        self.estimated = true;
        self.retarget(self.scale, self.num_panels)?;
        Ok(err / n as f64)
    }

    pub fn use_ground_truth(&mut self) -> Result<()> {
        self.disparity = self.truth.clone();
        self.estimated = false;
        self.retarget(self.scale, self.num_panels).map(|_| ())
    }

    pub fn render(&mut self, ax: f64, ay: f64, mode: &str, blend: &str) -> Result<Frame> {
        let mode: FrameMode = mode.parse()?;
        self.service.blend = blend.parse()?;
        let req = ViewRequest::new(ax, ay, mode);
        let img = self.service.image(&req)?;
        Ok(Frame {
            width: img.width(),
            height: img.height(),
            rgba: rgba(&img),
            clamped: req.clamped,
        })
    }

    pub fn estimated(&self) -> bool {
        self.estimated
    }

    pub fn holes(&self) -> usize {
        self.holes
    }

    pub fn panel_depths(&self) -> Vec<f64> {
        self.service.scene.layout.panel_depths.clone()
    }
}

fn build(grid: &LightFieldGrid, disparity: &[DisparityMap], scale: f64, num_panels: usize) -> Result<(ViewService, usize)> {
    let cfg = BoostConfig {
        scale,
        ..Default::default()
    };
    let field = DisparityField {
        vx: grid.vx(),
        vy: grid.vy(),
        maps: disparity.to_vec(),
        references: Vec::new(),
        invalid_fraction: Vec::new(),
    };
    let (_, depths) = field_to_depth(&field, 1.0, 10.0)?;
    let out = retarget_grid(grid, &depths, &cfg)?;
    let holes = out.iter().map(|r| r.holes).sum();
    let r = cfg.reference(grid.vx(), grid.vy())?;
    let (views, depths): (Vec<_>, Vec<_>) = out.into_iter().map(|r| (r.image, r.depth)).unzip();
    let layout = layout_from_depth(&depths[r.j * grid.vx() + r.i], num_panels, Quantizer::Otsu)?;
    let scene = DisplayScene::new(grid.vx(), grid.vy(), views, depths, layout)?;
    Ok((ViewService::new(scene, BlendMode::default(), None)?, holes))
}

fn rgba(img: &ViewImage) -> Vec<u8> {
    let bytes = to_u8(&img.to_rgb());
    let mut out = Vec::with_capacity(bytes.len() / 3 * 4);
    for px in bytes.chunks_exact(3) {
        out.extend_from_slice(px);
        out.push(255);
    }
    out
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
    width: usize,
    height: usize,
    clamped: bool,
}

fn js(e: lfr_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(vx: usize, vy: usize, width: usize, height: usize) -> Result<Demo, JsError> {
        let session = Session::new(vx, vy, width, height).map_err(js)?;
        Ok(Demo {
            session,
            width,
            height,
            clamped: false,
        })
    }

    pub fn retarget(&mut self, scale: f64, num_panels: usize) -> Result<usize, JsError> {
        self.session.retarget(scale, num_panels).map_err(js)
    }

    #[wasm_bindgen(js_name = estimateDisparity)]
    pub fn estimate_disparity(&mut self) -> Result<f64, JsError> {
        self.session.estimate_disparity().map_err(js)
    }

    #[wasm_bindgen(js_name = useGroundTruth)]
    pub fn use_ground_truth(&mut self) -> Result<(), JsError> {
        self.session.use_ground_truth().map_err(js)
    }

    /// RGBA bytes of the frame seen from `(ax, ay)`; the size is available
    /// from `frameWidth` / `frameHeight` afterwards.
    pub fn render(&mut self, ax: f64, ay: f64, mode: &str, blend: &str) -> Result<Vec<u8>, JsError> {
        let f = self.session.render(ax, ay, mode, blend).map_err(js)?;
        self.width = f.width;
        self.height = f.height;
        self.clamped = f.clamped;
        Ok(f.rgba)
    }

    #[wasm_bindgen(getter, js_name = frameWidth)]
    pub fn frame_width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter, js_name = frameHeight)]
    pub fn frame_height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    #[wasm_bindgen(getter)]
    pub fn holes(&self) -> usize {
        self.session.holes()
    }

    #[wasm_bindgen(getter, js_name = panelDepths)]
    pub fn panel_depths(&self) -> Vec<f64> {
        self.session.panel_depths()
    }
}
