//! Transport-independent part of the view service: query parsing, frame
//! rendering to PNG and the `/meta` document.

use serde::{Deserialize, Serialize};

use crate::calib::PanelCalibration;
use crate::error::{Error, Result};
use crate::model::io::encode_png;
use crate::model::ViewImage;
use crate::panel::{BlendMode, PanelLayout};
use crate::synth::{DisplayFrame, DisplayOptions, DisplayScene, ViewerPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FrameMode {
    #[default]
    Composite,
    Falsecolor,
    Panels,
}

pub const MODES: [&str; 3] = ["composite", "falsecolor", "panels"];

impl std::str::FromStr for FrameMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite" => Ok(FrameMode::Composite),
            "falsecolor" => Ok(FrameMode::Falsecolor),
            "panels" => Ok(FrameMode::Panels),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}` ({})", MODES.join(", ")))),
        }
    }
}

/// A parsed `/view` request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRequest {
    pub pose: ViewerPose,
    /// The requested angles were outside `[-0.5, 0.5]`.
    pub clamped: bool,
    pub mode: FrameMode,
}

impl ViewRequest {
    pub fn new(ax: f64, ay: f64, mode: FrameMode) -> Self {
        let (pose, clamped) = ViewerPose::new(ax, ay);
        Self { pose, clamped, mode }
    }

    /// Parses `ax=<f>&ay=<f>&mode=<m>`; missing angles are 0, the default
    /// mode is the composite.
    pub fn parse(query: &str) -> Result<Self> {
        let (mut ax, mut ay, mut mode) = (0.0, 0.0, FrameMode::Composite);
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
            let num = |v: &str| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::InvalidConfig(format!("`{k}` must be a finite number, got `{v}`")))
            };
            match k {
                "ax" => ax = num(v)?,
                "ay" => ay = num(v)?,
                "mode" => mode = v.parse()?,
                _ => {}
            }
        }
        Ok(Self::new(ax, ay, mode))
    }
}

/// Grid shape reported by `/meta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub vx: usize,
    pub vy: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Meta {
    pub grid: GridShape,
    pub layout: PanelLayout,
    pub blend: BlendMode,
    pub modes: Vec<String>,
    pub calibrated: bool,
    pub display_width: usize,
    pub display_height: usize,
}

/// Everything needed to answer view requests; immutable and shareable
/// between concurrent requests.
#[derive(Debug, Clone)]
pub struct ViewService {
    pub scene: DisplayScene,
    pub blend: BlendMode,
    pub calibration: Option<PanelCalibration>,
}

impl ViewService {
    pub fn new(scene: DisplayScene, blend: BlendMode, calibration: Option<PanelCalibration>) -> Result<Self> {
        if let Some(c) = &calibration {
            c.validate()?;
            if c.num_panels() != scene.layout.num_panels() {
                return Err(Error::InvalidConfig(format!(
                    "calibration covers {} panels, layout has {}",
                    c.num_panels(),
                    scene.layout.num_panels()
                )));
            }
        }
        Ok(Self {
            scene,
            blend,
            calibration,
        })
    }

    pub fn frame(&self, pose: ViewerPose) -> Result<DisplayFrame> {
        let opts = DisplayOptions {
            mode: self.blend,
            calibration: self.calibration.as_ref(),
            misalignment: None,
        };
        self.scene.render(pose, &opts)
    }

    pub fn image(&self, req: &ViewRequest) -> Result<ViewImage> {
        let f = self.frame(req.pose)?;
        Ok(match req.mode {
            FrameMode::Composite => f.composite,
            FrameMode::Falsecolor => f.falsecolor(),
            FrameMode::Panels => f.panel_strip(),
        })
    }

    pub fn render_png(&self, req: &ViewRequest) -> Result<Vec<u8>> {
        Ok(encode_png(&self.image(req)?))
    }

    pub fn meta(&self) -> Meta {
        let s = &self.scene;
        let (dw, dh) = match &self.calibration {
            Some(c) => (c.display_width, c.display_height),
            None => (s.width(), s.height()),
        };
        Meta {
            grid: GridShape {
                vx: s.vx,
                vy: s.vy,
                width: s.width(),
                height: s.height(),
            },
            layout: s.layout.clone(),
            blend: self.blend,
            modes: MODES.iter().map(|m| m.to_string()).collect(),
            calibrated: self.calibration.is_some(),
            display_width: dw,
            display_height: dh,
        }
    }
}
