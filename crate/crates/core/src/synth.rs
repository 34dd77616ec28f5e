//! Continuous-angle view synthesis by bilinear interpolation over the view
//! grid, and the simulated additive multi-panel display.

use serde::{Deserialize, Serialize};

use crate::calib::{apply_affine, AffineParams, PanelCalibration};
use crate::error::{Error, Result};
use crate::model::{DepthMap, ScalarMap, ViewImage};
use crate::panel::{blend_to_panels, composite, BlendMode, PanelLayout, PanelStack};

/// Viewer position as normalized angles in `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewerPose {
    pub ang_x: f64,
    pub ang_y: f64,
}

impl ViewerPose {
    /// Clamps to the valid range; the flag reports whether anything changed.
    /// Non-finite angles become 0.
    pub fn new(ang_x: f64, ang_y: f64) -> (Self, bool) {
        let fix = |a: f64| if a.is_finite() { a.clamp(-0.5, 0.5) } else { 0.0 };
        let pose = Self {
            ang_x: fix(ang_x),
            ang_y: fix(ang_y),
        };
        (pose, pose.ang_x != ang_x || pose.ang_y != ang_y)
    }
}

/// Lower neighbour and fractional offset of `ang` on an axis of `n` views.
/// Offsets within 1e-9 of a node snap to it.
pub fn axis_position(ang: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let u = (ang.clamp(-0.5, 0.5) + 0.5) * (n - 1) as f64;
    let nearest = u.round();
    let u = if (u - nearest).abs() < 1e-9 { nearest } else { u };
    let k = (u.floor() as usize).min(n - 2);
    (k, u - k as f64)
}

/// Views (row-major index) contributing at `pose` with their non-zero
/// bilinear weights.
pub fn angular_weights(vx: usize, vy: usize, pose: ViewerPose) -> Vec<(usize, f64)> {
    let (i, fx) = axis_position(pose.ang_x, vx);
    let (j, fy) = axis_position(pose.ang_y, vy);
    let mut out = Vec::with_capacity(4);
    for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
            let w = wx * wy;
            if w > 0.0 {
                out.push(((j + dj) * vx + i + di, w));
            }
        }
    }
    out
}

fn blend_samples(sources: &[(&[f32], f64)], len: usize) -> Vec<f32> {
    if let [(only, _)] = sources {
        return only.to_vec();
    }
    let mut out = vec![0.0f32; len];
    crate::par::for_each_chunk(&mut out, 4096, |start, chunk| {
        for (k, o) in chunk.iter_mut().enumerate() {
            let v: f64 = sources.iter().map(|(s, w)| w * s[start + k] as f64).sum();
            *o = v as f32;
        }
    });
    out
}

fn blend_masks(masks: &[&[bool]]) -> Vec<bool> {
    (0..masks[0].len()).map(|k| masks.iter().all(|m| m[k])).collect()
}

/// Bilinear interpolation of the row-major `vx x vy` grid `views` at `pose`.
/// A pixel is valid when every contributing view is valid there.
pub fn interpolate_view(views: &[ViewImage], vx: usize, vy: usize, pose: ViewerPose) -> ViewImage {
    let wts = angular_weights(vx, vy, pose);
    let first = &views[wts[0].0];
    let (w, h, c) = (first.width(), first.height(), first.channels());
    let srcs: Vec<(&[f32], f64)> = wts.iter().map(|(k, wt)| (views[*k].data(), *wt)).collect();
    let masks: Vec<&[bool]> = wts.iter().map(|(k, _)| views[*k].mask()).collect();
    let data = blend_samples(&srcs, w * h * c).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ViewImage::from_parts(w, h, c, data, blend_masks(&masks)).expect("convex combination of valid samples")
}

pub fn interpolate_depth(depths: &[DepthMap], vx: usize, vy: usize, pose: ViewerPose) -> DepthMap {
    let wts = angular_weights(vx, vy, pose);
    let first = &depths[wts[0].0];
    let srcs: Vec<(&[f32], f64)> = wts.iter().map(|(k, wt)| (depths[*k].values(), *wt)).collect();
    let masks: Vec<&[bool]> = wts.iter().map(|(k, _)| depths[*k].mask()).collect();
    let values = blend_samples(&srcs, first.len());
    ScalarMap::from_parts(first.width(), first.height(), values, blend_masks(&masks))
        .expect("dimensions match")
        .into()
}

/// Display path settings for one frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisplayOptions<'a> {
    pub mode: BlendMode,
    /// Correction applied to each panel; identity at input size when absent.
    pub calibration: Option<&'a PanelCalibration>,
    /// Simulated optical misalignment of each panel, applied after the
    /// correction.
    pub misalignment: Option<&'a [AffineParams]>,
}

/// One simulated display frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayFrame {
    /// Panel images as projected, at display resolution.
    pub stack: PanelStack,
    pub composite: ViewImage,
    /// The pose was clamped to the calibration bounds.
    pub calibration_clamped: bool,
}

impl DisplayFrame {
    pub fn falsecolor(&self) -> ViewImage {
        self.stack.falsecolor()
    }

    /// Panels side by side, front panel on the left.
    pub fn panel_strip(&self) -> ViewImage {
        let panels = &self.stack.panels;
        let (w, h, c) = (panels[0].width(), panels[0].height(), panels[0].channels());
        let n = panels.len();
        let mut data = vec![0.0f32; n * w * h * c];
        let mut mask = vec![false; n * w * h];
        for (p, img) in panels.iter().enumerate() {
            for y in 0..h {
                let dst = (y * n * w + p * w) * c;
                data[dst..dst + w * c].copy_from_slice(&img.data()[y * w * c..(y + 1) * w * c]);
                mask[y * n * w + p * w..y * n * w + (p + 1) * w].copy_from_slice(&img.mask()[y * w..(y + 1) * w]);
            }
        }
        ViewImage::from_parts(n * w, h, c, data, mask).expect("copied samples")
    }
}

/// Blends `view` onto the panels, applies each panel's calibration and sums
/// the panels into the composite the viewer sees.
pub fn simulate_display(
    view: &ViewImage,
    depth: &DepthMap,
    layout: &PanelLayout,
    pose: ViewerPose,
    opts: &DisplayOptions,
) -> Result<DisplayFrame> {
    let stack = blend_to_panels(view, depth, layout, opts.mode)?;
    let n = layout.num_panels();
    let (params, clamped, out_w, out_h) = match opts.calibration {
        Some(c) => {
            if c.num_panels() != n {
                return Err(Error::InvalidConfig(format!(
                    "calibration covers {} panels, layout has {n}",
                    c.num_panels()
                )));
            }
            let at = c.at(pose);
            (at.params, at.clamped, c.display_width, c.display_height)
        }
        None => (vec![AffineParams::IDENTITY; n], false, view.width(), view.height()),
    };
    if let Some(m) = opts.misalignment {
        if m.len() != n {
            return Err(Error::InvalidConfig(format!("misalignment for {} panels, layout has {n}", m.len())));
        }
    }
    let panels = stack
        .panels
        .iter()
        .enumerate()
        .map(|(p, img)| {
            let a = match opts.misalignment {
                Some(m) => params[p].then(&m[p]),
                None => params[p],
            };
            apply_affine(img, &a, out_w, out_h)
        })
        .collect::<Result<Vec<_>>>()?;
    let composite = composite(&panels);
    Ok(DisplayFrame {
        stack: PanelStack {
            layout: stack.layout,
            panels,
        },
        composite,
        calibration_clamped: clamped,
    })
}

/// Synthesized views and depths of a grid with a fixed panel layout: all a
/// display needs to render any pose.
#[derive(Debug, Clone)]
pub struct DisplayScene {
    pub vx: usize,
    pub vy: usize,
    pub views: Vec<ViewImage>,
    pub depths: Vec<DepthMap>,
    pub layout: PanelLayout,
}

impl DisplayScene {
    pub fn new(vx: usize, vy: usize, views: Vec<ViewImage>, depths: Vec<DepthMap>, layout: PanelLayout) -> Result<Self> {
        if views.len() != vx * vy || depths.len() != vx * vy || views.is_empty() {
            return Err(Error::InvalidGrid(format!(
                "{} views and {} depth maps for a {vx}x{vy} grid",
                views.len(),
                depths.len()
            )));
        }
        let (w, h) = (views[0].width(), views[0].height());
        if views.iter().any(|v| !v.same_shape(&views[0])) || depths.iter().any(|d| !d.same_dims(w, h)) {
            return Err(Error::DimensionMismatch("scene views and depths differ in size".into()));
        }
        layout.validate()?;
        Ok(Self {
            vx,
            vy,
            views,
            depths,
            layout,
        })
    }

    pub fn width(&self) -> usize {
        self.views[0].width()
    }

    pub fn height(&self) -> usize {
        self.views[0].height()
    }

    pub fn render(&self, pose: ViewerPose, opts: &DisplayOptions) -> Result<DisplayFrame> {
        let view = interpolate_view(&self.views, self.vx, self.vy, pose);
        let depth = interpolate_depth(&self.depths, self.vx, self.vy, pose);
        simulate_display(&view, &depth, &self.layout, pose, opts)
    }
}
