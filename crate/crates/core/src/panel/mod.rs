//! Non-uniform quantization of depth onto display panels and intensity
//! blending across them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DepthMap, ViewImage};

pub mod quantize;

pub use quantize::{DepthHistogram, Quantizer};

/// Panel planes in normalized depth and the class boundaries between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PanelLayout {
    pub panel_depths: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl PanelLayout {
    pub fn num_panels(&self) -> usize {
        self.panel_depths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.panel_depths.len();
        let bad = |msg: String| Err(Error::InvalidConfig(format!("panel layout: {msg}")));
        if n < 2 {
            return bad(format!("need at least 2 panels, got {n}"));
        }
        if self.thresholds.len() != n - 1 {
            return bad(format!("{} thresholds for {n} panels", self.thresholds.len()));
        }
        if self.panel_depths.iter().chain(&self.thresholds).any(|v| !(0.0..=1.0).contains(v)) {
            return bad("depths and thresholds must lie in [0, 1]".into());
        }
        if !self.panel_depths.windows(2).all(|w| w[0] < w[1]) {
            return bad("panel depths must be strictly increasing".into());
        }
        for (k, t) in self.thresholds.iter().enumerate() {
            if !(self.panel_depths[k] <= *t && *t <= self.panel_depths[k + 1]) {
                return bad(format!("threshold {t} does not separate panels {k} and {}", k + 1));
            }
        }
        Ok(())
    }

    /// Panel whose depth class contains `z`.
    pub fn class_of(&self, z: f64) -> usize {
        self.thresholds.iter().filter(|t| z >= **t).count()
    }
}

/// Quantizes the valid depths of `depth` into `n` panels.
pub fn layout_from_depth(depth: &DepthMap, n: usize, quantizer: Quantizer) -> Result<PanelLayout> {
    let hist = DepthHistogram::from_depth(depth);
    let t = quantize::thresholds(&hist, n, quantizer)?;
    Ok(hist.layout(&t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BlendMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "two")]
    TwoPanel,
    #[default]
    #[serde(rename = "all")]
    AllPanel,
}

impl std::str::FromStr for BlendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BlendMode::None),
            "two" => Ok(BlendMode::TwoPanel),
            "all" => Ok(BlendMode::AllPanel),
            _ => Err(Error::InvalidConfig(format!("unknown blend mode `{s}` (none, two, all)"))),
        }
    }
}

/// Share of a pixel at depth `z` deposited on each panel; sums to 1.
pub fn blend_weights(z: f64, layout: &PanelLayout, mode: BlendMode) -> Vec<f64> {
    let mut w = vec![0.0; layout.num_panels()];
    blend_weights_into(z, layout, mode, &mut w);
    w
}

/// [`blend_weights`] into a caller-provided buffer of one entry per panel.
pub fn blend_weights_into(z: f64, layout: &PanelLayout, mode: BlendMode, w: &mut [f64]) {
    let pd = &layout.panel_depths;
    let n = pd.len();
    w.fill(0.0);
    match mode {
        BlendMode::None => w[layout.class_of(z)] = 1.0,
        BlendMode::TwoPanel => {
            if z <= pd[0] {
                w[0] = 1.0;
            } else if z >= pd[n - 1] {
                w[n - 1] = 1.0;
            } else {
                let k = pd.iter().rposition(|p| *p <= z).expect("z is above the first panel");
                let near = (pd[k + 1] - z) / (pd[k + 1] - pd[k]);
                w[k] = near;
                w[k + 1] = 1.0 - near;
            }
        }
        BlendMode::AllPanel => {
            let top = pd.iter().map(|p| (z - p).abs()).fold(0.0, f64::max) + (pd[n - 1] - pd[0]);
            let total: f64 = pd.iter().map(|p| top - (z - p).abs()).sum();
            for (wp, p) in w.iter_mut().zip(pd) {
                *wp = (top - (z - p).abs()) / total;
            }
        }
    }
}

/// Per-panel images of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelStack {
    pub layout: PanelLayout,
    pub panels: Vec<ViewImage>,
}

/// Splits every pixel of `view` over the panels by its depth. Pixels with an
/// invalid colour or depth stay holes on every panel.
pub fn blend_to_panels(view: &ViewImage, depth: &DepthMap, layout: &PanelLayout, mode: BlendMode) -> Result<PanelStack> {
    layout.validate()?;
    let (w, h, c) = (view.width(), view.height(), view.channels());
    if !depth.same_dims(w, h) {
        return Err(Error::DimensionMismatch(format!(
            "view is {w}x{h}, depth is {}x{}",
            depth.width(),
            depth.height()
        )));
    }
    let n = layout.num_panels();
    // Weights once per pixel, then one pass per panel.
    let mut weights = vec![0.0f64; w * h * n];
    crate::par::for_each_chunk(&mut weights, w * n, |start, row| {
        let first = start / n;
        for (x, wts) in row.chunks_mut(n).enumerate() {
            let idx = first + x;
            if view.mask()[idx] && depth.mask()[idx] {
                blend_weights_into(depth.values()[idx] as f64, layout, mode, wts);
            }
        }
    });
    let mask: Vec<bool> = view.mask().iter().zip(depth.mask()).map(|(a, b)| *a && *b).collect();
    let src = view.data();
    let panels = (0..n)
        .map(|p| {
            let mut data = vec![0.0f32; w * h * c];
            crate::par::for_each_chunk(&mut data, w * c, |start, row| {
                let first = start / c;
                for (x, px) in row.chunks_mut(c).enumerate() {
                    let idx = first + x;
                    if !mask[idx] {
                        continue;
                    }
                    let wp = weights[idx * n + p];
                    for k in 0..c {
                        px[k] = (wp * src[idx * c + k] as f64) as f32;
                    }
                }
            });
            ViewImage::from_parts(w, h, c, data, mask.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PanelStack {
        layout: layout.clone(),
        panels,
    })
}

/// Colour of panel `p` in false-colour composites: front red, middle green,
/// back blue, further panels cycling through secondaries.
pub fn panel_color(p: usize) -> [f32; 3] {
    const PALETTE: [[f32; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
    ];
    PALETTE[p % PALETTE.len()]
}

impl PanelStack {
    pub fn width(&self) -> usize {
        self.panels[0].width()
    }

    pub fn height(&self) -> usize {
        self.panels[0].height()
    }

    /// Additive sum of the panels, clamped to `[0, 1]`.
    pub fn composite(&self) -> ViewImage {
        composite(&self.panels)
    }

    /// RGB image where each panel's luma is drawn in its panel colour.
    pub fn falsecolor(&self) -> ViewImage {
        let (w, h) = (self.width(), self.height());
        let mut data = vec![0.0f32; w * h * 3];
        let mut mask = vec![false; w * h];
        for (p, panel) in self.panels.iter().enumerate() {
            let col = panel_color(p);
            for (idx, g) in panel.gray().iter().enumerate() {
                mask[idx] |= panel.mask()[idx];
                for k in 0..3 {
                    data[idx * 3 + k] += col[k] * g;
                }
            }
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        ViewImage::from_parts(w, h, 3, data, mask).expect("clamped samples")
    }
}

/// Additive sum of same-shaped images, clamped to `[0, 1]`. A pixel is valid
/// if any input is valid there.
pub fn composite(images: &[ViewImage]) -> ViewImage {
    let first = &images[0];
    let (w, h, c) = (first.width(), first.height(), first.channels());
    let mut data = vec![0.0f32; w * h * c];
    let mut mask = vec![false; w * h];
    for img in images {
        debug_assert!(img.same_shape(first));
        for (d, v) in data.iter_mut().zip(img.data()) {
            *d += v;
        }
        for (m, v) in mask.iter_mut().zip(img.mask()) {
            *m |= v;
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    ViewImage::from_parts(w, h, c, data, mask).expect("clamped samples")
}
