//! Fine depth slicing, parallax boosting by integer slice shifts,
//! back-to-front merging and hole filling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fill::fill_holes_with_depth;
use crate::model::{AngularCoord, DepthMap, LightFieldGrid, ScalarMap, ViewImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct BoostConfig {
    pub num_slices: usize,
    /// Largest shift in pixels for a unit angle and unit depth offset.
    pub scale: f64,
    /// Grid index `(i, j)` of the reference view; the central view (index
    /// `floor(V / 2)` on each axis) when absent.
    pub ref_view: Option<(usize, usize)>,
    /// Fixation depth that never moves.
    pub ref_d: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            num_slices: 100,
            scale: 100.0,
            ref_view: None,
            ref_d: 0.5,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_slices < 2 {
            return Err(Error::InvalidConfig(format!(
                "numSlices must be at least 2, got {}",
                self.num_slices
            )));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale must be non-negative, got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.ref_d) {
            return Err(Error::InvalidConfig(format!("refD must lie in [0, 1], got {}", self.ref_d)));
        }
        Ok(())
    }

    /// Angular coordinate of the reference view in a `vx x vy` grid.
    pub fn reference(&self, vx: usize, vy: usize) -> Result<AngularCoord> {
        let (i, j) = self.ref_view.unwrap_or((vx / 2, vy / 2));
        if i >= vx || j >= vy {
            return Err(Error::InvalidConfig(format!(
                "reference view ({i}, {j}) is outside the {vx}x{vy} grid"
            )));
        }
        Ok(AngularCoord::from_grid(i, j, vx, vy))
    }
}

/// One depth slice: the pixels whose depth falls in bin `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub index: usize,
    pub quantized_depth: f64,
    pub pixels: Vec<u32>,
}

/// Non-empty slices of one view, ordered by increasing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub width: usize,
    pub height: usize,
    pub slices: Vec<Slice>,
}

impl SliceStack {
    /// Membership mask of slice `s` (position in `slices`).
    pub fn mask(&self, s: usize) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for &p in &self.slices[s].pixels {
            m[p as usize] = true;
        }
        m
    }

    /// The slice's pixels of `view`; everything else is a hole.
    pub fn slice_image(&self, view: &ViewImage, s: usize) -> ViewImage {
        let mut out = ViewImage::empty(self.width, self.height, view.channels());
        for &p in &self.slices[s].pixels {
            out.set_pixel(p as usize, view.pixel_at(p as usize));
        }
        out
    }
}

pub fn slice_index(z: f32, num_slices: usize) -> usize {
    ((z.clamp(0.0, 1.0) as f64 * num_slices as f64).floor() as usize).min(num_slices - 1)
}

pub fn quantized_depth(index: usize, num_slices: usize) -> f64 {
    (index as f64 + 0.5) / num_slices as f64
}

/// Uniform quantization of valid depths into `num_slices` bins.
pub fn fine_slice(depth: &DepthMap, num_slices: usize) -> SliceStack {
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); num_slices];
    for (idx, (z, valid)) in depth.values().iter().zip(depth.mask()).enumerate() {
        if *valid {
            bins[slice_index(*z, num_slices)].push(idx as u32);
        }
    }
    SliceStack {
        width: depth.width(),
        height: depth.height(),
        slices: bins
            .into_iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(index, pixels)| Slice {
                index,
                quantized_depth: quantized_depth(index, num_slices),
                pixels,
            })
            .collect(),
    }
}

/// Integer shift of a slice at `quant_d` seen from angle `ang`, relative to
/// the reference angle `ref_ang`.
pub fn boost_shifts(ang: (f64, f64), quant_d: f64, cfg: &BoostConfig, ref_ang: (f64, f64)) -> (i64, i64) {
    let dz = quant_d - cfg.ref_d;
    (
        ((ang.0 - ref_ang.0) * dz * cfg.scale).round() as i64,
        ((ang.1 - ref_ang.1) * dz * cfg.scale).round() as i64,
    )
}

/// Shifts every slice and paints them back to front, so nearer slices cover
/// farther ones. Returns the image and the merged quantized depth, both with
/// holes where no slice landed.
pub fn boost_and_merge(
    stack: &SliceStack,
    view: &ViewImage,
    coord: AngularCoord,
    ref_ang: (f64, f64),
    cfg: &BoostConfig,
) -> (ViewImage, ScalarMap) {
    let (w, h) = (stack.width, stack.height);
    let mut img = ViewImage::empty(w, h, view.channels());
    let mut depth = ScalarMap::invalid(w, h);
    for slice in stack.slices.iter().rev() {
        let (tx, ty) = boost_shifts((coord.ang_x, coord.ang_y), slice.quantized_depth, cfg, ref_ang);
        for &p in &slice.pixels {
            let p = p as usize;
            let (x, y) = ((p % w) as i64 + tx, (p / w) as i64 + ty);
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let dst = y as usize * w + x as usize;
            img.set_pixel(dst, view.pixel_at(p));
            depth.set(dst, slice.quantized_depth as f32);
        }
    }
    (img, depth)
}

/// Output of retargeting one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RetargetedView {
    pub image: ViewImage,
    pub depth: DepthMap,
    /// Holes left by merging, before filling.
    pub holes: usize,
}

pub fn retarget_view(
    view: &ViewImage,
    depth: &DepthMap,
    coord: AngularCoord,
    ref_ang: (f64, f64),
    cfg: &BoostConfig,
) -> Result<RetargetedView> {
    if !depth.same_dims(view.width(), view.height()) {
        return Err(Error::DimensionMismatch(format!(
            "view is {}x{}, depth is {}x{}",
            view.width(),
            view.height(),
            depth.width(),
            depth.height()
        )));
    }
    let stack = fine_slice(depth, cfg.num_slices);
    let (merged, merged_depth) = boost_and_merge(&stack, view, coord, ref_ang, cfg);
    let holes = merged.hole_count();
    let (image, depth) = fill_holes_with_depth(&merged, &merged_depth)?;
    Ok(RetargetedView {
        image,
        depth: depth.into(),
        holes,
    })
}

/// Retargets every view of `grid` with its depth map.
pub fn retarget_grid(grid: &LightFieldGrid, depths: &[DepthMap], cfg: &BoostConfig) -> Result<Vec<RetargetedView>> {
    cfg.validate()?;
    if depths.len() != grid.view_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} depth maps for {} views",
            depths.len(),
            grid.view_count()
        )));
    }
    let r = cfg.reference(grid.vx(), grid.vy())?;
    let coords = grid.coords();
    crate::par::map(&coords, |c| {
        let k = c.j * grid.vx() + c.i;
        retarget_view(grid.view(c.i, c.j), &depths[k], *c, (r.ang_x, r.ang_y), cfg)
    })
    .into_iter()
    .collect()
}
