//! Light-field data model: view images, scalar maps and the angular grid.
//!
//! Samples are normalized to `[0, 1]` and every image or map carries an
//! explicit validity mask, so dark scene content is never confused with a
//! hole.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod io;
pub mod pfm;

/// Position of a view in the capture grid together with its normalized angle.
///
/// `i` is the column, `j` the row. Angles are uniformly spaced over
/// `[-0.5, 0.5]`: `ang_x = i / (vx - 1) - 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularCoord {
    pub i: usize,
    pub j: usize,
    pub ang_x: f64,
    pub ang_y: f64,
}

impl AngularCoord {
    pub fn from_grid(i: usize, j: usize, vx: usize, vy: usize) -> Self {
        Self {
            i,
            j,
            ang_x: normalized_angle(i, vx),
            ang_y: normalized_angle(j, vy),
        }
    }
}

/// Normalized angle of index `k` on an axis of `n` views.
///
/// Written as `(2k - (n-1)) / (2(n-1))` so mirrored indices produce exactly
/// negated angles and the centre of an odd axis is exactly zero.
pub fn normalized_angle(k: usize, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let span = (n - 1) as f64;
    (2.0 * k as f64 - span) / (2.0 * span)
}

/// A single view: interleaved samples plus a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl ViewImage {
    /// A fully valid image filled with `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            mask: vec![true; width * height],
        }
    }

    /// An image whose pixels are all holes.
    pub fn empty(width: usize, height: usize, channels: usize) -> Self {
        let mut img = Self::filled(width, height, channels, 0.0);
        img.mask.fill(false);
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let mask = vec![true; width * height];
        Self::from_parts(width, height, channels, data, mask)
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "views must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels || mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {} samples and {} mask entries, got {} and {}",
                width,
                height,
                channels,
                width * height * channels,
                width * height,
                data.len(),
                mask.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Mutable access to samples and mask. Callers must keep samples in `[0, 1]`.
    pub fn parts_mut(&mut self) -> (&mut [f32], &mut [bool]) {
        (&mut self.data, &mut self.mask)
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let idx = (y * self.width + x) * self.channels;
        &self.data[idx..idx + self.channels]
    }

    pub fn pixel_at(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn set_pixel(&mut self, idx: usize, value: &[f32]) {
        let c = self.channels;
        self.data[idx * c..(idx + 1) * c].copy_from_slice(value);
        self.mask[idx] = true;
    }

    pub fn invalidate(&mut self, idx: usize) {
        let c = self.channels;
        self.data[idx * c..(idx + 1) * c].fill(0.0);
        self.mask[idx] = false;
    }

    pub fn hole_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// Per-pixel luma (Rec. 601 weights for colour input).
    pub fn gray(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &ViewImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Replicates a single-channel image into three channels.
    pub fn to_rgb(&self) -> ViewImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|v| [*v, *v, *v]).collect();
        ViewImage {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
            mask: self.mask.clone(),
        }
    }

    /// Multiplies every sample by `factor`, clamping to `[0, 1]`.
    pub fn scaled(&self, factor: f32) -> ViewImage {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = (*v * factor).clamp(0.0, 1.0);
        }
        out
    }
}

/// A real-valued per-pixel map with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl ScalarMap {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            mask: vec![true; width * height],
        }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} map needs {} entries, got {} values and {} mask entries",
                width,
                height,
                width * height,
                values.len(),
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            mask,
        })
    }

    /// Builds a map from optional values; `None` marks an invalid pixel.
    pub fn from_options(width: usize, height: usize, values: &[Option<f32>]) -> Result<Self> {
        let mask = values.iter().map(Option::is_some).collect();
        let vals = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::from_parts(width, height, vals, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn parts_mut(&mut self) -> (&mut [f32], &mut [bool]) {
        (&mut self.values, &mut self.mask)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let idx = y * self.width + x;
        self.mask[idx].then(|| self.values[idx])
    }

    pub fn set(&mut self, idx: usize, value: f32) {
        self.values[idx] = value;
        self.mask[idx] = true;
    }

    pub fn invalidate(&mut self, idx: usize) {
        self.values[idx] = 0.0;
        self.mask[idx] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Iterator over the values of valid pixels.
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(v, m)| m.then_some(*v))
    }

    /// Minimum and maximum over valid pixels.
    pub fn valid_range(&self) -> Option<(f32, f32)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

macro_rules! scalar_map_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub ScalarMap);

        impl Deref for $name {
            type Target = ScalarMap;
            fn deref(&self) -> &ScalarMap {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut ScalarMap {
                &mut self.0
            }
        }

        impl From<ScalarMap> for $name {
            fn from(map: ScalarMap) -> Self {
                Self(map)
            }
        }
    };
}

scalar_map_newtype!(
    /// Horizontal pixel shift between adjacent views (one grid step).
    ///
    /// A view `k` steps to the right sees a point at `x - k * d`.
    DisparityMap
);

scalar_map_newtype!(
    /// Normalized depth: 0 is the nearest scene point, 1 the farthest.
    DepthMap
);

/// Rectangular grid of views, stored row-major (`j * vx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct LightFieldGrid {
    vx: usize,
    vy: usize,
    views: Vec<ViewImage>,
}

impl LightFieldGrid {
    pub fn new(vx: usize, vy: usize, views: Vec<ViewImage>) -> Result<Self> {
        if vx < 2 || vy < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2, got {vx}x{vy}"
            )));
        }
        if views.len() != vx * vy {
            return Err(Error::InvalidGrid(format!(
                "{vx}x{vy} grid needs {} views, got {}",
                vx * vy,
                views.len()
            )));
        }
        let first = &views[0];
        if let Some(k) = views.iter().position(|v| !v.same_shape(first)) {
            return Err(Error::InvalidGrid(format!(
                "view (row {}, col {}) is {}x{}x{}, expected {}x{}x{}",
                k / vx,
                k % vx,
                views[k].width(),
                views[k].height(),
                views[k].channels(),
                first.width(),
                first.height(),
                first.channels()
            )));
        }
        Ok(Self { vx, vy, views })
    }

    pub fn vx(&self) -> usize {
        self.vx
    }

    pub fn vy(&self) -> usize {
        self.vy
    }

    pub fn width(&self) -> usize {
        self.views[0].width()
    }

    pub fn height(&self) -> usize {
        self.views[0].height()
    }

    pub fn channels(&self) -> usize {
        self.views[0].channels()
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// View at column `i`, row `j`.
    pub fn view(&self, i: usize, j: usize) -> &ViewImage {
        &self.views[j * self.vx + i]
    }

    pub fn views(&self) -> &[ViewImage] {
        &self.views
    }

    pub fn into_views(self) -> Vec<ViewImage> {
        self.views
    }

    pub fn coord(&self, i: usize, j: usize) -> AngularCoord {
        AngularCoord::from_grid(i, j, self.vx, self.vy)
    }

    /// All coordinates in storage order.
    pub fn coords(&self) -> Vec<AngularCoord> {
        grid_coords(self.vx, self.vy)
    }

    /// Grid index `floor(V/2)` on each axis: the exact centre of odd grids.
    pub fn center_index(&self) -> (usize, usize) {
        (self.vx / 2, self.vy / 2)
    }
}

pub fn grid_coords(vx: usize, vy: usize) -> Vec<AngularCoord> {
    (0..vy)
        .flat_map(|j| (0..vx).map(move |i| AngularCoord::from_grid(i, j, vx, vy)))
        .collect()
}
