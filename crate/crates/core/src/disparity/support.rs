//! Cross-shaped adaptive support regions and their aggregation with 1-D
//! integral images (horizontal pass, then vertical pass).

use serde::{Deserialize, Serialize};

use super::features::gradients;
use crate::model::ViewImage;

/// Similarity limits for growing support arms. A pixel joins an arm only if
/// every difference to the anchor pixel is at most the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SupportThresholds {
    /// Largest per-channel absolute difference.
    pub color: f32,
    /// Largest `|dgx| + |dgy|`.
    pub gradient: f32,
    /// Largest luma difference.
    pub gray: f32,
}

impl Default for SupportThresholds {
    fn default() -> Self {
        Self {
            color: 0.08,
            gradient: 0.08,
            gray: 0.06,
        }
    }
}

/// Arm lengths per pixel, in pixels, excluding the anchor itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportRegion {
    pub width: usize,
    pub height: usize,
    pub left: Vec<u16>,
    pub right: Vec<u16>,
    pub up: Vec<u16>,
    pub down: Vec<u16>,
}

impl SupportRegion {
    /// Number of pixels covered by the region anchored at `idx`.
    pub fn area(&self, idx: usize) -> usize {
        let (x, y) = (idx % self.width, idx / self.width);
        let top = y - self.up[idx] as usize;
        let bottom = y + self.down[idx] as usize;
        (top..=bottom)
            .map(|yy| {
                let k = yy * self.width + x;
                self.left[k] as usize + self.right[k] as usize + 1
            })
            .sum()
    }

    /// Nearest-neighbour 2x upscale with doubled arm lengths.
    pub fn upscale_2x(&self) -> SupportRegion {
        let (w2, h2) = (self.width * 2, self.height * 2);
        let mut out = SupportRegion {
            width: w2,
            height: h2,
            left: vec![0; w2 * h2],
            right: vec![0; w2 * h2],
            up: vec![0; w2 * h2],
            down: vec![0; w2 * h2],
        };
        for y in 0..h2 {
            for x in 0..w2 {
                let src = (y / 2) * self.width + x / 2;
                let dst = y * w2 + x;
                out.left[dst] = self.left[src] * 2;
                out.right[dst] = (self.right[src] * 2).min((w2 - 1 - x) as u16);
                out.up[dst] = self.up[src] * 2;
                out.down[dst] = (self.down[src] * 2).min((h2 - 1 - y) as u16);
            }
        }
        out
    }
}

pub fn build_support_regions(img: &ViewImage, thresholds: &SupportThresholds, max_arm: usize) -> SupportRegion {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let gray = img.gray();
    let (gx, gy) = gradients(&gray, w, h);
    let data = img.data();
    let max_arm = max_arm.min(u16::MAX as usize);

    let similar = |a: usize, b: usize| -> bool {
        if (gray[a] - gray[b]).abs() > thresholds.gray {
            return false;
        }
        if (gx[a] - gx[b]).abs() + (gy[a] - gy[b]).abs() > thresholds.gradient {
            return false;
        }
        (0..c).all(|k| (data[a * c + k] - data[b * c + k]).abs() <= thresholds.color)
    };

    let arm = |anchor: usize, step: isize, limit: usize| -> u16 {
        let mut len = 0usize;
        let mut pos = anchor as isize;
        while len < limit.min(max_arm) {
            pos += step;
            if !similar(anchor, pos as usize) {
                break;
            }
            len += 1;
        }
        len as u16
    };

    let mut region = SupportRegion {
        width: w,
        height: h,
        left: vec![0; w * h],
        right: vec![0; w * h],
        up: vec![0; w * h],
        down: vec![0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            region.left[idx] = arm(idx, -1, x);
            region.right[idx] = arm(idx, 1, w - 1 - x);
            region.up[idx] = arm(idx, -(w as isize), y);
            region.down[idx] = arm(idx, w as isize, h - 1 - y);
        }
    }
    region
}

/// Sums `cost` over every pixel's support region.
///
/// Horizontal pass: each pixel sums its own horizontal arm from a row prefix
/// sum. Vertical pass: the anchor sums those horizontal totals along its own
/// vertical arm from a column prefix sum.
pub fn aggregate(region: &SupportRegion, cost: &[f32]) -> Vec<f32> {
    let (w, h) = (region.width, region.height);
    debug_assert_eq!(cost.len(), w * h);

    let mut horizontal = vec![0.0f64; w * h];
    let mut prefix = vec![0.0f64; w + 1];
    for y in 0..h {
        let row = &cost[y * w..(y + 1) * w];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + row[x] as f64;
        }
        for x in 0..w {
            let idx = y * w + x;
            let lo = x - region.left[idx] as usize;
            let hi = x + region.right[idx] as usize + 1;
            horizontal[idx] = prefix[hi] - prefix[lo];
        }
    }

    let mut out = vec![0.0f32; w * h];
    let mut col = vec![0.0f64; h + 1];
    for x in 0..w {
        for y in 0..h {
            col[y + 1] = col[y] + horizontal[y * w + x];
        }
        for y in 0..h {
            let idx = y * w + x;
            let lo = y - region.up[idx] as usize;
            let hi = y + region.down[idx] as usize + 1;
            out[idx] = (col[hi] - col[lo]) as f32;
        }
    }
    out
}
