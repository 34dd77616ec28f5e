//! Per-pixel matching features: central-difference gradients and a census
//! signature over a square window.

use crate::model::ViewImage;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<f32>,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub census: Vec<u64>,
    /// Bits used per census signature (window area minus the centre).
    pub census_bits: u32,
}

impl PixelFeatures {
    pub fn gradient_magnitude(&self, idx: usize) -> f32 {
        self.gx[idx].hypot(self.gy[idx])
    }

    pub fn gradient_orientation(&self, idx: usize) -> f32 {
        self.gy[idx].atan2(self.gx[idx])
    }
}

/// Largest census window whose signature fits one `u64`.
pub const MAX_CENSUS_WINDOW: usize = 7;

pub fn compute_features(img: &ViewImage, census_window: usize) -> PixelFeatures {
    let (w, h) = (img.width(), img.height());
    let gray = img.gray();
    let (gx, gy) = gradients(&gray, w, h);
    let census = census_transform(&gray, w, h, census_window);
    PixelFeatures {
        width: w,
        height: h,
        gray,
        gx,
        gy,
        census,
        census_bits: (census_window * census_window - 1) as u32,
    }
}

/// Intensity and gradients only; the census signature is left empty.
pub fn gradient_features(img: &ViewImage) -> PixelFeatures {
    let (w, h) = (img.width(), img.height());
    let gray = img.gray();
    let (gx, gy) = gradients(&gray, w, h);
    PixelFeatures {
        width: w,
        height: h,
        gray,
        gx,
        gy,
        census: Vec::new(),
        census_bits: 0,
    }
}

/// Central differences with edge clamping; each component lies in `[-0.5, 0.5]`
/// for inputs in `[0, 1]`.
pub fn gradients(gray: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let idx = y * w + x;
            gx[idx] = 0.5 * (gray[y * w + right] - gray[y * w + left]);
            gy[idx] = 0.5 * (gray[down * w + x] - gray[up * w + x]);
        }
    }
    (gx, gy)
}

/// Census signature: bit set where the neighbour is strictly darker than the
/// centre. Window positions outside the image are clamped to the border.
pub fn census_transform(gray: &[f32], w: usize, h: usize, window: usize) -> Vec<u64> {
    assert!(
        window % 2 == 1 && (3..=MAX_CENSUS_WINDOW).contains(&window),
        "census window must be odd and at most {MAX_CENSUS_WINDOW}"
    );
    let r = (window / 2) as i64;
    let mut out = vec![0u64; w * h];
    crate::par::for_each_chunk(&mut out, w, |start, row| {
        let y = (start / w) as i64;
        for (x, sig) in row.iter_mut().enumerate() {
            let center = gray[y as usize * w + x];
            let mut bits = 0u64;
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    bits = (bits << 1) | u64::from(gray[yy * w + xx] < center);
                }
            }
            *sig = bits;
        }
    });
    out
}
