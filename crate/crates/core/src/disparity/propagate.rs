//! Weighted forward remapping of reference disparities into other views.

use crate::model::{AngularCoord, DisparityMap, ScalarMap, ViewImage};

/// A reference view whose disparity is splatted into other views.
#[derive(Debug, Clone, Copy)]
pub struct PropagationSource<'a> {
    pub coord: AngularCoord,
    pub image: &'a ViewImage,
    pub disparity: &'a DisparityMap,
}

/// Bilinear splat weights for a point at `(x, y)`, ordered upper-left,
/// upper-right, lower-left, lower-right, each with its integer target pixel.
pub fn splat_weights(x: f64, y: f64) -> [((i64, i64), f64); 4] {
    let (fx, fy) = (x.floor(), y.floor());
    let (a, b) = (x - fx, y - fy);
    let (x0, y0) = (fx as i64, fy as i64);
    [
        ((x0, y0), (1.0 - a) * (1.0 - b)),
        ((x0 + 1, y0), a * (1.0 - b)),
        ((x0, y0 + 1), (1.0 - a) * b),
        ((x0 + 1, y0 + 1), a * b),
    ]
}

/// Colour similarity weight `exp(-dc / sigma)` with `dc` the mean absolute
/// channel difference.
pub fn color_weight(a: &[f32], b: &[f32], sigma: f64) -> f64 {
    let dc = a.iter().zip(b).map(|(p, q)| (p - q).abs() as f64).sum::<f64>() / a.len() as f64;
    (-dc / sigma).exp()
}

/// Forward-maps every valid source disparity into the `target` view. Each
/// source pixel lands at `(x - di * d, y - dj * d)` where `(di, dj)` is the
/// target's grid offset from the source, and spreads its disparity over the
/// four surrounding pixels. Pixels that receive no weight stay invalid.
pub fn propagate_disparity(
    sources: &[PropagationSource<'_>],
    target: AngularCoord,
    target_image: &ViewImage,
    sigma: f64,
) -> DisparityMap {
    let (w, h) = (target_image.width(), target_image.height());
    let mut num = vec![0.0f64; w * h];
    let mut den = vec![0.0f64; w * h];
    for src in sources {
        let di = target.i as f64 - src.coord.i as f64;
        let dj = target.j as f64 - src.coord.j as f64;
        let (values, mask) = (src.disparity.values(), src.disparity.mask());
        for idx in 0..w * h {
            if !mask[idx] {
                continue;
            }
            let d = values[idx] as f64;
            let x = (idx % w) as f64 - di * d;
            let y = (idx / w) as f64 - dj * d;
            let color = src.image.pixel_at(idx);
            for ((tx, ty), dist) in splat_weights(x, y) {
                if dist == 0.0 || tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                    continue;
                }
                let t = ty as usize * w + tx as usize;
                let weight = dist * color_weight(color, target_image.pixel_at(t), sigma);
                num[t] += weight * d;
                den[t] += weight;
            }
        }
    }
    let values: Vec<Option<f32>> = num
        .iter()
        .zip(&den)
        .map(|(n, d)| (*d > 0.0).then(|| (n / d) as f32))
        .collect();
    ScalarMap::from_options(w, h, &values)
        .expect("dimensions follow the target image")
        .into()
}
