//! Nearest-valid-pixel hole filling with an exact Euclidean distance
//! transform, followed by a 3x3 median over the filled pixels.

use crate::error::{Error, Result};
use crate::model::{ScalarMap, ViewImage};

/// Exact squared distance from every pixel to the nearest valid pixel
/// (two-pass lower-envelope transform). `None` when no pixel is valid.
pub fn squared_distance_transform(mask: &[bool], w: usize, h: usize) -> Option<Vec<i64>> {
    if !mask.iter().any(|v| *v) {
        return None;
    }
    // Column pass: vertical distance to the nearest valid pixel in the column.
    let mut col = vec![None::<i64>; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if mask[y * w + x] {
                last = Some(y);
            }
            col[y * w + x] = last.map(|l| (y - l) as i64);
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if mask[y * w + x] {
                next = Some(y);
            }
            if let Some(n) = next {
                let d = (n - y) as i64;
                let slot = &mut col[y * w + x];
                *slot = Some(slot.map_or(d, |c| c.min(d)));
            }
        }
    }
    // Row pass: lower envelope of parabolas (x - q)^2 + f(q) over finite sites.
    let mut out = vec![0i64; w * h];
    let mut sites: Vec<i64> = Vec::with_capacity(w);
    let mut bounds: Vec<f64> = Vec::with_capacity(w + 1);
    for y in 0..h {
        let f = |q: i64| {
            let c = col[y * w + q as usize].expect("only finite sites are used");
            c * c
        };
        sites.clear();
        bounds.clear();
        for q in 0..w as i64 {
            if col[y * w + q as usize].is_none() {
                continue;
            }
            loop {
                let Some(&v) = sites.last() else {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = ((f(q) + q * q) - (f(v) + v * v)) as f64 / (2 * (q - v)) as f64;
                if s <= *bounds.last().unwrap() {
                    sites.pop();
                    bounds.pop();
                } else {
                    sites.push(q);
                    bounds.push(s);
                    break;
                }
            }
        }
        debug_assert!(!sites.is_empty(), "some column holds a valid pixel");
        let mut k = 0;
        for x in 0..w as i64 {
            while k + 1 < sites.len() && bounds[k + 1] < x as f64 {
                k += 1;
            }
            let q = sites[k];
            out[y * w + x as usize] = (x - q) * (x - q) + f(q);
        }
    }
    Some(out)
}

/// For every hole, every valid pixel at exactly the nearest distance, in
/// row-major order. Valid pixels map to themselves.
fn nearest_candidates(mask: &[bool], w: usize, h: usize, dist: &[i64], idx: usize) -> Vec<usize> {
    if mask[idx] {
        return vec![idx];
    }
    let d2 = dist[idx];
    let (x, y) = ((idx % w) as i64, (idx / w) as i64);
    let r = (d2 as f64).sqrt() as i64 + 1;
    let mut out = Vec::new();
    for dy in -r..=r {
        let yy = y + dy;
        let rest = d2 - dy * dy;
        if yy < 0 || yy >= h as i64 || rest < 0 {
            continue;
        }
        let dx = isqrt(rest);
        if dx * dx != rest {
            continue;
        }
        let xs: &[i64] = if dx == 0 { &[0] } else { &[-dx, dx] };
        for &ox in xs {
            let xx = x + ox;
            if xx >= 0 && xx < w as i64 && mask[yy as usize * w + xx as usize] {
                out.push(yy as usize * w + xx as usize);
            }
        }
    }
    out
}

fn isqrt(v: i64) -> i64 {
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Source pixel for every pixel: itself when valid, otherwise the nearest
/// valid pixel. Equidistant candidates are resolved by `prefer` (the largest
/// key wins) and then by row-major order.
pub fn nearest_sources(mask: &[bool], w: usize, h: usize, prefer: Option<&[f32]>) -> Result<Vec<usize>> {
    let dist = squared_distance_transform(mask, w, h).ok_or(Error::NoValidPixels)?;
    Ok(crate::par::map_range(w * h, |idx| {
        let cands = nearest_candidates(mask, w, h, &dist, idx);
        let mut best = cands[0];
        if let Some(key) = prefer {
            for &c in &cands[1..] {
                if key[c] > key[best] {
                    best = c;
                }
            }
        }
        best
    }))
}

/// 3x3 median of one channel over in-bounds neighbours.
fn median3x3(data: &[f32], w: usize, h: usize, c: usize, k: usize, idx: usize) -> f32 {
    let (x, y) = (idx % w, idx / w);
    let mut win = [0.0f32; 9];
    let mut n = 0;
    for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            win[n] = data[(yy * w + xx) * c + k];
            n += 1;
        }
    }
    let win = &mut win[..n];
    win.sort_by(f32::total_cmp);
    win[n / 2]
}

/// Copies `sources` into holes, then replaces every filled pixel with the
/// 3x3 median of the filled buffer.
fn fill_buffer(data: &[f32], w: usize, h: usize, c: usize, mask: &[bool], sources: &[usize]) -> Vec<f32> {
    let mut filled = data.to_vec();
    for idx in 0..w * h {
        if !mask[idx] {
            let s = sources[idx];
            for k in 0..c {
                filled[idx * c + k] = data[s * c + k];
            }
        }
    }
    let mut out = filled.clone();
    for idx in (0..w * h).filter(|i| !mask[*i]) {
        for k in 0..c {
            out[idx * c + k] = median3x3(&filled, w, h, c, k, idx);
        }
    }
    out
}

/// Fills every hole of `img` from its nearest valid pixel (ties by scan
/// order), then smooths the filled pixels with a 3x3 median.
pub fn fill_holes(img: &ViewImage) -> Result<ViewImage> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    if img.hole_count() == 0 {
        return Ok(img.clone());
    }
    let sources = nearest_sources(img.mask(), w, h, None)?;
    let data = fill_buffer(img.data(), w, h, c, img.mask(), &sources);
    Ok(ViewImage::from_data(w, h, c, data).expect("fill copies in-range samples"))
}

/// Fills an image and its depth map with the same source pixels. The two
/// must share a validity mask; among equidistant candidates the farther
/// (larger) depth wins, so disocclusions take background content.
pub fn fill_holes_with_depth(img: &ViewImage, depth: &ScalarMap) -> Result<(ViewImage, ScalarMap)> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    if !depth.same_dims(w, h) || depth.mask() != img.mask() {
        return Err(Error::DimensionMismatch(
            "image and depth must share dimensions and validity".into(),
        ));
    }
    if img.hole_count() == 0 {
        return Ok((img.clone(), depth.clone()));
    }
    let sources = nearest_sources(img.mask(), w, h, Some(depth.values()))?;
    let data = fill_buffer(img.data(), w, h, c, img.mask(), &sources);
    let values = fill_buffer(depth.values(), w, h, 1, depth.mask(), &sources);
    Ok((
        ViewImage::from_data(w, h, c, data).expect("fill copies in-range samples"),
        ScalarMap::from_parts(w, h, values, vec![true; w * h])?,
    ))
}

/// Nearest-valid fill of a scalar map without smoothing. Maps with no valid
/// pixel are returned unchanged.
pub fn fill_nearest(map: &ScalarMap) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    match nearest_sources(map.mask(), w, h, None) {
        Ok(sources) => {
            let values = sources.iter().map(|s| map.values()[*s]).collect();
            ScalarMap::from_parts(w, h, values, vec![true; w * h]).expect("same dimensions")
        }
        Err(_) => map.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_distance(mask: &[bool], w: usize, idx: usize) -> i64 {
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        mask.iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(k, _)| {
                let (a, b) = ((k % w) as i64, (k / w) as i64);
                (a - x).pow(2) + (b - y).pow(2)
            })
            .min()
            .unwrap()
    }

    #[test]
    fn no_holes_is_identity() {
        let img = ViewImage::from_data(3, 2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(fill_holes(&img).unwrap(), img);
    }

    #[test]
    fn single_hole_in_a_flat_field() {
        let mut img = ViewImage::filled(5, 5, 3, 0.5);
        img.invalidate(12);
        let out = fill_holes(&img).unwrap();
        assert_eq!(out.hole_count(), 0);
        assert_eq!(out.pixel_at(12), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn all_holes_is_an_error() {
        let img = ViewImage::empty(4, 4, 1);
        assert!(matches!(fill_holes(&img), Err(Error::NoValidPixels)));
    }

    #[test]
    fn hole_strip_takes_the_nearer_side() {
        // Columns 0..4 hold 0.2, 4..10 are holes, 10..14 hold 0.8.
        let (w, h) = (14, 6);
        let mut img = ViewImage::from_data(
            w,
            h,
            1,
            (0..w * h).map(|k| if k % w < 7 { 0.2 } else { 0.8 }).collect(),
        )
        .unwrap();
        for k in 0..w * h {
            if (4..10).contains(&(k % w)) {
                img.invalidate(k);
            }
        }
        let sources = nearest_sources(img.mask(), w, h, None).unwrap();
        for k in 0..w * h {
            let x = k % w;
            if (4..10).contains(&x) {
                let expect = if x <= 6 { 0.2 } else { 0.8 };
                assert_eq!(img.data()[sources[k]], expect, "x={x}");
                assert_eq!(brute_force_distance(img.mask(), w, k), ((k % w) as i64 - (sources[k] % w) as i64).pow(2));
            }
        }
        let out = fill_holes(&img).unwrap();
        assert_eq!(out.hole_count(), 0);
        assert_eq!(out.pixel(5, 3)[0], 0.2);
        assert_eq!(out.pixel(8, 3)[0], 0.8);
    }

    #[test]
    fn ties_prefer_the_farther_depth() {
        let (w, h) = (3, 1);
        let img = ViewImage::from_parts(w, h, 1, vec![0.1, 0.0, 0.9], vec![true, false, true]).unwrap();
        let depth = ScalarMap::from_parts(w, h, vec![0.2, 0.0, 0.7], vec![true, false, true]).unwrap();
        let sources = nearest_sources(img.mask(), w, h, Some(depth.values())).unwrap();
        assert_eq!(sources[1], 2);
        let (_, d) = fill_holes_with_depth(&img, &depth).unwrap();
        // Median of {0.2, 0.7, 0.7} after the fill.
        assert_eq!(d.values()[1], 0.7);
    }

    #[test]
    fn valid_pixels_away_from_fills_are_untouched() {
        let (w, h) = (12, 12);
        let data: Vec<f32> = (0..w * h).map(|k| ((k * 37) % 101) as f32 / 100.0).collect();
        let mut img = ViewImage::from_data(w, h, 1, data.clone()).unwrap();
        img.invalidate(5 * w + 5);
        let out = fill_holes(&img).unwrap();
        for k in 0..w * h {
            let (x, y) = (k % w, k / w);
            if x.abs_diff(5) > 1 || y.abs_diff(5) > 1 {
                assert_eq!(out.data()[k], data[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn distance_transform_matches_brute_force(
            w in 1usize..12,
            h in 1usize..12,
            bits in proptest::collection::vec(proptest::bool::weighted(0.15), 144),
        ) {
            let mask = &bits[..w * h];
            match squared_distance_transform(mask, w, h) {
                None => prop_assert!(!mask.iter().any(|v| *v)),
                Some(d) => {
                    for idx in 0..w * h {
                        prop_assert_eq!(d[idx], brute_force_distance(mask, w, idx));
                    }
                    let src = nearest_sources(mask, w, h, None).unwrap();
                    for idx in 0..w * h {
                        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
                        let (a, b) = ((src[idx] % w) as i64, (src[idx] / w) as i64);
                        prop_assert!(mask[src[idx]]);
                        prop_assert_eq!((a - x).pow(2) + (b - y).pow(2), d[idx]);
                        // First equidistant valid pixel in scan order.
                        let first = (0..w * h)
                            .find(|&k| mask[k] && ((k % w) as i64 - x).pow(2) + ((k / w) as i64 - y).pow(2) == d[idx])
                            .unwrap();
                        prop_assert_eq!(src[idx], first);
                    }
                }
            }
        }
    }
}
