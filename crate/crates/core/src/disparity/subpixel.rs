//! Sub-pixel refinement on 2x upscaled views: local cost curve around the
//! integer result, cubic densification, then a parabola through the dense
//! minimum.

use super::cost::{submin, wta};
use super::features::{gradient_features, PixelFeatures};
use super::refs::CrosshairPair;
use super::support::{aggregate, SupportRegion};
use super::DisparityConfig;
use crate::model::{DisparityMap, ScalarMap, ViewImage};

/// Bilinear 2x upscale; output pixel `u` samples the input at `u / 2`, so
/// even output pixels reproduce input pixels exactly.
pub fn upscale_bilinear_2x(img: &ViewImage) -> ViewImage {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (w2, h2) = (2 * w, 2 * h);
    let src = img.data();
    let mut data = vec![0.0f32; w2 * h2 * c];
    crate::par::for_each_chunk(&mut data, w2 * c, |start, row| {
        let v = start / (w2 * c);
        let (y0, y1, fy) = (v / 2, (v / 2 + v % 2).min(h - 1), if v % 2 == 1 { 0.5f32 } else { 0.0 });
        for u in 0..w2 {
            let (x0, x1, fx) = (u / 2, (u / 2 + u % 2).min(w - 1), if u % 2 == 1 { 0.5f32 } else { 0.0 });
            for k in 0..c {
                let at = |x: usize, y: usize| src[(y * w + x) * c + k];
                let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
                let bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
                row[u * c + k] = top + fy * (bottom - top);
            }
        }
    });
    ViewImage::from_data(w2, h2, c, data).expect("interpolated samples stay in range")
}

/// Uniform Catmull-Rom interpolation with `factor` samples per input step.
/// End tangents treat the curve as flat beyond its endpoints.
pub fn catmull_rom_densify(samples: &[f64], factor: usize) -> Vec<f64> {
    let n = samples.len();
    if n < 2 || factor <= 1 {
        return samples.to_vec();
    }
    let at = |k: isize| samples[k.clamp(0, n as isize - 1) as usize];
    let mut out = Vec::with_capacity((n - 1) * factor + 1);
    for seg in 0..n - 1 {
        let s = seg as isize;
        let (p0, p1, p2, p3) = (at(s - 1), at(s), at(s + 1), at(s + 2));
        for step in 0..factor {
            let t = step as f64 / factor as f64;
            let (t2, t3) = (t * t, t * t * t);
            out.push(
                0.5 * (2.0 * p1
                    + (p2 - p0) * t
                    + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
                    + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3),
            );
        }
    }
    out.push(samples[n - 1]);
    out
}

/// Offset of the vertex of the parabola through `(-h, ym)`, `(0, y0)`,
/// `(h, yp)`, or `None` when the parabola does not open upwards.
pub fn parabola_vertex(ym: f64, y0: f64, yp: f64, h: f64) -> Option<f64> {
    let curvature = ym - 2.0 * y0 + yp;
    if !(curvature > 0.0) {
        return None;
    }
    Some(h * (ym - yp) / (2.0 * curvature))
}

/// Minimum location of a cost curve sampled at unit steps starting at 0.
pub fn refine_curve(costs: &[f64], factor: usize) -> f64 {
    let dense = catmull_rom_densify(costs, factor);
    let m = wta(&dense).expect("cost curve is never empty");
    let step = 1.0 / factor.max(1) as f64;
    let coarse = m as f64 * step;
    if m == 0 || m + 1 == dense.len() {
        return coarse;
    }
    match parabola_vertex(dense[m - 1], dense[m], dense[m + 1], step) {
        Some(offset) => coarse + offset,
        None => coarse,
    }
}

/// Squared intensity and gradient difference. Unlike the absolute-difference
/// matching cost it is quadratic around the true shift, so interpolating
/// its samples does not pull the minimum towards the sample positions.
#[inline]
pub fn refine_cost(reference: &PixelFeatures, a: usize, partner: &PixelFeatures, b: usize) -> f32 {
    let di = reference.gray[a] - partner.gray[b];
    let dx = reference.gx[a] - partner.gx[b];
    let dy = reference.gy[a] - partner.gy[b];
    di * di + dx * dx + dy * dy
}

fn refine_cost_map(reference: &PixelFeatures, partner: &PixelFeatures, shift: (i64, i64)) -> Vec<f32> {
    let (w, h) = (reference.width, reference.height);
    let mut out = vec![0.0f32; w * h];
    crate::par::for_each_chunk(&mut out, w, |start, row| {
        let y = (start / w) as i64;
        let py = (y + shift.1).clamp(0, h as i64 - 1) as usize;
        for (x, c) in row.iter_mut().enumerate() {
            let px = (x as i64 + shift.0).clamp(0, w as i64 - 1) as usize;
            *c = refine_cost(reference, start + x, partner, py * w + px);
        }
    });
    out
}

/// Refines `integer` around each valid pixel. `partners` holds the partner
/// image of each pair, `region` the reference support region at the original
/// resolution.
pub fn subpixel_refine(
    reference: &ViewImage,
    pairs: &[CrosshairPair; 4],
    partners: [&ViewImage; 4],
    region: &SupportRegion,
    integer: &DisparityMap,
    cfg: &DisparityConfig,
) -> DisparityMap {
    let (w, h) = (reference.width(), reference.height());
    let w2 = 2 * w;
    let mu = cfg.mu as i64;
    let ref_features = gradient_features(&upscale_bilinear_2x(reference));
    let partner_features: Vec<_> = partners
        .iter()
        .map(|p| gradient_features(&upscale_bilinear_2x(p)))
        .collect();
    let region = region.upscale_2x();

    // Every pixel of a support region is evaluated at the anchor's candidate,
    // so curves are built per absolute candidate (upscaled units) and each
    // anchor reads its own window.
    let bases: Vec<Option<i64>> = (0..w * h)
        .map(|idx| integer.mask()[idx].then(|| 2 * integer.values()[idx].round() as i64))
        .collect();
    let (lo, hi) = match bases.iter().flatten().fold(None, |acc: Option<(i64, i64)>, &b| {
        Some(acc.map_or((b, b), |(l, h)| (l.min(b), h.max(b))))
    }) {
        Some((l, h)) => (l - mu, h + mu),
        None => return ScalarMap::invalid(w, h).into(),
    };
    let mut needed = vec![false; (hi - lo + 1) as usize];
    for b in bases.iter().flatten() {
        for d in b - mu..=b + mu {
            needed[(d - lo) as usize] = true;
        }
    }
    let candidates: Vec<i64> = (lo..=hi).filter(|d| needed[(d - lo) as usize]).collect();
    let mut slot = vec![usize::MAX; needed.len()];
    for (k, d) in candidates.iter().enumerate() {
        slot[(d - lo) as usize] = k;
    }
    let curves: Vec<Vec<f32>> = crate::par::map(&candidates, |&d| {
        let per_pair: Vec<Vec<f32>> = pairs
            .iter()
            .zip(&partner_features)
            .map(|(pair, pf)| {
                let shift = (-(pair.steps.0 as i64) * d, -(pair.steps.1 as i64) * d);
                aggregate(&region, &refine_cost_map(&ref_features, pf, shift))
            })
            .collect();
        (0..w * h)
            .map(|idx| {
                let u = (idx / w) * 2 * w2 + (idx % w) * 2;
                submin([per_pair[0][u], per_pair[1][u], per_pair[2][u], per_pair[3][u]])
            })
            .collect()
    });

    let mut out = ScalarMap::invalid(w, h);
    for idx in 0..w * h {
        let Some(base) = bases[idx] else { continue };
        let costs: Vec<f64> = (base - mu..=base + mu)
            .map(|d| curves[slot[(d - lo) as usize]][idx] as f64)
            .collect();
        let pos = refine_curve(&costs, cfg.dense_factor as usize);
        let up = (base - mu) as f64 + pos;
        out.set(idx, (up / 2.0).clamp(0.0, cfg.max_d as f64) as f32);
    }
    out.into()
}
