//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Set `LFR_BLESS=1` to rewrite the golden image instead of comparing.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lfr_core::calib::{
    apply_affine, fit_calibration, synthetic_samples, AffineParams, Coefficients, PanelCalibration,
};
use lfr_core::depth::{field_to_depth, fit_conversion};
use lfr_core::disparity::cost::{submin, wta};
use lfr_core::disparity::support::{aggregate, build_support_regions, SupportThresholds};
use lfr_core::disparity::{estimate_all_views, estimate_reference, DisparityConfig, DisparityField};
use lfr_core::model::io::{decode_png, encode_png, save_light_field, to_u8};
use lfr_core::panel::quantize::{otsu, DepthHistogram, BINS};
use lfr_core::panel::{blend_to_panels, blend_weights, layout_from_depth, BlendMode, PanelLayout, Quantizer};
use lfr_core::pipeline::{load_scene, run_pipeline, PipelineConfig};
use lfr_core::retarget::{
    boost_and_merge, boost_shifts, fine_slice, quantized_depth, retarget_grid, retarget_view, BoostConfig, SliceStack,
};
use lfr_core::service::{FrameMode, ViewRequest, ViewService};
use lfr_core::synth::{angular_weights, interpolate_view, DisplayOptions, DisplayScene, ViewerPose};
use lfr_core::synthetic::{red_marker_centroid, SyntheticLightField, SyntheticScene};
use lfr_core::{DepthMap, LightFieldGrid, ScalarMap, ViewImage};

type Outcome = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("disparity ground truth", disparity_ground_truth),
        ("oracle equivalences", oracle_equivalences),
        ("depth conversion identity", depth_identity),
        ("boost shift properties", boost_properties),
        ("panel conservation", panel_conservation),
        ("fill completeness", fill_completeness),
        ("angular interpolation", angular_interpolation),
        ("calibration", calibration),
        ("ablations on the bundled scene", ablations),
        ("interactive throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn truth_depths(lf: &SyntheticLightField) -> Vec<DepthMap> {
    let field = DisparityField {
        vx: lf.grid.vx(),
        vy: lf.grid.vy(),
        maps: lf.disparity.clone(),
        references: Vec::new(),
        invalid_fraction: Vec::new(),
    };
    field_to_depth(&field, 1.0, 10.0).unwrap().1
}

/// PSNR over pixels valid in both images and inside `margin` of the border.
fn psnr(a: &ViewImage, b: &ViewImage, margin: usize) -> f64 {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let (mut se, mut n) = (0.0f64, 0usize);
    for y in margin..h - margin {
        for x in margin..w - margin {
            let idx = y * w + x;
            if !(a.mask()[idx] && b.mask()[idx]) {
                continue;
            }
            for k in 0..c {
                let d = a.data()[idx * c + k] as f64 - b.data()[idx * c + k] as f64;
                se += d * d;
                n += 1;
            }
        }
    }
    if se == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (n as f64 / se).log10()
}

// ---------------------------------------------------------------------------

fn disparity_ground_truth() -> Outcome {
    let cfg = DisparityConfig::default();

    // Integer stage on layered planes at integer disparities 0..8.
    let layered = SyntheticScene::layered_planes(5, 5, 256, 256, &[0.0, 2.0, 4.0, 6.0, 8.0], 5).render().unwrap();
    let refs = cfg.reference_views(5, 5).unwrap();
    let (mut exact, mut total) = (0usize, 0usize);
    for c in &refs {
        let est = estimate_reference(&layered.grid, *c, &cfg).unwrap();
        let truth = &layered.disparity[c.j * 5 + c.i];
        for idx in 0..truth.values().len() {
            total += 1;
            if est.integer.mask()[idx] && est.integer.values()[idx] == truth.values()[idx] {
                exact += 1;
            }
        }
    }
    let exact_frac = exact as f64 / total as f64;

    let start = Instant::now();
    let field = estimate_all_views(&layered.grid, &cfg).unwrap();
    let runtime = start.elapsed().as_secs_f64();
    let field_mae = mae_field(&field.maps, &layered.disparity);

    // Sub-pixel stage on single planes at fractional disparities.
    let planes = [0.35, 1.5, 2.75, 4.2, 6.6];
    let mut worst = [0.0f64; 2];
    let mut min_cover = 1.0f64;
    for (k, noise) in [0.0f32, 0.01].iter().enumerate() {
        for (p, &d) in planes.iter().enumerate() {
            let lf = SyntheticScene::plane(5, 5, 256, 256, d, 100 + p as u64)
                .with_noise(*noise, 7 + p as u64)
                .render()
                .unwrap();
            let c = lf.grid.coord(2, 2);
            let est = estimate_reference(&lf.grid, c, &cfg).unwrap();
            let vals: Vec<f32> = est.subpixel.valid_values().collect();
            min_cover = min_cover.min(vals.len() as f64 / (256.0 * 256.0));
            let mae = vals.iter().map(|v| (*v as f64 - d).abs()).sum::<f64>() / vals.len() as f64;
            worst[k] = worst[k].max(mae);
        }
    }

    let detail = format!(
        "integer exact {:.2}% over {} reference views; sub-pixel MAE {:.4} px noise-free, {:.4} px at 1% noise \
         (coverage >= {:.1}%); all-view MAE on layers {:.3} px; 25 views in {runtime:.1} s",
        exact_frac * 100.0,
        refs.len(),
        worst[0],
        worst[1],
        min_cover * 100.0,
        field_mae
    );
    ensure(
        exact_frac >= 0.95 && worst[0] <= 0.1 && worst[1] <= 0.2 && min_cover >= 0.9 && runtime < 30.0,
        detail,
    )
}

fn mae_field(est: &[lfr_core::DisparityMap], truth: &[lfr_core::DisparityMap]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (e, t) in est.iter().zip(truth) {
        for idx in 0..t.values().len() {
            if e.mask()[idx] {
                s += (e.values()[idx] as f64 - t.values()[idx] as f64).abs();
                n += 1;
            }
        }
    }
    s / n as f64
}

// ---------------------------------------------------------------------------

fn oracle_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Integral-image aggregation against direct summation. Integer-valued
    // costs keep every partial sum exact.
    let mut sad_cases = 0;
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let levels = rng.gen_range(2..6) as f32;
        let img = ViewImage::from_data(w, h, 1, (0..w * h).map(|_| (rng.gen_range(0..levels as u32) as f32) / levels).collect()).unwrap();
        let region = build_support_regions(&img, &SupportThresholds::default(), rng.gen_range(1..10));
        let cost: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0..=255) as f32).collect();
        let fast = aggregate(&region, &cost);
        for idx in 0..w * h {
            let (x, y) = (idx % w, idx / w);
            let mut naive = 0.0f64;
            for yy in y - region.up[idx] as usize..=y + region.down[idx] as usize {
                let k = yy * w + x;
                for xx in x - region.left[k] as usize..=x + region.right[k] as usize {
                    naive += cost[yy * w + xx] as f64;
                }
            }
            if fast[idx] as f64 != naive {
                return Err(format!("aggregation differs at ({x},{y}) of a {w}x{h} case"));
            }
        }
        sad_cases += 1;
    }

    // SUBMIN against every three-of-four subset.
    for _ in 0..10_000 {
        let c: [f32; 4] = std::array::from_fn(|_| rng.gen_range(0..100_000) as f32);
        let brute = (0..4)
            .map(|skip| (0..4).filter(|k| *k != skip).map(|k| c[k]).sum::<f32>())
            .fold(f32::INFINITY, f32::min);
        if submin(c) != brute {
            return Err(format!("submin {c:?}: {} vs {brute}", submin(c)));
        }
    }

    // WTA against the first index holding the minimum.
    for _ in 0..10_000 {
        let n = rng.gen_range(1..20);
        let c: Vec<u32> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let min = *c.iter().min().unwrap();
        let brute = c.iter().position(|v| *v == min);
        if wta(&c) != brute {
            return Err(format!("wta {c:?}"));
        }
    }

    // Multi-level Otsu against an exhaustive exact search.
    let mut otsu_cases = 0;
    for case in 0..50 {
        let classes = 2 + case % 3;
        let occupied = rng.gen_range(classes..=24);
        let mut counts = vec![0u64; BINS];
        for _ in 0..occupied {
            counts[rng.gen_range(0..BINS)] += rng.gen_range(1..200);
        }
        if counts.iter().filter(|c| **c > 0).count() < classes {
            continue;
        }
        let hist = DepthHistogram::from_counts(&counts);
        let got = otsu(&hist, classes).unwrap();
        let want = brute_force_otsu(&counts, classes);
        if got != want {
            return Err(format!("otsu case {case}: {got:?} vs {want:?}"));
        }
        otsu_cases += 1;
    }

    ensure(
        otsu_cases >= 45,
        format!("aggregation {sad_cases} images, submin 10000, wta 10000, otsu {otsu_cases} histograms all exact"),
    )
}

type Q = Ratio<i128>;

/// Exhaustive multi-threshold search over every strictly increasing tuple in
/// `1..BINS`, maximizing the between-class variance with bin indices as
/// positions. Ties keep the lexicographically first tuple. Tuples are
/// screened in f64; any within 1e-9 of the best so far is compared exactly
/// in rationals.
fn brute_force_otsu(counts: &[u64], classes: usize) -> Vec<usize> {
    let mut pw = vec![0i128; BINS + 1];
    let mut ps = vec![0i128; BINS + 1];
    for b in 0..BINS {
        pw[b + 1] = pw[b] + counts[b] as i128;
        ps[b + 1] = ps[b] + b as i128 * counts[b] as i128;
    }
    let n = pw[BINS];
    let mu = ps[BINS] as f64 / n as f64;
    let approx = |lo: usize, hi: usize| -> Option<f64> {
        let w = pw[hi] - pw[lo];
        (w != 0).then(|| {
            let m = (ps[hi] - ps[lo]) as f64 / w as f64 - mu;
            w as f64 / n as f64 * m * m
        })
    };
    let exact = |t: &[usize]| -> Q {
        let muq = Q::new(ps[BINS], n);
        let mut bounds = vec![0];
        bounds.extend_from_slice(t);
        bounds.push(BINS);
        bounds
            .windows(2)
            .map(|r| {
                let w = pw[r[1]] - pw[r[0]];
                let m = Q::new(ps[r[1]] - ps[r[0]], w) - muq;
                Q::new(w, n) * m * m
            })
            .fold(Q::from_integer(0), |a, b| a + b)
    };

    struct Search<'a> {
        approx: &'a dyn Fn(usize, usize) -> Option<f64>,
        exact: &'a dyn Fn(&[usize]) -> Q,
        best: Option<(f64, Q, Vec<usize>)>,
    }
    fn rec(s: &mut Search<'_>, t: &mut Vec<usize>, left: usize, acc: f64) {
        let lo = t.last().copied().unwrap_or(0);
        if left == 0 {
            let Some(last) = (s.approx)(lo, BINS) else { return };
            let v = acc + last;
            if let Some(b) = &s.best {
                if v < b.0 * (1.0 - 1e-9) {
                    return;
                }
                let q = (s.exact)(t);
                if q > b.1 {
                    s.best = Some((v, q, t.clone()));
                }
            } else {
                s.best = Some((v, (s.exact)(t), t.clone()));
            }
            return;
        }
        for x in lo + 1..BINS {
            let Some(c) = (s.approx)(lo, x) else { continue };
            t.push(x);
            rec(s, t, left - 1, acc + c);
            t.pop();
        }
    }
    let mut s = Search { approx: &approx, exact: &exact, best: None };
    rec(&mut s, &mut Vec::new(), classes - 1, 0.0);
    s.best.unwrap().2
}

// ---------------------------------------------------------------------------

fn depth_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let min_z = rng.gen_range(0.05..50.0);
        let max_z = min_z + rng.gen_range(0.01..500.0);
        let min_d = rng.gen_range(-20.0..20.0);
        let max_d = min_d + rng.gen_range(0.01..64.0);
        let p = fit_conversion(min_z, max_z, min_d, max_d).map_err(|e| e.to_string())?;
        let e1 = (p.depth(max_d) - min_z).abs() / min_z;
        let e2 = (p.depth(min_d) - max_z).abs() / max_z;
        worst = worst.max(e1).max(e2);
    }
    ensure(worst < 1e-9, format!("worst relative error {worst:.2e} over 1000 tuples"))
}

// ---------------------------------------------------------------------------

fn boost_properties() -> Outcome {
    let n = 9;
    let lf = SyntheticScene::bundled(n, n, 96, 72).render().unwrap();
    let depths = truth_depths(&lf);

    // Reference angle or reference depth never moves.
    for scale in [1.0, 37.5, 100.0, 250.0] {
        let cfg = BoostConfig { scale, ..Default::default() };
        let r = cfg.reference(n, n).unwrap();
        for c in lf.grid.coords() {
            for k in 0..cfg.num_slices {
                let q = quantized_depth(k, cfg.num_slices);
                if boost_shifts((r.ang_x, r.ang_y), q, &cfg, (r.ang_x, r.ang_y)) != (0, 0) {
                    return Err("shift at the reference angle".into());
                }
                if boost_shifts((c.ang_x, c.ang_y), cfg.ref_d, &cfg, (r.ang_x, r.ang_y)) != (0, 0) {
                    return Err("shift at the reference depth".into());
                }
            }
        }
    }

    // The reference view is reproduced exactly, and so are the pixels of a
    // slice placed at the reference depth in every other view.
    let mut cfg = BoostConfig { scale: 100.0, ..Default::default() };
    let r = cfg.reference(n, n).unwrap();
    let out = retarget_view(lf.grid.view(r.i, r.j), &depths[r.j * n + r.i], r, (r.ang_x, r.ang_y), &cfg).unwrap();
    if out.holes != 0 || out.image.data() != lf.grid.view(r.i, r.j).data() {
        return Err("reference view changed".into());
    }
    let corner = lf.grid.coord(0, 0);
    let stack = fine_slice(&depths[0], cfg.num_slices);
    for slice in &stack.slices {
        cfg.ref_d = slice.quantized_depth;
        let alone = SliceStack { slices: vec![slice.clone()], ..stack.clone() };
        let (img, _) = boost_and_merge(&alone, lf.grid.view(0, 0), corner, (r.ang_x, r.ang_y), &cfg);
        let still = img.hole_count() == img.width() * img.height() - slice.pixels.len()
            && slice.pixels.iter().all(|&p| img.pixel_at(p as usize) == lf.grid.view(0, 0).pixel_at(p as usize));
        if !still {
            return Err(format!("slice at the reference depth {} moved", slice.quantized_depth));
        }
    }

    // Scale 0 is the identity on every view.
    let zero = BoostConfig { scale: 0.0, ..Default::default() };
    let out = retarget_grid(&lf.grid, &depths, &zero).unwrap();
    let identity = out.iter().zip(lf.grid.views()).all(|(o, v)| o.holes == 0 && o.image.data() == v.data());
    if !identity {
        return Err("scale 0 changed a view".into());
    }

    // Worked example.
    let cfg = BoostConfig { scale: 100.0, ref_d: 0.5, ..Default::default() };
    let t = boost_shifts((-0.5, -0.5), 1.0, &cfg, (0.0, 0.0));
    ensure(
        t == (-25, -25),
        format!("reference angle and depth fixed for 4 scales over {} views, scale 0 identity, T={t:?}", n * n),
    )
}

// ---------------------------------------------------------------------------

fn panel_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (w, h) = (128, 96);
    let mut worst = 0.0f64;
    for trial in 0..6 {
        let view = ViewImage::from_data(w, h, 3, (0..w * h * 3).map(|_| rng.gen::<f32>()).collect()).unwrap();
        let depth: DepthMap = ScalarMap::from_parts(w, h, (0..w * h).map(|_| rng.gen::<f32>()).collect(), vec![true; w * h])
            .unwrap()
            .into();
        let layout = layout_from_depth(&depth, 2 + trial % 5, Quantizer::Otsu).unwrap();
        for mode in [BlendMode::None, BlendMode::TwoPanel, BlendMode::AllPanel] {
            let stack = blend_to_panels(&view, &depth, &layout, mode).unwrap();
            for (k, v) in view.data().iter().enumerate() {
                let sum: f64 = stack.panels.iter().map(|p| p.data()[k] as f64).sum();
                worst = worst.max((sum - *v as f64).abs());
            }
            if mode == BlendMode::None {
                for (idx, z) in depth.values().iter().enumerate() {
                    let owners = stack.panels.iter().filter(|p| p.pixel_at(idx).iter().any(|v| *v != 0.0)).count();
                    let wts = blend_weights(*z as f64, &layout, mode);
                    let one_hot = wts.iter().filter(|x| **x == 1.0).count() == 1 && wts.iter().all(|x| *x == 0.0 || *x == 1.0);
                    if !one_hot || owners > 1 {
                        return Err(format!("pixel {idx} split across panels without blending"));
                    }
                }
            }
        }
    }
    if worst > 1e-6 {
        return Err(format!("panel sum off by {worst:.2e}"));
    }

    // Two-panel weights are continuous at every panel plane and threshold.
    let mut jump = 0.0f64;
    for n in 2..=6 {
        let layout = PanelLayout {
            panel_depths: (0..n).map(|k| (k as f64 + 0.5) / n as f64 + 0.02 * (k % 2) as f64).collect(),
            thresholds: (1..n).map(|k| k as f64 / n as f64).collect(),
        };
        let knots = layout.panel_depths.iter().chain(&layout.thresholds);
        for &z in knots {
            let a = blend_weights(z - 1e-9, &layout, BlendMode::TwoPanel);
            let b = blend_weights(z + 1e-9, &layout, BlendMode::TwoPanel);
            let c = blend_weights(z, &layout, BlendMode::TwoPanel);
            for k in 0..n {
                jump = jump.max((a[k] - c[k]).abs()).max((b[k] - c[k]).abs());
            }
        }
    }
    ensure(
        jump < 1e-6,
        format!("panel sums within {worst:.1e} in all modes, no-blend one-hot, two-panel jump {jump:.1e} at knots"),
    )
}

// ---------------------------------------------------------------------------

fn fill_completeness() -> Outcome {
    let n = 5;
    let mut scene = SyntheticScene::layered_planes(n, n, 128, 96, &[0.5, 3.0], 17);
    scene.layers[1].shape = lfr_core::synthetic::Shape::Rect { x0: 40.0, y0: 30.0, x1: 90.0, y1: 70.0 };
    let lf = scene.render().unwrap();
    let depths = truth_depths(&lf);
    let mut filled = 0usize;
    for scale in [25.0, 50.0, 100.0] {
        let cfg = BoostConfig { scale, ..Default::default() };
        let r = cfg.reference(n, n).unwrap();
        for c in lf.grid.coords() {
            let idx = c.j * n + c.i;
            let view = lf.grid.view(c.i, c.j);
            let stack = fine_slice(&depths[idx], cfg.num_slices);
            let (merged, _) = boost_and_merge(&stack, view, c, (r.ang_x, r.ang_y), &cfg);
            let out = retarget_view(view, &depths[idx], c, (r.ang_x, r.ang_y), &cfg).unwrap();
            if out.image.hole_count() != 0 || out.depth.valid_count() != 128 * 96 {
                return Err(format!("holes remain at scale {scale} view ({}, {})", c.i, c.j));
            }
            for p in 0..128 * 96 {
                if merged.mask()[p] && merged.pixel_at(p) != out.image.pixel_at(p) {
                    return Err(format!("fill changed a valid pixel at scale {scale}"));
                }
            }
            filled += out.holes;
        }
    }
    ensure(
        filled > 0,
        format!("{filled} holes filled over 3 scales x 25 views, none left, valid pixels untouched"),
    )
}

// ---------------------------------------------------------------------------

fn angular_interpolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (vx, vy) in [(2, 2), (3, 5), (5, 5), (14, 14)] {
        let views: Vec<ViewImage> = (0..vx * vy)
            .map(|_| ViewImage::from_data(17, 11, 3, (0..17 * 11 * 3).map(|_| rng.gen::<f32>()).collect()).unwrap())
            .collect();
        let grid = LightFieldGrid::new(vx, vy, views.clone()).unwrap();
        for c in grid.coords() {
            let (pose, _) = ViewerPose::new(c.ang_x, c.ang_y);
            let out = interpolate_view(&views, vx, vy, pose);
            if out.data() != views[c.j * vx + c.i].data() {
                return Err(format!("node ({}, {}) of {vx}x{vy} not reproduced", c.i, c.j));
            }
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (vx, vy) = (rng.gen_range(2..16), rng.gen_range(2..16));
        let (pose, _) = ViewerPose::new(rng.gen_range(-0.5..=0.5), rng.gen_range(-0.5..=0.5));
        let s: f64 = angular_weights(vx, vy, pose).iter().map(|(_, w)| w).sum();
        worst = worst.max((s - 1.0).abs());
    }
    ensure(
        worst <= 1e-12,
        format!("nodes bit-exact on 4 grid shapes, weight sums within {worst:.1e} of 1 at 1000 poses"),
    )
}

// ---------------------------------------------------------------------------

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let truth: Vec<(usize, Coefficients)> = (1..4)
        .map(|p| {
            let mut r = |a: f64| rng.gen_range(-a..a);
            (
                p,
                Coefficients {
                    sx: [1.0 + r(0.05), r(0.02), r(0.02)],
                    sy: [1.0 + r(0.05), r(0.02), r(0.02)],
                    tx: [r(10.0), r(8.0), r(8.0)],
                    ty: [r(10.0), r(8.0), r(8.0)],
                },
            )
        })
        .collect();
    let samples = synthetic_samples(&truth, 0, (541, 375), 5, 0.0, 1);
    let fit = fit_calibration(&samples).map_err(|e| e.to_string())?;
    let mut coef_err = 0.0f64;
    let mut resid = 0.0f64;
    for (p, t) in &truth {
        let f = fit.panels.iter().find(|f| f.panel == *p).unwrap();
        for (a, b) in [(&f.coefficients.sx, &t.sx), (&f.coefficients.sy, &t.sy), (&f.coefficients.tx, &t.tx), (&f.coefficients.ty, &t.ty)] {
            for k in 0..3 {
                coef_err = coef_err.max((a[k] - b[k]).abs());
            }
        }
        let r = &f.residuals;
        resid = resid.max(r.sx).max(r.sy).max(r.tx).max(r.ty);
    }

    let smooth = |w: usize, h: usize| {
        let data = (0..w * h * 3)
            .map(|k| {
                let (p, ch) = (k / 3, k % 3);
                let (x, y) = ((p % w) as f32, (p / w) as f32);
                0.5 + 0.3 * (x / 23.0 + ch as f32).sin() * (y / 17.0).cos() + 0.1 * (x / 41.0 - y / 29.0).sin()
            })
            .collect();
        ViewImage::from_data(w, h, 3, data).unwrap()
    };
    let img = smooth(256, 192);
    let same = apply_affine(&img, &AffineParams::IDENTITY, 256, 192).unwrap();
    let identity_exact = same.data() == img.data() && same.hole_count() == 0;

    let a = AffineParams { sx: 1.07, sy: 0.96, tx: 3.3, ty: -2.7 };
    let fwd = apply_affine(&img, &a, 256, 192).unwrap();
    let back = apply_affine(&fwd, &a.inverse(), 256, 192).unwrap();
    let rt = psnr(&img, &back, 0);

    ensure(
        resid < 1e-9 && coef_err < 1e-9 && identity_exact && rt > 40.0,
        format!(
            "recovery residual {resid:.1e}, coefficient error {coef_err:.1e}, identity bit-exact {identity_exact}, \
             round-trip PSNR {rt:.1} dB"
        ),
    )
}

// ---------------------------------------------------------------------------

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/bundled_corner_composite.png")
}

/// Runs the full pipeline on the bundled scene at the given boost scale.
fn bundled_pipeline(root: &Path, scale: f64) -> (LightFieldGrid, DisplayScene) {
    let lf = SyntheticScene::bundled(5, 5, 192, 144).render().unwrap();
    let input = root.join("input");
    if !input.exists() {
        save_light_field(&lf.grid, &input).unwrap();
    }
    let out = root.join(format!("scale{scale}"));
    let mut cfg = PipelineConfig::default();
    cfg.boost.scale = scale;
    run_pipeline(&cfg, &input, &out).unwrap();
    (lf.grid, load_scene(&out).unwrap())
}

fn ablations() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut ok = true;

    // Boosting moves the foreground marker in corner views.
    let mut disp = [0.0; 2];
    let mut boosted = None;
    for (k, scale) in [0.0, 100.0].into_iter().enumerate() {
        let (grid, scene) = bundled_pipeline(tmp.path(), scale);
        for (i, j) in [(0, 0), (4, 0), (0, 4), (4, 4)] {
            let a = red_marker_centroid(grid.view(i, j)).ok_or("marker missing from input")?;
            let b = red_marker_centroid(&scene.views[j * 5 + i]).ok_or("marker missing after retargeting")?;
            disp[k] = f64::max(disp[k], ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
        if scale > 0.0 {
            boosted = Some(scene);
        }
    }
    ok &= disp[0] <= 1.0 && disp[1] >= 10.0;
    notes.push(format!("marker displacement {:.1} px at scale 0, {:.1} px at scale 100", disp[0], disp[1]));
    let scene = boosted.unwrap();

    // Golden composite of the boosted scene at a corner pose.
    let (corner, _) = ViewerPose::new(-0.5, -0.5);
    let frame = scene
        .render(corner, &DisplayOptions { mode: BlendMode::AllPanel, ..Default::default() })
        .unwrap();
    let png = encode_png(&frame.composite);
    let golden = golden_path();
    if std::env::var_os("LFR_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &png).unwrap();
        notes.push("golden image rewritten".into());
    } else {
        match std::fs::read(&golden) {
            Ok(bytes) => {
                let want = to_u8(&decode_png(&bytes).unwrap());
                let got = to_u8(&frame.composite);
                let max = want.iter().zip(&got).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(255);
                let same_len = want.len() == got.len();
                ok &= same_len && max <= 1;
                notes.push(format!("golden composite max difference {max} levels"));
            }
            Err(_) => {
                ok = false;
                notes.push("golden image missing".into());
            }
        }
    }

    // Ownership along a smooth depth ramp: hard steps without blending,
    // gradual with all-panel blending.
    let (w, h) = (256, 4);
    let ramp: DepthMap = ScalarMap::from_parts(w, h, (0..w * h).map(|k| (k % w) as f32 / (w - 1) as f32).collect(), vec![true; w * h])
        .unwrap()
        .into();
    let white = ViewImage::filled(w, h, 1, 1.0);
    let layout = layout_from_depth(&ramp, 4, Quantizer::Otsu).unwrap();
    let mut steps = [0.0f32; 2];
    for (k, mode) in [BlendMode::None, BlendMode::AllPanel].into_iter().enumerate() {
        let stack = blend_to_panels(&white, &ramp, &layout, mode).unwrap();
        for p in &stack.panels {
            for x in 1..w {
                steps[k] = steps[k].max((p.data()[x] - p.data()[x - 1]).abs());
            }
        }
    }
    ok &= steps[0] == 1.0 && steps[1] < 0.05;
    notes.push(format!("largest ownership step {:.3} without blending, {:.3} all-panel", steps[0], steps[1]));

    // Calibration against an injected misalignment. The correction the
    // display needs is linear in the pose; the physical misalignment is its
    // inverse. Samples carry 0.05 px tracking noise.
    let n = scene.layout.num_panels();
    let correction: Vec<(usize, Coefficients)> = (1..n)
        .map(|p| {
            let k = p as f64;
            (
                p,
                Coefficients {
                    sx: [1.0 + 0.012 * k, 0.01 * k, 0.0],
                    sy: [1.0 - 0.01 * k, 0.0, 0.008 * k],
                    tx: [2.5 * k, 4.0 * k, 0.0],
                    ty: [-1.5 * k, 0.0, 3.0 * k],
                },
            )
        })
        .collect();
    let (dw, dh) = (scene.width(), scene.height());
    let samples = synthetic_samples(&correction, 0, (dw, dh), 5, 0.05, 3);
    let calib: PanelCalibration = fit_calibration(&samples).unwrap();
    let (mut uncal_worst, mut cal_worst) = (f64::INFINITY, f64::INFINITY);
    for (ax, ay) in [(0.0, 0.0), (-0.5, -0.5), (0.5, -0.25), (0.3, 0.5), (-0.4, 0.2)] {
        let (pose, _) = ViewerPose::new(ax, ay);
        let mis: Vec<AffineParams> = (0..n)
            .map(|p| match correction.iter().find(|c| c.0 == p) {
                Some((_, c)) => c.at(ax, ay).inverse(),
                None => AffineParams::IDENTITY,
            })
            .collect();
        let base = DisplayOptions { mode: BlendMode::AllPanel, ..Default::default() };
        let reference = scene.render(pose, &base).unwrap().composite;
        let uncal = scene.render(pose, &DisplayOptions { misalignment: Some(&mis), ..base }).unwrap().composite;
        let cal = scene
            .render(pose, &DisplayOptions { calibration: Some(&calib), misalignment: Some(&mis), ..base })
            .unwrap()
            .composite;
        let margin = dw.min(dh) / 10;
        uncal_worst = uncal_worst.min(psnr(&reference, &uncal, margin));
        cal_worst = cal_worst.min(psnr(&reference, &cal, margin));
    }
    ok &= cal_worst > 35.0 && cal_worst > uncal_worst + 10.0;
    notes.push(format!("composite PSNR {uncal_worst:.1} dB uncalibrated, {cal_worst:.1} dB calibrated"));

    ensure(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------

fn throughput() -> Outcome {
    let (w, h) = (541, 375);
    let lf = SyntheticScene::bundled(5, 5, w, h).render().unwrap();
    let depths = truth_depths(&lf);
    let cfg = BoostConfig { scale: 100.0, ..Default::default() };
    let r = cfg.reference(5, 5).unwrap();

    let mut retarget_ms = Vec::new();
    for _ in 0..5 {
        let start = Instant::now();
        let out = retarget_view(lf.grid.view(0, 0), &depths[0], lf.grid.coord(0, 0), (r.ang_x, r.ang_y), &cfg).unwrap();
        retarget_ms.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }

    let layout = layout_from_depth(&depths[r.j * 5 + r.i], 3, Quantizer::Otsu).unwrap();
    let scene = DisplayScene::new(5, 5, lf.grid.views().to_vec(), depths, layout).unwrap();
    let service = ViewService::new(scene, BlendMode::AllPanel, None).unwrap();
    let mut render_ms = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..11 {
        let req = ViewRequest::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), FrameMode::Composite);
        let start = Instant::now();
        let png = service.render_png(&req).unwrap();
        render_ms.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(png);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (rt, rv) = (median(&mut retarget_ms), median(&mut render_ms));
    ensure(
        rv <= 50.0 && rt <= 250.0,
        format!("render-view {rv:.1} ms per pose at {w}x{h} (PNG included), retarget {rt:.1} ms per view (medians)"),
    )
}

// ---------------------------------------------------------------------------

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let lf = SyntheticScene::bundled(5, 5, 96, 72).with_noise(0.01, 4).render().unwrap();
    let input = tmp.path().join("input");
    save_light_field(&lf.grid, &input).unwrap();
    let cfg = PipelineConfig::default();
    let mut trees = Vec::new();
    for (k, threads) in [1, 8, 8].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(&cfg, &input, &out)).map_err(|e| e.to_string())?;
        trees.push(tree(&out));
    }
    let files = trees[0].len();
    ensure(
        trees[0] == trees[1] && trees[1] == trees[2],
        format!("{files} output files byte-identical at 1, 8 and 8 threads"),
    )
}
