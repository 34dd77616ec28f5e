//! Per-panel, view-dependent scale and translation: linear fits over the
//! viewing angle and their application to panel images.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ViewImage;
use crate::synth::ViewerPose;

/// Scale about the image centre followed by a translation in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        sx: 1.0,
        sy: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// `self` applied first, then `next`.
    pub fn then(&self, next: &AffineParams) -> AffineParams {
        AffineParams {
            sx: next.sx * self.sx,
            sy: next.sy * self.sy,
            tx: next.sx * self.tx + next.tx,
            ty: next.sy * self.ty + next.ty,
        }
    }

    pub fn inverse(&self) -> AffineParams {
        AffineParams {
            sx: 1.0 / self.sx,
            sy: 1.0 / self.sy,
            tx: -self.tx / self.sx,
            ty: -self.ty / self.sy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibSample {
    pub ang_x: f64,
    pub ang_y: f64,
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Pose range over which the fit is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FovBounds {
    pub ang_x: [f64; 2],
    pub ang_y: [f64; 2],
}

impl Default for FovBounds {
    fn default() -> Self {
        Self {
            ang_x: [-0.5, 0.5],
            ang_y: [-0.5, 0.5],
        }
    }
}

impl FovBounds {
    fn corners(&self) -> [(f64, f64); 4] {
        let (x, y) = (self.ang_x, self.ang_y);
        [(x[0], y[0]), (x[1], y[0]), (x[0], y[1]), (x[1], y[1])]
    }
}

/// `a0 + a1 * ang_x + a2 * ang_y` per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub sx: [f64; 3],
    pub sy: [f64; 3],
    pub tx: [f64; 3],
    pub ty: [f64; 3],
}

fn eval(a: &[f64; 3], x: f64, y: f64) -> f64 {
    a[0] + a[1] * x + a[2] * y
}

impl Coefficients {
    pub const IDENTITY: Coefficients = Coefficients {
        sx: [1.0, 0.0, 0.0],
        sy: [1.0, 0.0, 0.0],
        tx: [0.0; 3],
        ty: [0.0; 3],
    };

    pub fn at(&self, ang_x: f64, ang_y: f64) -> AffineParams {
        AffineParams {
            sx: eval(&self.sx, ang_x, ang_y),
            sy: eval(&self.sy, ang_x, ang_y),
            tx: eval(&self.tx, ang_x, ang_y),
            ty: eval(&self.ty, ang_x, ang_y),
        }
    }
}

/// Root-mean-square fit residual per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Residuals {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFit {
    pub panel: usize,
    pub coefficients: Coefficients,
    #[serde(default)]
    pub residuals: Residuals,
    #[serde(default)]
    pub samples: Vec<CalibSample>,
}

/// Contents of `calib.json`. Each panel image is scaled about its centre, then
/// translated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PanelCalibration {
    pub reference_panel: usize,
    pub display_width: usize,
    pub display_height: usize,
    #[serde(default)]
    pub fov_bounds: FovBounds,
    #[serde(default = "linear")]
    pub degree: u32,
    pub panels: Vec<PanelFit>,
}

fn linear() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSamples {
    pub panel: usize,
    pub samples: Vec<CalibSample>,
}

/// Input of the fit: measured samples per panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationSamples {
    pub reference_panel: usize,
    pub display_width: usize,
    pub display_height: usize,
    #[serde(default)]
    pub fov_bounds: FovBounds,
    pub panels: Vec<PanelSamples>,
}

/// Least-squares plane through `(x, y, v)`. Returns `None` when the poses are
/// fewer than three or collinear.
pub fn fit_plane(pts: &[(f64, f64, f64)]) -> Option<[f64; 3]> {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return None;
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut syy, mut sxy, mut sxv, mut syv, mut sv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y, v) in pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        sxv += dx * v;
        syv += dy * v;
        sv += v;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * (sxx + syy) * (sxx + syy)) {
        return None;
    }
    // Centred normal equations decouple the constant term.
    let a1 = (syy * sxv - sxy * syv) / det;
    let a2 = (sxx * syv - sxy * sxv) / det;
    let a0 = sv / n - a1 * mx - a2 * my;
    Some([a0, a1, a2])
}

pub fn fit_calibration(input: &CalibrationSamples) -> Result<PanelCalibration> {
    let mut panels = Vec::new();
    for ps in &input.panels {
        if ps.panel == input.reference_panel {
            continue;
        }
        let err = |reason: String| Error::Calibration { panel: ps.panel, reason };
        if let Some(s) = ps.samples.iter().find(|s| !(s.sx > 0.0 && s.sy > 0.0)) {
            return Err(err(format!("non-positive scale at pose ({}, {})", s.ang_x, s.ang_y)));
        }
        let fit = |f: fn(&CalibSample) -> f64| {
            let pts: Vec<_> = ps.samples.iter().map(|s| (s.ang_x, s.ang_y, f(s))).collect();
            fit_plane(&pts).ok_or_else(|| {
                err(format!(
                    "{} sample poses do not span a plane (need at least 3 non-collinear)",
                    ps.samples.len()
                ))
            })
        };
        let coefficients = Coefficients {
            sx: fit(|s| s.sx)?,
            sy: fit(|s| s.sy)?,
            tx: fit(|s| s.tx)?,
            ty: fit(|s| s.ty)?,
        };
        let rms = |a: &[f64; 3], f: fn(&CalibSample) -> f64| {
            let ss: f64 = ps.samples.iter().map(|s| (eval(a, s.ang_x, s.ang_y) - f(s)).powi(2)).sum();
            (ss / ps.samples.len() as f64).sqrt()
        };
        let residuals = Residuals {
            sx: rms(&coefficients.sx, |s| s.sx),
            sy: rms(&coefficients.sy, |s| s.sy),
            tx: rms(&coefficients.tx, |s| s.tx),
            ty: rms(&coefficients.ty, |s| s.ty),
        };
        panels.push(PanelFit {
            panel: ps.panel,
            coefficients,
            residuals,
            samples: ps.samples.clone(),
        });
    }
    panels.sort_by_key(|p| p.panel);
    let calib = PanelCalibration {
        reference_panel: input.reference_panel,
        display_width: input.display_width,
        display_height: input.display_height,
        fov_bounds: input.fov_bounds,
        degree: 1,
        panels,
    };
    calib.validate()?;
    Ok(calib)
}

/// Calibration parameters for one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseCalibration {
    pub params: Vec<AffineParams>,
    /// The pose was outside the validity bounds and was clamped.
    pub clamped: bool,
}

impl PanelCalibration {
    /// Identity calibration for `n` panels at the given display size.
    pub fn identity(n: usize, display_width: usize, display_height: usize) -> Self {
        Self {
            reference_panel: 0,
            display_width,
            display_height,
            fov_bounds: FovBounds::default(),
            degree: 1,
            panels: (1..n)
                .map(|panel| PanelFit {
                    panel,
                    coefficients: Coefficients::IDENTITY,
                    residuals: Residuals::default(),
                    samples: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn num_panels(&self) -> usize {
        self.panels.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree != 1 {
            return Err(Error::InvalidConfig(format!(
                "calibration degree {} is not supported (only 1)",
                self.degree
            )));
        }
        if self.display_width == 0 || self.display_height == 0 {
            return Err(Error::InvalidConfig("display resolution must be non-zero".into()));
        }
        let b = &self.fov_bounds;
        if !(b.ang_x[0] < b.ang_x[1] && b.ang_y[0] < b.ang_y[1]) {
            return Err(Error::InvalidConfig("fovBounds must be increasing intervals".into()));
        }
        let n = self.num_panels();
        if self.reference_panel >= n {
            return Err(Error::InvalidConfig(format!(
                "reference panel {} outside {n} panels",
                self.reference_panel
            )));
        }
        let mut seen = vec![false; n];
        seen[self.reference_panel] = true;
        for p in &self.panels {
            if p.panel >= n || seen[p.panel] {
                return Err(Error::Calibration {
                    panel: p.panel,
                    reason: format!("duplicate or out-of-range panel index for {n} panels"),
                });
            }
            seen[p.panel] = true;
            // Linear in the pose, so positivity over the bounds is decided at the corners.
            for (x, y) in b.corners() {
                let a = p.coefficients.at(x, y);
                if !(a.sx > 0.0 && a.sy > 0.0) {
                    return Err(Error::Calibration {
                        panel: p.panel,
                        reason: format!("scale is not positive at pose ({x}, {y})"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Parameters of every panel (by index) at `pose`, clamped to the bounds.
    pub fn at(&self, pose: ViewerPose) -> PoseCalibration {
        let b = &self.fov_bounds;
        let x = pose.ang_x.clamp(b.ang_x[0], b.ang_x[1]);
        let y = pose.ang_y.clamp(b.ang_y[0], b.ang_y[1]);
        let mut params = vec![AffineParams::IDENTITY; self.num_panels()];
        for p in &self.panels {
            params[p.panel] = p.coefficients.at(x, y);
        }
        PoseCalibration {
            params,
            clamped: x != pose.ang_x || y != pose.ang_y,
        }
    }
}

/// Resamples `img` onto a `out_w x out_h` frame. Output pixel `(x, y)` reads
/// the input at `((x - c - T) / S) * r + c'` per axis, where `c` and `c'` are
/// the output and input centres and `r` the input/output size ratio.
/// Samples outside the input are holes.
pub fn apply_affine(img: &ViewImage, p: &AffineParams, out_w: usize, out_h: usize) -> Result<ViewImage> {
    if !(p.sx > 0.0 && p.sy > 0.0) {
        return Err(Error::NonPositiveScale { sx: p.sx, sy: p.sy });
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    if *p == AffineParams::IDENTITY && (w, h) == (out_w, out_h) {
        let mut data = img.data().to_vec();
        for (px, valid) in data.chunks_mut(c).zip(img.mask()) {
            if !valid {
                px.fill(0.0);
            }
        }
        return ViewImage::from_parts(w, h, c, data, img.mask().to_vec());
    }
    let (rx, ry) = (w as f64 / out_w as f64, h as f64 / out_h as f64);
    // Half-integer centres keep integer shifts exact.
    let src_x = |x: usize| (x as f64 + 0.5 - out_w as f64 / 2.0 - p.tx) / p.sx * rx + w as f64 / 2.0 - 0.5;
    let src_y = |y: usize| (y as f64 + 0.5 - out_h as f64 / 2.0 - p.ty) / p.sy * ry + h as f64 / 2.0 - 0.5;
    let taps = |s: f64, n: usize| -> Option<(usize, usize, f32)> {
        let s = if s < 0.0 && s > -1e-9 { 0.0 } else { s };
        if !(s >= 0.0 && s <= (n - 1) as f64 + 1e-9) {
            return None;
        }
        let i0 = (s.floor() as usize).min(n - 1);
        let f = (s - i0 as f64).max(0.0);
        Some((i0, (i0 + 1).min(n - 1), if i0 + 1 < n { f as f32 } else { 0.0 }))
    };
    let cols: Vec<_> = (0..out_w).map(|x| taps(src_x(x), w)).collect();
    let mut data = vec![0.0f32; out_w * out_h * c];
    let mut mask = vec![false; out_w * out_h];
    let src = img.data();
    let valid = img.mask();
    let rows: Vec<(Vec<f32>, Vec<bool>)> = crate::par::map_range(out_h, |y| {
        let mut d = vec![0.0f32; out_w * c];
        let mut m = vec![false; out_w];
        let Some((y0, y1, fy)) = taps(src_y(y), h) else { return (d, m) };
        for (x, col) in cols.iter().enumerate() {
            let Some((x0, x1, fx)) = *col else { continue };
            let corners = [
                (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
                (y0 * w + x1, fx * (1.0 - fy)),
                (y1 * w + x0, (1.0 - fx) * fy),
                (y1 * w + x1, fx * fy),
            ];
            if corners.iter().any(|(i, wt)| *wt > 0.0 && !valid[*i]) {
                continue;
            }
            m[x] = true;
            if fx == 0.0 && fy == 0.0 {
                d[x * c..(x + 1) * c].copy_from_slice(&src[corners[0].0 * c..(corners[0].0 + 1) * c]);
                continue;
            }
            for k in 0..c {
                let v: f32 = corners.iter().map(|(i, wt)| wt * src[i * c + k]).sum();
                d[x * c + k] = v.clamp(0.0, 1.0);
            }
        }
        (d, m)
    });
    for (y, (d, m)) in rows.into_iter().enumerate() {
        data[y * out_w * c..(y + 1) * out_w * c].copy_from_slice(&d);
        mask[y * out_w..(y + 1) * out_w].copy_from_slice(&m);
    }
    ViewImage::from_parts(out_w, out_h, c, data, mask)
}

/// Samples of a known linear model on a `grid x grid` lattice of poses over
/// the bounds, with Gaussian noise of `sigma` added to every parameter
/// (scaled by 0.01 for the dimensionless scale factors).
pub fn synthetic_samples(
    truth: &[(usize, Coefficients)],
    reference_panel: usize,
    display: (usize, usize),
    grid: usize,
    sigma: f64,
    seed: u64,
) -> CalibrationSamples {
    let bounds = FovBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let lerp = |r: [f64; 2], k: usize| {
        if grid < 2 {
            0.5 * (r[0] + r[1])
        } else {
            r[0] + (r[1] - r[0]) * k as f64 / (grid - 1) as f64
        }
    };
    let panels = truth
        .iter()
        .map(|(panel, c)| {
            let mut samples = Vec::new();
            for j in 0..grid {
                for i in 0..grid {
                    let (x, y) = (lerp(bounds.ang_x, i), lerp(bounds.ang_y, j));
                    let a = c.at(x, y);
                    let mut n = || if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    samples.push(CalibSample {
                        ang_x: x,
                        ang_y: y,
                        sx: a.sx + 0.01 * n(),
                        sy: a.sy + 0.01 * n(),
                        tx: a.tx + n(),
                        ty: a.ty + n(),
                    });
                }
            }
            PanelSamples { panel: *panel, samples }
        })
        .collect();
    CalibrationSamples {
        reference_panel,
        display_width: display.0,
        display_height: display.1,
        fov_bounds: bounds,
        panels,
    }
}
