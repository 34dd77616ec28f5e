//! Procedural light fields of textured fronto-parallel layers with exact
//! ground-truth disparity.
//!
//! Each layer carries a smooth multi-octave value-noise texture defined in
//! its own continuous coordinates, so views are rendered by evaluating the
//! texture at exactly shifted positions without resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{DisparityMap, LightFieldGrid, ScalarMap, ViewImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Shape {
    Full,
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Full => true,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Layer {
    /// Pixel shift per grid step; larger is nearer.
    pub disparity: f64,
    pub shape: Shape,
    pub seed: u64,
    /// Base colour the texture modulates.
    pub tint: [f32; 3],
    /// Peak-to-peak texture amplitude.
    pub contrast: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyntheticScene {
    pub vx: usize,
    pub vy: usize,
    pub width: usize,
    pub height: usize,
    /// Listed back to front.
    pub layers: Vec<Layer>,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f32,
    pub noise_seed: u64,
}

/// A rendered scene with per-view ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticLightField {
    pub grid: LightFieldGrid,
    pub disparity: Vec<DisparityMap>,
}

const LATTICE: usize = 256;
const OCTAVES: [f64; 3] = [9.0, 4.5, 2.25];

/// Multi-octave value noise in `[0, 1]` with a smooth (C1) interpolant.
struct Noise {
    tables: Vec<Vec<f32>>,
}

impl Noise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tables = OCTAVES
            .iter()
            .map(|_| (0..LATTICE * LATTICE).map(|_| rng.gen::<f32>()).collect())
            .collect();
        Self { tables }
    }

    fn sample(&self, x: f64, y: f64) -> f32 {
        let mut total = 0.0f64;
        let mut norm = 0.0f64;
        for (k, (table, spacing)) in self.tables.iter().zip(OCTAVES).enumerate() {
            let amp = 0.6f64.powi(k as i32);
            total += amp * lattice_sample(table, x / spacing + 17.3 * k as f64, y / spacing + 5.1 * k as f64);
            norm += amp;
        }
        (total / norm) as f32
    }
}

fn lattice_sample(table: &[f32], x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let wrap = |v: f64| (v as i64).rem_euclid(LATTICE as i64) as usize;
    let (x0, y0) = (wrap(fx), wrap(fy));
    let (x1, y1) = ((x0 + 1) % LATTICE, (y0 + 1) % LATTICE);
    let at = |a: usize, b: usize| table[b * LATTICE + a] as f64;
    let top = at(x0, y0) + tx * (at(x1, y0) - at(x0, y0));
    let bottom = at(x0, y1) + tx * (at(x1, y1) - at(x0, y1));
    top + ty * (bottom - top)
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl SyntheticScene {
    /// A single textured plane filling every view.
    pub fn plane(vx: usize, vy: usize, width: usize, height: usize, disparity: f64, seed: u64) -> Self {
        Self {
            vx,
            vy,
            width,
            height,
            layers: vec![Layer {
                disparity,
                shape: Shape::Full,
                seed,
                tint: [0.5, 0.5, 0.5],
                contrast: 0.8,
            }],
            noise: 0.0,
            noise_seed: 0,
        }
    }

    /// A background plane at `disparities[0]` and one vertical band per
    /// further disparity, left to right.
    pub fn layered_planes(vx: usize, vy: usize, width: usize, height: usize, disparities: &[f64], seed: u64) -> Self {
        let n = disparities.len();
        let layers = disparities
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let band = width as f64 / n as f64;
                let shape = if k == 0 {
                    Shape::Full
                } else {
                    // Each band extends past the frame edge so every view sees it.
                    let x0 = k as f64 * band;
                    let x1 = if k + 1 == n { width as f64 * 4.0 } else { x0 + band };
                    Shape::Rect { x0, y0: -(height as f64) * 4.0, x1, y1: height as f64 * 5.0 }
                };
                Layer {
                    disparity: d,
                    shape,
                    seed: seed.wrapping_add(k as u64 * 7919),
                    tint: [0.5, 0.5, 0.5],
                    contrast: 0.8,
                }
            })
            .collect();
        Self {
            vx,
            vy,
            width,
            height,
            layers,
            noise: 0.0,
            noise_seed: 0,
        }
    }

    /// Demo scene: textured background, a mid-depth panel and a red
    /// foreground disc used as a tracking marker.
    pub fn bundled(vx: usize, vy: usize, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            vx,
            vy,
            width,
            height,
            layers: vec![
                Layer {
                    disparity: 0.5,
                    shape: Shape::Full,
                    seed: 11,
                    tint: [0.35, 0.45, 0.6],
                    contrast: 0.6,
                },
                Layer {
                    disparity: 2.0,
                    shape: Shape::Rect { x0: 0.1 * w, y0: 0.15 * h, x1: 0.55 * w, y1: 0.85 * h },
                    seed: 23,
                    tint: [0.55, 0.6, 0.35],
                    contrast: 0.6,
                },
                Layer {
                    disparity: 3.5,
                    shape: Shape::Disc { cx: 0.7 * w, cy: 0.5 * h, r: 0.12 * h.min(w) },
                    seed: 37,
                    tint: [0.92, 0.08, 0.08],
                    contrast: 0.14,
                },
            ],
            noise: 0.0,
            noise_seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f32, seed: u64) -> Self {
        self.noise = sigma;
        self.noise_seed = seed;
        self
    }

    pub fn render(&self) -> Result<SyntheticLightField> {
        let noises: Vec<[Noise; 2]> = self
            .layers
            .iter()
            .map(|l| [Noise::new(l.seed), Noise::new(l.seed ^ 0x9e37_79b9_7f4a_7c15)])
            .collect();
        let (ci, cj) = ((self.vx as f64 - 1.0) / 2.0, (self.vy as f64 - 1.0) / 2.0);
        let coords: Vec<(usize, usize)> = (0..self.vy)
            .flat_map(|j| (0..self.vx).map(move |i| (i, j)))
            .collect();
        let rendered = crate::par::map(&coords, |&(i, j)| {
            let (si, sj) = (i as f64 - ci, j as f64 - cj);
            let mut data = Vec::with_capacity(self.width * self.height * 3);
            let mut disp = Vec::with_capacity(self.width * self.height);
            let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed ^ ((j * self.vx + i) as u64).wrapping_mul(0x2545_f491));
            let normal = Normal::new(0.0f32, self.noise.max(0.0)).expect("finite sigma");
            for y in 0..self.height {
                for x in 0..self.width {
                    let (layer, tex) = self
                        .layers
                        .iter()
                        .zip(&noises)
                        .rev()
                        .find(|(l, _)| {
                            l.shape
                                .contains(x as f64 + si * l.disparity, y as f64 + sj * l.disparity)
                        })
                        .unwrap_or((&self.layers[0], &noises[0]));
                    let (u, v) = (x as f64 + si * layer.disparity, y as f64 + sj * layer.disparity);
                    let shared = tex[0].sample(u, v) - 0.5;
                    let detail = tex[1].sample(u, v) - 0.5;
                    for k in 0..3 {
                        let tint_mod = if k == 1 { detail } else { -detail };
                        let mut val = layer.tint[k] + layer.contrast * (shared + 0.25 * tint_mod);
                        if self.noise > 0.0 {
                            val += normal.sample(&mut rng);
                        }
                        data.push(val.clamp(0.0, 1.0));
                    }
                    disp.push(layer.disparity as f32);
                }
            }
            let view = ViewImage::from_data(self.width, self.height, 3, data)?;
            let truth = ScalarMap::from_parts(self.width, self.height, disp, vec![true; self.width * self.height])?;
            Ok((view, DisparityMap::from(truth)))
        });
        let (views, disparity): (Vec<_>, Vec<_>) = rendered.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(SyntheticLightField {
            grid: LightFieldGrid::new(self.vx, self.vy, views)?,
            disparity,
        })
    }
}

/// Centroid of strongly red pixels, used to track the bundled marker.
pub fn red_marker_centroid(img: &ViewImage) -> Option<(f64, f64)> {
    if img.channels() != 3 {
        return None;
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for idx in 0..img.len() {
        let p = img.pixel_at(idx);
        if img.mask()[idx] && p[0] > 0.6 && p[1] < 0.3 && p[2] < 0.3 {
            sx += (idx % img.width()) as f64;
            sy += (idx / img.width()) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}
