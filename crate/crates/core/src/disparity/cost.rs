//! Per-pair matching cost, cross-pair SUBMIN, uniqueness and winner-take-all.

use serde::{Deserialize, Serialize};

use super::features::PixelFeatures;
use super::support::{aggregate, SupportRegion};

/// Mixing weights of the two normalized cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostWeights {
    pub census: f32,
    pub gradient: f32,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            census: 0.5,
            gradient: 0.5,
        }
    }
}

/// Matching cost between pixel `a` of `reference` and pixel `b` of `partner`.
/// Both terms are normalized to `[0, 1]`.
#[inline]
pub fn pixel_cost(reference: &PixelFeatures, a: usize, partner: &PixelFeatures, b: usize, weights: &CostWeights) -> f32 {
    let hamming = (reference.census[a] ^ partner.census[b]).count_ones() as f32 / reference.census_bits as f32;
    let grad = ((reference.gx[a] - partner.gx[b]).abs() + (reference.gy[a] - partner.gy[b]).abs()) * 0.5;
    weights.census * hamming + weights.gradient * grad
}

/// Raw cost map for one pair where every reference pixel is compared with
/// the partner pixel displaced by `shift(idx)`, clamped to the partner
/// frame. `None` shifts are skipped and cost zero.
pub fn pair_cost_map(
    reference: &PixelFeatures,
    partner: &PixelFeatures,
    weights: &CostWeights,
    shift: impl Fn(usize) -> Option<(i64, i64)> + Sync,
) -> Vec<f32> {
    let (w, h) = (reference.width, reference.height);
    let mut out = vec![0.0f32; w * h];
    crate::par::for_each_chunk(&mut out, w, |start, row| {
        let y = (start / w) as i64;
        for (x, c) in row.iter_mut().enumerate() {
            let idx = start + x;
            let Some((sx, sy)) = shift(idx) else { continue };
            let px = (x as i64 + sx).clamp(0, w as i64 - 1) as usize;
            let py = (y + sy).clamp(0, h as i64 - 1) as usize;
            *c = pixel_cost(reference, idx, partner, py * w + px, weights);
        }
    });
    out
}

/// Aggregated pair cost at an integer disparity `d` for a partner `steps`
/// grid steps away.
pub fn aggregated_pair_cost(
    reference: &PixelFeatures,
    partner: &PixelFeatures,
    region: &SupportRegion,
    steps: (i32, i32),
    d: i64,
    weights: &CostWeights,
) -> Vec<f32> {
    let shift = (-(steps.0 as i64) * d, -(steps.1 as i64) * d);
    let raw = pair_cost_map(reference, partner, weights, |_| Some(shift));
    aggregate(region, &raw)
}

/// Best sum over any three of the four pair costs.
#[inline]
pub fn submin(costs: [f32; 4]) -> f32 {
    let total: f32 = costs.iter().sum();
    let max = costs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    total - max
}

/// Cost per candidate disparity for one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    pub candidates: Vec<f64>,
    pub costs: Vec<f64>,
}

impl CostCurve {
    pub fn new(candidates: Vec<f64>, costs: Vec<f64>) -> Self {
        debug_assert_eq!(candidates.len(), costs.len());
        debug_assert!(candidates.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(costs.iter().all(|c| c.is_finite() && *c >= 0.0));
        Self { candidates, costs }
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Index of the minimum cost; the first (smallest disparity) wins ties.
    pub fn wta(&self) -> Option<usize> {
        wta(&self.costs)
    }

    pub fn mean(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.costs.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / self.costs.len() as f64
    }

    /// A curve is distinctive when its variance exceeds `factor * mean^2`.
    pub fn is_unique(&self, factor: f64) -> bool {
        let var = self.variance();
        let mean = self.mean();
        var > 0.0 && var > factor * mean * mean
    }
}

pub fn wta<T: PartialOrd + Copy>(costs: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, c) in costs.iter().enumerate() {
        match best {
            Some(b) if !(*c < costs[b]) => {}
            _ => best = Some(k),
        }
    }
    best
}
