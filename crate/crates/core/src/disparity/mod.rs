//! Multi-view disparity: integer estimation on reference views with four
//! cross-hair partners, sub-pixel refinement, and forward propagation to the
//! remaining views.
//!
//! Disparity is measured in pixels of shift per grid step between adjacent
//! views. A scene point at `(x, y)` with disparity `d` in view `(i, j)`
//! appears at `(x - di * d, y - dj * d)` in view `(i + di, j + dj)`.

pub mod cost;
pub mod features;
pub mod propagate;
pub mod refs;
pub mod subpixel;
pub mod support;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fill::fill_nearest;
use crate::model::{AngularCoord, DisparityMap, LightFieldGrid, ScalarMap, ViewImage};
use cost::{aggregated_pair_cost, submin, CostCurve, CostWeights};
use features::{compute_features, MAX_CENSUS_WINDOW};
use propagate::{propagate_disparity, PropagationSource};
use refs::{crosshair_pairs_relaxed, select_reference_views, select_reference_views_by_count, CrosshairPair};
use support::{build_support_regions, SupportRegion, SupportThresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct DisparityConfig {
    pub max_d: u32,
    /// Sub-pixel search radius in upscaled pixels.
    pub mu: u32,
    pub ref_spacing: usize,
    /// When set, overrides `ref_spacing` with a symmetric layout of this many views.
    pub ref_count: Option<usize>,
    pub cross_offset: usize,
    pub support_thresholds: SupportThresholds,
    pub max_arm: usize,
    /// Uniqueness factor: a curve passes when its variance exceeds this
    /// fraction of its squared mean.
    pub uniqueness_min_variance: f64,
    pub dense_factor: u32,
    pub census_window: usize,
    pub cost_weights: CostWeights,
    /// Colour similarity scale for propagation weights.
    pub color_sigma: f64,
}

impl Default for DisparityConfig {
    fn default() -> Self {
        Self {
            max_d: 8,
            mu: 2,
            ref_spacing: 4,
            ref_count: None,
            cross_offset: 2,
            support_thresholds: SupportThresholds::default(),
            max_arm: 12,
            uniqueness_min_variance: 1e-4,
            dense_factor: 10,
            census_window: 7,
            cost_weights: CostWeights::default(),
            color_sigma: 0.1,
        }
    }
}

impl DisparityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.max_d < 1 {
            return bad("maxD must be at least 1".into());
        }
        if self.mu < 1 {
            return bad("mu must be at least 1".into());
        }
        if self.max_arm < 1 {
            return bad("maxArm must be at least 1".into());
        }
        if self.cross_offset < 1 {
            return bad("crossOffset must be at least 1".into());
        }
        // Final step is 1 / (2 * denseFactor) px at the original resolution.
        if self.dense_factor < 10 {
            return bad(format!(
                "denseFactor {} gives a step coarser than 1/20 px",
                self.dense_factor
            ));
        }
        if self.census_window.is_multiple_of(2) || !(3..=MAX_CENSUS_WINDOW).contains(&self.census_window) {
            return bad(format!(
                "censusWindow must be odd and in 3..={MAX_CENSUS_WINDOW}, got {}",
                self.census_window
            ));
        }
        if !(self.uniqueness_min_variance >= 0.0) {
            return bad("uniquenessMinVariance must be non-negative".into());
        }
        if !(self.color_sigma > 0.0) {
            return bad("colorSigma must be positive".into());
        }
        let w = self.cost_weights;
        if !(w.census >= 0.0 && w.gradient >= 0.0 && w.census + w.gradient > 0.0) {
            return bad("cost weights must be non-negative and not both zero".into());
        }
        Ok(())
    }

    pub fn reference_views(&self, vx: usize, vy: usize) -> Result<Vec<AngularCoord>> {
        match self.ref_count {
            Some(n) if n >= vx * vy => Ok(crate::model::grid_coords(vx, vy)),
            Some(n) => select_reference_views_by_count(vx, vy, n),
            None => select_reference_views(vx, vy, self.ref_spacing),
        }
    }
}

/// Disparity maps for every view of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityField {
    pub vx: usize,
    pub vy: usize,
    /// Row-major by view row, then column.
    pub maps: Vec<DisparityMap>,
    pub references: Vec<AngularCoord>,
    /// Fraction of pixels without an estimate before the final nearest fill.
    pub invalid_fraction: Vec<f64>,
}

impl DisparityField {
    pub fn map(&self, i: usize, j: usize) -> &DisparityMap {
        &self.maps[j * self.vx + i]
    }

    /// Smallest and largest valid disparity over all views.
    pub fn global_range(&self) -> Option<(f32, f32)> {
        self.maps
            .iter()
            .filter_map(|m| m.valid_range())
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    pub fn propagated_count(&self) -> usize {
        self.maps.len() - self.references.len()
    }
}

/// Integer and refined disparity of one reference view.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEstimate {
    pub coord: AngularCoord,
    pub integer: DisparityMap,
    pub subpixel: DisparityMap,
}

/// Integer disparity by SUBMIN over four aggregated pair costs, a variance
/// uniqueness test and winner-take-all.
pub fn integer_disparity(
    reference: &ViewImage,
    pairs: &[CrosshairPair; 4],
    partners: [&ViewImage; 4],
    region: &SupportRegion,
    cfg: &DisparityConfig,
) -> DisparityMap {
    let (w, h) = (reference.width(), reference.height());
    let rf = compute_features(reference, cfg.census_window);
    let pf: Vec<_> = partners.iter().map(|p| compute_features(p, cfg.census_window)).collect();
    let ds: Vec<i64> = (0..=cfg.max_d as i64).collect();
    let volume: Vec<Vec<f32>> = crate::par::map(&ds, |&d| {
        let agg: Vec<Vec<f32>> = pairs
            .iter()
            .zip(&pf)
            .map(|(pair, f)| aggregated_pair_cost(&rf, f, region, pair.steps, d, &cfg.cost_weights))
            .collect();
        (0..w * h)
            .map(|k| submin([agg[0][k], agg[1][k], agg[2][k], agg[3][k]]))
            .collect()
    });
    let candidates: Vec<f64> = ds.iter().map(|d| *d as f64).collect();
    let values: Vec<Option<f32>> = crate::par::map_range(w * h, |k| {
        let curve = CostCurve::new(candidates.clone(), volume.iter().map(|c| c[k] as f64).collect());
        if !curve.is_unique(cfg.uniqueness_min_variance) {
            return None;
        }
        curve.wta().map(|best| candidates[best] as f32)
    });
    ScalarMap::from_options(w, h, &values).expect("dimensions follow the view").into()
}

pub fn estimate_reference(grid: &LightFieldGrid, coord: AngularCoord, cfg: &DisparityConfig) -> Result<ReferenceEstimate> {
    let pairs = crosshair_pairs_relaxed(coord, grid.vx(), grid.vy(), cfg.cross_offset)?;
    let reference = grid.view(coord.i, coord.j);
    let partners = pairs.map(|p| grid.view(p.partner.i, p.partner.j));
    let region = build_support_regions(reference, &cfg.support_thresholds, cfg.max_arm);
    let integer = integer_disparity(reference, &pairs, partners, &region, cfg);
    let subpixel = subpixel::subpixel_refine(reference, &pairs, partners, &region, &integer, cfg);
    Ok(ReferenceEstimate {
        coord,
        integer,
        subpixel,
    })
}

/// Estimates reference views, propagates to every other view, then fills
/// residual holes from the nearest valid pixel of the same view.
pub fn estimate_all_views(grid: &LightFieldGrid, cfg: &DisparityConfig) -> Result<DisparityField> {
    cfg.validate()?;
    let (vx, vy) = (grid.vx(), grid.vy());
    let references = cfg.reference_views(vx, vy)?;
    log::info!(
        "estimating {} reference views, propagating {}",
        references.len(),
        vx * vy - references.len()
    );
    let estimates = crate::par::map(&references, |c| estimate_reference(grid, *c, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let sources: Vec<PropagationSource<'_>> = estimates
        .iter()
        .map(|e| PropagationSource {
            coord: e.coord,
            image: grid.view(e.coord.i, e.coord.j),
            disparity: &e.subpixel,
        })
        .collect();
    let coords = grid.coords();
    let raw: Vec<DisparityMap> = crate::par::map(&coords, |c| {
        match estimates.iter().find(|e| e.coord.i == c.i && e.coord.j == c.j) {
            Some(e) => e.subpixel.clone(),
            None => propagate_disparity(&sources, *c, grid.view(c.i, c.j), cfg.color_sigma),
        }
    });
    let npix = (grid.width() * grid.height()) as f64;
    let invalid_fraction = raw.iter().map(|m| 1.0 - m.valid_count() as f64 / npix).collect();
    let maps = crate::par::map(&raw, |m| DisparityMap::from(fill_nearest(m)));
    Ok(DisparityField {
        vx,
        vy,
        maps,
        references,
        invalid_fraction,
    })
}
