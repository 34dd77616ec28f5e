//! Reference-view subsampling and cross-hair partner selection.

use crate::error::{Error, Result};
use crate::model::AngularCoord;

/// Regular subsampling of the view grid: every `spacing`-th view on both
/// axes, with the lattice centred so its outermost views sit near the grid
/// corners.
pub fn select_reference_views(vx: usize, vy: usize, spacing: usize) -> Result<Vec<AngularCoord>> {
    if spacing == 0 || spacing >= vx.min(vy) {
        return Err(Error::SpacingTooLarge { spacing, vx, vy });
    }
    let cols = axis_lattice(vx, spacing);
    let rows = axis_lattice(vy, spacing);
    Ok(rows
        .iter()
        .flat_map(|&j| cols.iter().map(move |&i| AngularCoord::from_grid(i, j, vx, vy)))
        .collect())
}

fn axis_lattice(n: usize, spacing: usize) -> Vec<usize> {
    let count = (n - 1) / spacing + 1;
    let slack = (n - 1) - (count - 1) * spacing;
    let start = slack / 2;
    (0..count).map(|k| start + k * spacing).collect()
}

/// Selects `target` reference views as a disc-clipped lattice.
///
/// An `m x m` lattice is spread evenly over the grid (first and last views
/// included) and the lattice points farthest from its centre are dropped
/// until `target` remain. `m` is the smallest size for which the dropped set
/// is a union of whole distance shells, so the selection stays symmetric.
/// On a 14x14 grid this yields the 13-, 16-, 24- and 37-view layouts.
pub fn select_reference_views_by_count(vx: usize, vy: usize, target: usize) -> Result<Vec<AngularCoord>> {
    let limit = vx.min(vy);
    if target < 4 {
        return Err(Error::InvalidConfig(format!(
            "at least 4 reference views are required, got {target}"
        )));
    }
    let mut m = (target as f64).sqrt().ceil() as usize;
    while m <= limit {
        if let Some(points) = clipped_lattice(m, target) {
            let cols = spread(vx, m);
            let rows = spread(vy, m);
            return Ok(points
                .into_iter()
                .map(|(a, b)| AngularCoord::from_grid(cols[a], rows[b], vx, vy))
                .collect());
        }
        m += 1;
    }
    Err(Error::InvalidConfig(format!(
        "no symmetric lattice of {target} reference views fits a {vx}x{vy} grid"
    )))
}

/// Lattice indices `(col, row)` of an `m x m` lattice with the outer shells
/// removed, or `None` when `target` does not fall on a shell boundary.
fn clipped_lattice(m: usize, target: usize) -> Option<Vec<(usize, usize)>> {
    if m * m < target {
        return None;
    }
    // Squared distance from the lattice centre in doubled coordinates (integer).
    let dist = |a: usize, b: usize| {
        let da = 2 * a as i64 - (m as i64 - 1);
        let db = 2 * b as i64 - (m as i64 - 1);
        da * da + db * db
    };
    let mut shells: Vec<i64> = (0..m)
        .flat_map(|b| (0..m).map(move |a| dist(a, b)))
        .collect();
    shells.sort_unstable();
    let cutoff = shells[target - 1];
    if target < shells.len() && shells[target] == cutoff {
        return None;
    }
    Some(
        (0..m)
            .flat_map(|b| (0..m).map(move |a| (a, b)))
            .filter(|&(a, b)| dist(a, b) <= cutoff)
            .collect(),
    )
}

fn spread(n: usize, m: usize) -> Vec<usize> {
    if m == 1 {
        return vec![(n - 1) / 2];
    }
    (0..m)
        .map(|k| ((k * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect()
}

/// A reference view matched against one partner view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosshairPair {
    pub reference: AngularCoord,
    pub partner: AngularCoord,
    /// Signed partner offset in grid steps `(columns, rows)`.
    pub steps: (i32, i32),
    /// Signed partner offset in normalized angle.
    pub baseline: (f64, f64),
}

impl CrosshairPair {
    fn new(reference: AngularCoord, partner: AngularCoord) -> Self {
        Self {
            reference,
            partner,
            steps: (
                partner.i as i32 - reference.i as i32,
                partner.j as i32 - reference.j as i32,
            ),
            baseline: (partner.ang_x - reference.ang_x, partner.ang_y - reference.ang_y),
        }
    }
}

/// Four partners for `reference`: two on its row, two on its column, at
/// `±offset` steps.
///
/// A partner that falls off the grid folds to the opposite side at twice the
/// offset; positions are then clamped to the grid, and a partner that lands on
/// the reference or on the other partner moves to the nearest free view on
/// the same line.
pub fn select_crosshair_pairs(
    reference: AngularCoord,
    vx: usize,
    vy: usize,
    offset: usize,
) -> Result<[CrosshairPair; 4]> {
    let too_small = || Error::GridTooSmall {
        i: reference.i,
        j: reference.j,
        vx,
        vy,
    };
    if reference.i >= vx || reference.j >= vy || offset == 0 {
        return Err(too_small());
    }
    let [left, right] = axis_partners(reference.i, vx, offset).ok_or_else(too_small)?;
    let [up, down] = axis_partners(reference.j, vy, offset).ok_or_else(too_small)?;
    Ok(assemble(reference, vx, vy, [left, right], [up, down]))
}

/// Like [`select_crosshair_pairs`], but an axis with a single other view
/// reuses that view for both of its pairs. Used for two-view-wide grids.
pub(crate) fn crosshair_pairs_relaxed(
    reference: AngularCoord,
    vx: usize,
    vy: usize,
    offset: usize,
) -> Result<[CrosshairPair; 4]> {
    match select_crosshair_pairs(reference, vx, vy, offset) {
        Err(Error::GridTooSmall { .. }) => {
            let h = axis_partners(reference.i, vx, offset)
                .or_else(|| only_other(reference.i, vx))
                .ok_or(Error::GridTooSmall { i: reference.i, j: reference.j, vx, vy })?;
            let v = axis_partners(reference.j, vy, offset)
                .or_else(|| only_other(reference.j, vy))
                .ok_or(Error::GridTooSmall { i: reference.i, j: reference.j, vx, vy })?;
            Ok(assemble(reference, vx, vy, h, v))
        }
        other => other,
    }
}

fn only_other(p: usize, n: usize) -> Option<[usize; 2]> {
    (n == 2).then(|| [1 - p, 1 - p])
}

fn assemble(
    reference: AngularCoord,
    vx: usize,
    vy: usize,
    h: [usize; 2],
    v: [usize; 2],
) -> [CrosshairPair; 4] {
    let at = |i, j| AngularCoord::from_grid(i, j, vx, vy);
    [
        CrosshairPair::new(reference, at(h[0], reference.j)),
        CrosshairPair::new(reference, at(h[1], reference.j)),
        CrosshairPair::new(reference, at(reference.i, v[0])),
        CrosshairPair::new(reference, at(reference.i, v[1])),
    ]
}

fn axis_partners(p: usize, n: usize, offset: usize) -> Option<[usize; 2]> {
    let (p, n, o) = (p as i64, n as i64, offset as i64);
    let last = n - 1;
    let (mut minus, mut plus) = (p - o, p + o);
    match (minus < 0, plus > last) {
        (true, true) => {
            minus = 0;
            plus = last;
        }
        (true, false) => minus = p + 2 * o,
        (false, true) => plus = p - 2 * o,
        (false, false) => {}
    }
    let mut taken = vec![p];
    let mut out = [0usize; 2];
    for (slot, cand) in [minus, plus].into_iter().enumerate() {
        let cand = cand.clamp(0, last);
        let pick = if taken.contains(&cand) {
            (1..=n).find_map(|dist| {
                [cand - dist, cand + dist]
                    .into_iter()
                    .find(|c| (0..=last).contains(c) && !taken.contains(c))
            })?
        } else {
            cand
        };
        taken.push(pick);
        out[slot] = pick as usize;
    }
    Some(out)
}
