//! Depth histogram quantizers: multi-level Otsu, 1-D K-means and equal-count.
//!
//! All three return split positions in bin units: a threshold `t` puts bins
//! `< t` in the lower class.

use serde::{Deserialize, Serialize};

use super::PanelLayout;
use crate::error::{Error, Result};
use crate::model::DepthMap;

pub const BINS: usize = 256;

/// Largest panel count searched exhaustively by Otsu.
pub const OTSU_EXHAUSTIVE_MAX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Quantizer {
    #[default]
    Otsu,
    Kmeans,
    Equal,
}

impl std::str::FromStr for Quantizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsu" => Ok(Quantizer::Otsu),
            "kmeans" => Ok(Quantizer::Kmeans),
            "equal" => Ok(Quantizer::Equal),
            _ => Err(Error::InvalidConfig(format!("unknown quantizer `{s}` (otsu, kmeans, equal)"))),
        }
    }
}

/// 256-bin histogram of valid depths with the per-bin sum of actual values.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHistogram {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
}

pub fn bin_of(z: f32) -> usize {
    ((z.clamp(0.0, 1.0) as f64 * BINS as f64).floor() as usize).min(BINS - 1)
}

impl DepthHistogram {
    pub fn from_depth(depth: &DepthMap) -> Self {
        Self::from_values(depth.valid_values())
    }

    pub fn from_values(values: impl IntoIterator<Item = f32>) -> Self {
        let mut counts = vec![0u64; BINS];
        let mut sums = vec![0.0f64; BINS];
        for z in values {
            let b = bin_of(z);
            counts[b] += 1;
            sums[b] += z as f64;
        }
        Self { counts, sums }
    }

    /// Histogram with the given counts whose samples sit at bin centres.
    pub fn from_counts(counts: &[u64]) -> Self {
        assert_eq!(counts.len(), BINS);
        let sums = counts
            .iter()
            .enumerate()
            .map(|(b, c)| *c as f64 * (b as f64 + 0.5) / BINS as f64)
            .collect();
        Self {
            counts: counts.to_vec(),
            sums,
        }
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..BINS).filter(|b| self.counts[*b] > 0).collect()
    }

    fn require(&self, n: usize) -> Result<Vec<usize>> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 panels, got {n}")));
        }
        let occ = self.occupied();
        if occ.len() < n {
            return Err(Error::TooFewDistinct {
                distinct: occ.len(),
                classes: n,
            });
        }
        Ok(occ)
    }

    /// Layout whose classes are split at `thresholds` (bin units, strictly
    /// increasing, every class non-empty).
    pub fn layout(&self, thresholds: &[usize]) -> PanelLayout {
        let mut bounds = vec![0];
        bounds.extend_from_slice(thresholds);
        bounds.push(BINS);
        let panel_depths = bounds
            .windows(2)
            .map(|r| {
                let (w, s) = (r[0]..r[1]).fold((0u64, 0.0f64), |(w, s), b| (w + self.counts[b], s + self.sums[b]));
                s / w as f64
            })
            .collect();
        PanelLayout {
            panel_depths,
            thresholds: thresholds.iter().map(|t| *t as f64 / BINS as f64).collect(),
        }
    }
}

/// Splits between occupied bins as thresholds: class boundary after occupied
/// index `g - 1` sits just above that bin.
fn gaps_to_thresholds(occ: &[usize], gaps: &[usize]) -> Vec<usize> {
    gaps.iter().map(|g| occ[g - 1] + 1).collect()
}

/// Multi-level Otsu: the thresholds maximizing between-class variance,
/// searched exhaustively. Ties keep the lexicographically first tuple. Above
/// [`OTSU_EXHAUSTIVE_MAX`] panels this falls back to K-means.
pub fn otsu(hist: &DepthHistogram, n: usize) -> Result<Vec<usize>> {
    let occ = hist.require(n)?;
    if n > OTSU_EXHAUSTIVE_MAX {
        log::info!("{n} panels exceeds the exhaustive Otsu limit, using K-means");
        return kmeans(hist, n);
    }
    // Between-class variance differs from sum(S_k^2 / W_k) by a constant, so
    // only the latter is maximized. Positions use odd integers 2b + 1 (bin
    // centres scaled by 512) to keep the moments integral.
    let m = occ.len();
    let mut w = vec![0.0f64; m + 1];
    let mut s = vec![0.0f64; m + 1];
    for (k, b) in occ.iter().enumerate() {
        let c = hist.counts[*b] as f64;
        w[k + 1] = w[k] + c;
        s[k + 1] = s[k] + c * (2 * b + 1) as f64;
    }
    let class = |a: usize, b: usize| {
        let (dw, ds) = (w[b] - w[a], s[b] - s[a]);
        ds * ds / dw
    };

    // Best completion of classes from occupied index `start` with `left`
    // classes remaining, in lexicographic order with strict improvement.
    fn search(start: usize, left: usize, m: usize, class: &dyn Fn(usize, usize) -> f64, gaps: &mut Vec<usize>, best: &mut (f64, Vec<usize>), acc: f64) {
        if left == 1 {
            let v = acc + class(start, m);
            if v > best.0 {
                best.0 = v;
                best.1.clone_from(gaps);
            }
            return;
        }
        for g in start + 1..=m - (left - 1) {
            gaps.push(g);
            search(g, left - 1, m, class, gaps, best, acc + class(start, g));
            gaps.pop();
        }
    }

    let firsts: Vec<usize> = (1..=m - (n - 1)).collect();
    let results = crate::par::map(&firsts, |&g| {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut gaps = vec![g];
        search(g, n - 1, m, &class, &mut gaps, &mut best, class(0, g));
        best
    });
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for r in results {
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(gaps_to_thresholds(&occ, &best.1))
}

/// Lloyd's algorithm on the occupied bins, weighted by count, starting from
/// centres equally spaced over the occupied depth range.
pub fn kmeans_centers(hist: &DepthHistogram, n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let occ = hist.require(n)?;
    let pts: Vec<(f64, f64)> = occ
        .iter()
        .map(|b| (hist.sums[*b] / hist.counts[*b] as f64, hist.counts[*b] as f64))
        .collect();
    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    let mut centers: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) / n as f64 * (hi - lo)).collect();
    let mut assign = vec![usize::MAX; pts.len()];
    for _ in 0..1000 {
        let next: Vec<usize> = pts
            .iter()
            .map(|(x, _)| {
                let mut best = 0;
                for k in 1..n {
                    if (x - centers[k]).abs() < (x - centers[best]).abs() {
                        best = k;
                    }
                }
                best
            })
            .collect();
        let mut sw = vec![0.0f64; n];
        let mut sx = vec![0.0f64; n];
        for ((x, c), k) in pts.iter().zip(&next) {
            sw[*k] += c;
            sx[*k] += x * c;
        }
        let mut moved = next != assign;
        assign = next;
        for k in 0..n {
            if sw[k] > 0.0 {
                centers[k] = sx[k] / sw[k];
            } else {
                // Reseed an empty cluster at the point farthest from its centre.
                let far = (0..pts.len())
                    .fold((0, -1.0f64), |acc, p| {
                        let d = (pts[p].0 - centers[assign[p]]).abs();
                        if d > acc.1 { (p, d) } else { acc }
                    })
                    .0;
                centers[k] = pts[far].0;
                moved = true;
            }
        }
        centers.sort_by(|a, b| a.total_cmp(b));
        if !moved {
            break;
        }
    }
    // Assignments are contiguous in 1-D, so class boundaries are where the
    // label changes.
    let thresholds = (1..pts.len())
        .filter(|p| assign[*p] != assign[p - 1])
        .map(|p| occ[p - 1] + 1)
        .collect();
    Ok((centers, thresholds))
}

pub fn kmeans(hist: &DepthHistogram, n: usize) -> Result<Vec<usize>> {
    let (_, t) = kmeans_centers(hist, n)?;
    if t.len() != n - 1 {
        let occ = hist.occupied();
        return Err(Error::TooFewDistinct {
            distinct: occ.len(),
            classes: n,
        });
    }
    Ok(t)
}

/// Thresholds at the `k / n` quantiles of the histogram, nudged so every
/// class keeps at least one occupied bin.
pub fn equal_count(hist: &DepthHistogram, n: usize) -> Result<Vec<usize>> {
    let occ = hist.require(n)?;
    let m = occ.len();
    let total: u64 = hist.counts.iter().sum();
    let mut cum = Vec::with_capacity(m);
    let mut acc = 0u64;
    for b in &occ {
        acc += hist.counts[*b];
        cum.push(acc);
    }
    let mut gaps = Vec::with_capacity(n - 1);
    let mut prev = 0;
    for k in 1..n {
        // First occupied index whose cumulative count reaches k/n of the total.
        let target = k as u128 * total as u128;
        let g = cum.iter().position(|c| *c as u128 * n as u128 >= target).unwrap_or(m - 1) + 1;
        let g = g.clamp(prev + 1, m - (n - k));
        gaps.push(g);
        prev = g;
    }
    Ok(gaps_to_thresholds(&occ, &gaps))
}

pub fn thresholds(hist: &DepthHistogram, n: usize, q: Quantizer) -> Result<Vec<usize>> {
    match q {
        Quantizer::Otsu => otsu(hist, n),
        Quantizer::Kmeans => kmeans(hist, n),
        Quantizer::Equal => equal_count(hist, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i128>;

    /// Between-class variance of the classes cut at `t`, or `None` if a class
    /// is empty. Exact rational arithmetic on bin indices.
    fn between_class_variance(counts: &[u64], t: &[usize]) -> Option<Q> {
        let n: i128 = counts.iter().map(|c| *c as i128).sum();
        let mu = Q::new(counts.iter().enumerate().map(|(b, c)| b as i128 * *c as i128).sum(), n);
        let mut bounds = vec![0];
        bounds.extend_from_slice(t);
        bounds.push(BINS);
        let mut v = Q::from_integer(0);
        for r in bounds.windows(2) {
            let w: i128 = counts[r[0]..r[1]].iter().map(|c| *c as i128).sum();
            if w == 0 {
                return None;
            }
            let s: i128 = (r[0]..r[1]).map(|b| b as i128 * counts[b] as i128).sum();
            let d = Q::new(s, w) - mu;
            v += Q::new(w, n) * d * d;
        }
        Some(v)
    }

    /// Every strictly increasing threshold tuple in `1..BINS`, first maximum kept.
    fn brute_force(counts: &[u64], n: usize) -> Vec<usize> {
        fn rec(counts: &[u64], t: &mut Vec<usize>, left: usize, best: &mut Option<(Q, Vec<usize>)>) {
            if left == 0 {
                if let Some(v) = between_class_variance(counts, t) {
                    if best.as_ref().map_or(true, |b| v > b.0) {
                        *best = Some((v, t.clone()));
                    }
                }
                return;
            }
            let start = t.last().map_or(1, |l| l + 1);
            for x in start..BINS {
                t.push(x);
                rec(counts, t, left - 1, best);
                t.pop();
            }
        }
        let mut best = None;
        rec(counts, &mut Vec::new(), n - 1, &mut best);
        best.unwrap().1
    }

    #[test]
    fn bimodal_otsu() {
        let h = DepthHistogram::from_values((0..200).map(|k| if k % 2 == 0 { 0.2 } else { 0.8 }));
        let t = otsu(&h, 2).unwrap();
        assert_eq!(t, brute_force(&h.counts, 2));
        let l = h.layout(&t);
        assert!(l.thresholds[0] > 0.2 && l.thresholds[0] < 0.8);
        assert!((l.panel_depths[0] - 0.2).abs() < 1e-6 && (l.panel_depths[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn uniform_otsu_three_classes() {
        let h = DepthHistogram::from_counts(&[10; BINS]);
        let t = otsu(&h, 3).unwrap();
        assert_eq!(t, brute_force(&h.counts, 3));
        let l = h.layout(&t);
        assert!((l.thresholds[0] - 1.0 / 3.0).abs() <= 1.0 / BINS as f64);
        assert!((l.thresholds[1] - 2.0 / 3.0).abs() <= 1.0 / BINS as f64);
    }

    #[test]
    fn constant_depth_is_rejected() {
        let h = DepthHistogram::from_values([0.4f32; 50]);
        for q in [Quantizer::Otsu, Quantizer::Kmeans, Quantizer::Equal] {
            assert!(matches!(thresholds(&h, 2, q), Err(Error::TooFewDistinct { distinct: 1, classes: 2 })));
        }
    }

    #[test]
    fn equal_count_on_uniform_histogram() {
        let h = DepthHistogram::from_counts(&[7; BINS]);
        let l = h.layout(&equal_count(&h, 4).unwrap());
        for (t, e) in l.thresholds.iter().zip([0.25, 0.5, 0.75]) {
            assert!((t - e).abs() <= 1.0 / BINS as f64);
        }
    }

    #[test]
    fn kmeans_finds_point_masses() {
        let h = DepthHistogram::from_values((0..100).map(|k| if k < 30 { 0.15f32 } else { 0.7 }));
        let (c, t) = kmeans_centers(&h, 2).unwrap();
        assert!((c[0] - 0.15).abs() < 1e-6 && (c[1] - 0.7).abs() < 1e-6);
        assert_eq!(kmeans_centers(&h, 2).unwrap(), (c, t));
    }

    #[test]
    fn otsu_beyond_five_panels_uses_kmeans() {
        let h = DepthHistogram::from_counts(&[3; BINS]);
        assert_eq!(otsu(&h, 6).unwrap(), kmeans(&h, 6).unwrap());
    }

    fn sparse_counts() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec((0usize..BINS, 1u64..40), 3..20).prop_map(|entries| {
            let mut c = vec![0u64; BINS];
            for (b, v) in entries {
                c[b] += v;
            }
            c
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn otsu_matches_brute_force(counts in sparse_counts(), n in 2usize..4) {
            let h = DepthHistogram::from_counts(&counts);
            prop_assume!(h.occupied().len() >= n);
            prop_assert_eq!(otsu(&h, n).unwrap(), brute_force(&counts, n));
        }

        #[test]
        fn quantizers_give_valid_layouts(counts in sparse_counts(), n in 2usize..6) {
            let h = DepthHistogram::from_counts(&counts);
            prop_assume!(h.occupied().len() >= n);
            for q in [Quantizer::Otsu, Quantizer::Kmeans, Quantizer::Equal] {
                let t = thresholds(&h, n, q).unwrap();
                prop_assert_eq!(t.len(), n - 1);
                prop_assert!(h.layout(&t).validate().is_ok());
            }
        }
    }
}
