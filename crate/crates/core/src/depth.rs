//! Disparity to normalized depth via `z = bf / (d + d0)`.

use serde::{Deserialize, Serialize};

use crate::disparity::DisparityField;
use crate::error::{Error, Result};
use crate::model::{DepthMap, DisparityMap, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DepthConversionParams {
    pub min_z: f64,
    pub max_z: f64,
    pub min_d: f64,
    pub max_d: f64,
    pub d0: f64,
    pub bf: f64,
}

/// Solves for the zero-disparity offset `d0` and the baseline-focal product
/// `bf` so that `max_d` maps to `min_z` and `min_d` maps to `max_z`.
pub fn fit_conversion(min_z: f64, max_z: f64, min_d: f64, max_d: f64) -> Result<DepthConversionParams> {
    if !(min_z > 0.0 && max_z > min_z && min_z.is_finite() && max_z.is_finite()) {
        return Err(Error::DegenerateBounds(format!(
            "need 0 < minZ < maxZ, got minZ={min_z}, maxZ={max_z}"
        )));
    }
    if !(max_d > min_d && min_d.is_finite() && max_d.is_finite()) {
        return Err(Error::DegenerateBounds(format!(
            "need minD < maxD, got minD={min_d}, maxD={max_d}"
        )));
    }
    let d0 = (min_z * max_d - max_z * min_d) / (max_z - min_z);
    let bf = max_z * (min_d + d0);
    Ok(DepthConversionParams {
        min_z,
        max_z,
        min_d,
        max_d,
        d0,
        bf,
    })
}

impl DepthConversionParams {
    pub fn depth(&self, d: f64) -> f64 {
        self.bf / (d + self.d0)
    }
}

/// Min-max normalizes the valid values of `map` to `[0, 1]`; a constant map
/// becomes all zeros.
pub fn normalize(map: &ScalarMap) -> Result<ScalarMap> {
    let (lo, hi) = map.valid_range().ok_or(Error::NoValidPixels)?;
    let span = hi as f64 - lo as f64;
    let values = map
        .values()
        .iter()
        .zip(map.mask())
        .map(|(v, m)| match (*m, span > 0.0) {
            (false, _) => 0.0,
            (true, false) => 0.0,
            (true, true) => ((*v as f64 - lo as f64) / span).clamp(0.0, 1.0) as f32,
        })
        .collect();
    ScalarMap::from_parts(map.width(), map.height(), values, map.mask().to_vec())
}

/// Converts `map` to metric-like depth with `params`, then normalizes so 0 is
/// the nearest valid pixel and 1 the farthest.
pub fn disparity_to_depth(map: &DisparityMap, params: &DepthConversionParams) -> Result<DepthMap> {
    if map.valid_count() == 0 {
        return Err(Error::NoValidPixels);
    }
    let z: Vec<f32> = map
        .values()
        .iter()
        .zip(map.mask())
        .map(|(d, m)| if *m { params.depth(*d as f64) as f32 } else { 0.0 })
        .collect();
    let raw = ScalarMap::from_parts(map.width(), map.height(), z, map.mask().to_vec())?;
    Ok(normalize(&raw)?.into())
}

/// Converts every view with one conversion fitted to the field's global
/// disparity extremes.
pub fn field_to_depth(field: &DisparityField, min_z: f64, max_z: f64) -> Result<(DepthConversionParams, Vec<DepthMap>)> {
    let (lo, hi) = field.global_range().ok_or(Error::NoValidPixels)?;
    // A field with a single disparity value has no depth range; widen it so
    // the conversion is defined and every map normalizes to zero.
    let (lo, hi) = if hi > lo { (lo as f64, hi as f64) } else { (lo as f64, lo as f64 + 1.0) };
    let params = fit_conversion(min_z, max_z, lo, hi)?;
    let maps = crate::par::map(&field.maps, |m| disparity_to_depth(m, &params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((params, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let p = fit_conversion(1.0, 10.0, 0.0, 9.0).unwrap();
        assert_eq!((p.d0, p.bf), (1.0, 10.0));
        assert_eq!(p.depth(9.0), 1.0);
        assert_eq!(p.depth(0.0), 10.0);
    }

    #[test]
    fn equal_bounds_are_rejected() {
        assert!(matches!(fit_conversion(2.0, 2.0, 0.0, 1.0), Err(Error::DegenerateBounds(_))));
        assert!(fit_conversion(1.0, 2.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn endpoints_normalize_to_zero_and_one() {
        let p = fit_conversion(1.0, 10.0, 0.5, 6.0).unwrap();
        let m: DisparityMap = ScalarMap::from_parts(2, 1, vec![6.0, 0.5], vec![true; 2]).unwrap().into();
        let z = disparity_to_depth(&m, &p).unwrap();
        assert_eq!(z.values(), &[0.0, 1.0]);
    }

    #[test]
    fn constant_map_is_all_near() {
        let p = fit_conversion(1.0, 10.0, 0.0, 4.0).unwrap();
        let m: DisparityMap = ScalarMap::filled(3, 3, 2.0).into();
        assert!(disparity_to_depth(&m, &p).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_pixels_stay_invalid() {
        let p = fit_conversion(1.0, 10.0, 0.0, 4.0).unwrap();
        let m: DisparityMap = ScalarMap::from_options(3, 1, &[Some(1.0), None, Some(3.0)]).unwrap().into();
        let z = disparity_to_depth(&m, &p).unwrap();
        assert_eq!(z.mask(), &[true, false, true]);
        let empty: DisparityMap = ScalarMap::invalid(2, 2).into();
        assert!(matches!(disparity_to_depth(&empty, &p), Err(Error::NoValidPixels)));
    }

    proptest! {
        #[test]
        fn depth_decreases_with_disparity(
            ds in proptest::collection::vec(0.0f32..8.0, 2..64),
        ) {
            let p = fit_conversion(1.0, 10.0, 0.0, 8.0).unwrap();
            let n = ds.len();
            let m: DisparityMap = ScalarMap::from_parts(n, 1, ds.clone(), vec![true; n]).unwrap().into();
            let z = disparity_to_depth(&m, &p).unwrap();
            for a in 0..n {
                for b in 0..n {
                    if ds[a] > ds[b] {
                        prop_assert!(z.values()[a] <= z.values()[b]);
                    }
                }
            }
            prop_assert!(z.values().iter().all(|v| (0.0..=1.0).contains(v)));
            // Normalizing again changes nothing.
            prop_assert_eq!(normalize(&z).unwrap(), z.0.clone());
        }
    }
}
