//! Percentile-clipped normalization of a raw cube into the `[0, 1]` reference.

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Percentile of `sorted` (ascending) with linear interpolation between
/// adjacent order statistics: position `p / 100 * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Global `(p_l, p_u)` percentile values of every entry in the cube.
pub fn global_percentiles(cube: &HsiCube, p_lo: f64, p_hi: f64) -> (f64, f64) {
    let mut sorted = cube.as_slice().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    (
        percentile_sorted(&sorted, p_lo),
        percentile_sorted(&sorted, p_hi),
    )
}

/// Clips the cube to its global `p_lo`/`p_hi` percentile values and rescales
/// affinely so the lower value maps to 0 and the upper to 1.
///
/// Percentiles are taken over all pixels and bands jointly.
pub fn build_ground_truth(raw: &HsiCube, p_lo: f64, p_hi: f64) -> Result<HsiCube> {
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::param(
            "clip_percentiles",
            format!("need 0 <= p_l < p_u <= 100, got ({p_lo}, {p_hi})"),
        ));
    }
    let (lo, hi) = global_percentiles(raw, p_lo, p_hi);
    if hi <= lo {
        return Err(Error::DegenerateRange { value: lo });
    }
    let span = hi - lo;
    let data = raw.data().mapv(|v| (v.clamp(lo, hi) - lo) / span);
    raw.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn line(values: &[f64]) -> HsiCube {
        HsiCube::from_vec((1, 1, values.len()), values.to_vec(), None).unwrap()
    }

    #[test]
    fn constant_cube_is_degenerate() {
        let cube = HsiCube::filled((3, 3, 2), 0.7).unwrap();
        let err = build_ground_truth(&cube, 1.0, 99.0).unwrap_err();
        assert!(err.to_string().contains("degenerate dynamic range"));
    }

    #[test]
    fn full_range_is_affine() {
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let cube = HsiCube::from_vec((10, 10, 1), values.clone(), None).unwrap();
        let gt = build_ground_truth(&cube, 0.0, 100.0).unwrap();
        for (v, g) in values.iter().zip(gt.as_slice()) {
            assert!((g - v / 99.0).abs() < 1e-15);
        }
        assert_eq!(gt.min(), 0.0);
        assert_eq!(gt.max(), 1.0);
    }

    #[test]
    fn clipped_ramp_matches_bruteforce() {
        // brute force: percentile positions 1 and 99 over 101 sorted values
        // land exactly on the values 1 and 99
        let values: Vec<f64> = (0..=100).map(f64::from).collect();
        let gt = build_ground_truth(&line(&values), 1.0, 99.0).unwrap();
        let out = gt.as_slice();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[50], 0.5);
        assert_eq!(out[99], 1.0);
        assert_eq!(out[100], 1.0);
        for v in 2..99 {
            assert!((out[v] - (v as f64 - 1.0) / 98.0).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolates_between_order_statistics() {
        let sorted = [0.0, 10.0, 20.0, 30.0];
        // position 0.5 * 3 = 1.5
        assert_eq!(percentile_sorted(&sorted, 50.0), 15.0);
        assert_eq!(percentile_sorted(&sorted, 0.0), 0.0);
        assert_eq!(percentile_sorted(&sorted, 100.0), 30.0);
    }

    #[test]
    fn rejects_bad_percentiles() {
        let cube = line(&[0.0, 1.0, 2.0]);
        assert!(build_ground_truth(&cube, 50.0, 50.0).is_err());
        assert!(build_ground_truth(&cube, -1.0, 50.0).is_err());
        assert!(build_ground_truth(&cube, 1.0, 101.0).is_err());
    }

    #[test]
    fn keeps_wavelengths() {
        let cube = HsiCube::new(
            Array3::from_shape_fn((2, 2, 3), |(r, c, b)| (r + 2 * c + 3 * b) as f64),
            Some(vec![450.0, 550.0, 650.0]),
        )
        .unwrap();
        let gt = build_ground_truth(&cube, 1.0, 99.0).unwrap();
        assert_eq!(gt.wavelengths(), cube.wavelengths());
        assert_eq!(gt.shape(), cube.shape());
    }

    fn cube_strategy() -> impl Strategy<Value = HsiCube> {
        (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(h, w, b)| {
            prop::collection::vec(-50.0f64..50.0, h * w * b)
                .prop_map(move |v| HsiCube::from_vec((h, w, b), v, None).unwrap())
        })
    }

    proptest! {
        #[test]
        fn output_in_unit_range_and_monotone(cube in cube_strategy(), lo in 0.0f64..40.0, gap in 1.0f64..60.0) {
            let hi = (lo + gap).min(100.0);
            if let Ok(gt) = build_ground_truth(&cube, lo, hi) {
                let raw = cube.as_slice();
                let out = gt.as_slice();
                for &v in out {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                for i in 0..raw.len() {
                    for j in 0..raw.len() {
                        if raw[i] <= raw[j] {
                            prop_assert!(out[i] <= out[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn full_range_reapplication_is_idempotent(cube in cube_strategy()) {
            if let Ok(gt) = build_ground_truth(&cube, 1.0, 99.0) {
                let inner = build_ground_truth(&gt, 0.0, 100.0).unwrap();
                let outer = build_ground_truth(&inner, 0.0, 100.0).unwrap();
                prop_assert_eq!(inner.as_slice(), outer.as_slice());
            }
        }
    }
}
