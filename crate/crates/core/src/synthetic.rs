//! Seeded synthetic scenes for tests, benchmarks and demos.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Evenly spaced band centers over 400-1000 nm.
pub fn visible_nir_wavelengths(bands: usize) -> Vec<f64> {
    if bands == 1 {
        return vec![700.0];
    }
    let step = 600.0 / (bands - 1) as f64;
    (0..bands).map(|i| 400.0 + step * i as f64).collect()
}

/// A linear-mixing scene: `endmembers` smooth spectra in `[0.05, 0.95]`
/// mixed by spatially smooth abundance maps that sum to one per pixel.
///
/// Each abundance map is a sum of a few random 2-D sinusoids passed through
/// a softmax, plus a sharp rectangular patch so the scene also carries
/// edges. All values are strictly positive.
pub fn low_rank_scene(
    height: usize,
    width: usize,
    bands: usize,
    endmembers: usize,
    seed: u64,
) -> Result<HsiCube> {
    if height == 0 || width == 0 || bands == 0 {
        return Err(Error::param("shape", "dimensions must be positive"));
    }
    if endmembers == 0 {
        return Err(Error::param("endmembers", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // spectra: a random cubic-ish curve through a few control points
    let spectra: Vec<Vec<f64>> = (0..endmembers)
        .map(|_| {
            let knots: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..0.9)).collect();
            (0..bands)
                .map(|b| {
                    let t = if bands == 1 { 0.0 } else { b as f64 / (bands - 1) as f64 * 4.0 };
                    let i = (t.floor() as usize).min(3);
                    let f = t - i as f64;
                    let s = f * f * (3.0 - 2.0 * f);
                    (knots[i] + s * (knots[i + 1] - knots[i])).clamp(0.05, 0.95)
                })
                .collect()
        })
        .collect();

    struct Wave {
        fy: f64,
        fx: f64,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Vec<Wave>> = (0..endmembers)
        .map(|_| {
            (0..3)
                .map(|_| Wave {
                    fy: rng.gen_range(0.5..3.0),
                    fx: rng.gen_range(0.5..3.0),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    amp: rng.gen_range(0.5..2.0),
                })
                .collect()
        })
        .collect();
    let patch_owner = rng.gen_range(0..endmembers);
    let (pr0, pc0) = (height / 4, width / 4);
    let (pr1, pc1) = (pr0 + (height / 3).max(1), pc0 + (width / 3).max(1));

    let mut data = Array3::zeros((height, width, bands));
    let mut weights = vec![0.0; endmembers];
    for r in 0..height {
        for c in 0..width {
            let y = r as f64 / height as f64;
            let x = c as f64 / width as f64;
            for (k, wk) in waves.iter().enumerate() {
                let s: f64 = wk
                    .iter()
                    .map(|w| w.amp * (std::f64::consts::TAU * (w.fy * y + w.fx * x) + w.phase).sin())
                    .sum();
                let bonus = if k == patch_owner && (pr0..pr1).contains(&r) && (pc0..pc1).contains(&c) {
                    3.0
                } else {
                    0.0
                };
                weights[k] = (s + bonus).exp();
            }
            let total: f64 = weights.iter().sum();
            for b in 0..bands {
                data[[r, c, b]] = weights
                    .iter()
                    .zip(&spectra)
                    .map(|(a, e)| a / total * e[b])
                    .sum();
            }
        }
    }
    HsiCube::new(data, Some(visible_nir_wavelengths(bands)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = low_rank_scene(16, 12, 31, 5, 3).unwrap();
        let b = low_rank_scene(16, 12, 31, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.05 - 1e-12 && a.max() <= 0.95 + 1e-12);
        assert_ne!(a, low_rank_scene(16, 12, 31, 5, 4).unwrap());
    }

    #[test]
    fn spectra_span_at_most_endmember_rank() {
        let cube = low_rank_scene(8, 8, 31, 3, 1).unwrap();
        // project every spectrum onto the span of three sampled spectra
        let m = nalgebra::DMatrix::from_fn(64, 31, |i, b| cube.data()[[i / 8, i % 8, b]]);
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[3] / sv[0] < 1e-10, "{sv:?}");
    }

    #[test]
    fn wavelengths_cover_visible_nir() {
        let wl = visible_nir_wavelengths(31);
        assert_eq!(wl[0], 400.0);
        assert_eq!(wl[30], 1000.0);
        assert!((wl[1] - 420.0).abs() < 1e-12);
    }
}
