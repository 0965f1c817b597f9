//! Point spread function kernels and spatial blur.
//!
//! Kernel entry `(i, j)` is evaluated at the offsets
//! `(di, dj) = (i - size/2, j - size/2)` (integer division) and the kernel is
//! normalized by its raw sum. Family forms, with `rho^2 = di^2 + dj^2`:
//!
//! | family          | form                                                       | parameters (defaults)                    |
//! |-----------------|------------------------------------------------------------|------------------------------------------|
//! | `gaussian`      | `exp(-rho^2 / (2 sigma^2))`                                 | `sigma` (1.7)                            |
//! | `kolmogorov`    | inverse DFT of `exp(-3.44 (f / fc)^(5/3))`, clamped at 0    | `fc` (0.35 cycles/px)                    |
//! | `airy`          | `[2 J1(pi rho / s) / (pi rho / s)]^2`                       | `s` (2.5)                                |
//! | `moffat`        | `(1 + rho^2 / alpha^2)^(-beta)`                             | `alpha` (2.0), `beta` (2.5)              |
//! | `sinc`          | `sinc(di / s) sinc(dj / s)`                                 | `s` (2.0)                                |
//! | `lorentzian_sq` | `(1 + rho^2 / gamma^2)^(-2)`                                | `gamma` (1.5)                            |
//! | `hermite`       | `(1 + 0.25 H2(di/sigma) H2(dj/sigma)) exp(-rho^2/(2 sigma^2))` | `sigma` (1.7)                         |
//! | `parabolic`     | `max(0, 1 - rho^2 / a^2)`                                   | `a` (size / 2)                           |
//! | `gabor`         | `exp(-(u^2 + gamma^2 v^2) / (2 sigma^2)) cos(2 pi u / lambda)` | `sigma` (2), `lambda` (4), `gamma` (0.5), `theta` (30 deg) |
//! | `delta`         | `[[1]]`                                                     | none                                     |
//!
//! Default size is 13, except `gaussian` (`2 ceil(3 sigma) + 1`, capped at 31)
//! and `delta` (always 1). Sign-indefinite families (`sinc`, `hermite`,
//! `gabor`) are rejected when the raw sum falls below `1e-3`.

mod bessel;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rayon::prelude::*;

pub use bessel::bessel_j1;

use crate::config::{PsfFamily, PsfSpec};
use crate::cube::HsiCube;
use crate::error::{Error, Result};

const DEFAULT_SIZE: usize = 13;
const MAX_GAUSSIAN_SIZE: usize = 31;
const HERMITE_DEPTH: f64 = 0.25;
const MIN_RAW_SUM: f64 = 1e-3;

/// A normalized, odd-sized blur kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    weights: Array2<f64>,
    family: PsfFamily,
    params: BTreeMap<String, f64>,
}

impl PsfKernel {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn family(&self) -> PsfFamily {
        self.family
    }

    /// Effective parameters, defaults included, plus `size`.
    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    /// Parameters as a compact JSON object, used in logs.
    pub fn params_json(&self) -> String {
        serde_json::to_string(&self.params).expect("finite parameter map serializes")
    }

    /// Wraps explicit weights, checking odd sides and unit sum.
    pub fn from_weights(
        weights: Array2<f64>,
        family: PsfFamily,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let (r, c) = weights.dim();
        if r % 2 == 0 || c % 2 == 0 {
            return Err(Error::param("size", format!("kernel sides must be odd, got {r}x{c}")));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("weights", "non-finite kernel entry"));
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::param("weights", format!("kernel sums to {sum}, expected 1")));
        }
        Ok(PsfKernel {
            weights,
            family,
            params,
        })
    }

    fn is_identity(&self) -> bool {
        self.weights.dim() == (1, 1) && self.weights[[0, 0]] == 1.0
    }
}

/// Parameter names and defaults for each family.
fn defaults(family: PsfFamily) -> &'static [(&'static str, f64)] {
    match family {
        PsfFamily::Gaussian => &[("sigma", 1.7)],
        PsfFamily::Kolmogorov => &[("fc", 0.35)],
        PsfFamily::Airy => &[("s", 2.5)],
        PsfFamily::Moffat => &[("alpha", 2.0), ("beta", 2.5)],
        PsfFamily::Sinc => &[("s", 2.0)],
        PsfFamily::LorentzianSq => &[("gamma", 1.5)],
        PsfFamily::Hermite => &[("sigma", 1.7)],
        // `a` defaults to size / 2 and is filled in after the size is known
        PsfFamily::Parabolic => &[],
        PsfFamily::Gabor => &[("sigma", 2.0), ("lambda", 4.0), ("gamma", 0.5), ("theta", 30.0)],
        PsfFamily::Delta => &[],
    }
}

fn allowed(family: PsfFamily) -> Vec<&'static str> {
    let mut names: Vec<_> = defaults(family).iter().map(|(n, _)| *n).collect();
    if family == PsfFamily::Parabolic {
        names.push("a");
    }
    names
}

/// Resolves the kernel size and full parameter map for a spec.
pub fn resolve(spec: &PsfSpec) -> Result<(usize, BTreeMap<String, f64>)> {
    let family = spec.family;
    let names = allowed(family);
    for (name, value) in &spec.params {
        if !names.contains(&name.as_str()) {
            return Err(Error::param(
                name.clone(),
                format!("not a parameter of the {family} PSF (expected one of {names:?})"),
            ));
        }
        if !value.is_finite() {
            return Err(Error::param(name.clone(), "must be finite"));
        }
        if name != "theta" && *value <= 0.0 {
            return Err(Error::param(name.clone(), format!("must be positive, got {value}")));
        }
    }

    let mut params: BTreeMap<String, f64> = defaults(family)
        .iter()
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    params.extend(spec.params.iter().map(|(k, v)| (k.clone(), *v)));

    let size = match family {
        PsfFamily::Delta => 1,
        PsfFamily::Gaussian => spec.size.unwrap_or_else(|| {
            let half = (3.0 * params["sigma"]).ceil() as usize;
            (2 * half + 1).min(MAX_GAUSSIAN_SIZE)
        }),
        _ => spec.size.unwrap_or(DEFAULT_SIZE),
    };
    if size == 0 || size % 2 == 0 {
        return Err(Error::param("size", format!("must be odd and >= 1, got {size}")));
    }
    if family == PsfFamily::Parabolic {
        params.entry("a".to_string()).or_insert(size as f64 / 2.0);
    }
    params.insert("size".to_string(), size as f64);
    Ok((size, params))
}

/// Builds the normalized kernel for a PSF spec.
pub fn make_kernel(spec: &PsfSpec) -> Result<PsfKernel> {
    let (size, params) = resolve(spec)?;
    let family = spec.family;
    if family == PsfFamily::Delta {
        return Ok(PsfKernel {
            weights: Array2::from_elem((1, 1), 1.0),
            family,
            params,
        });
    }
    let p = |name: &str| params[name];
    let half = (size / 2) as i64;

    let raw = match family {
        PsfFamily::Gaussian => {
            let s2 = 2.0 * p("sigma") * p("sigma");
            radial(size, |r2| (-r2 / s2).exp())
        }
        PsfFamily::Kolmogorov => kolmogorov(size, p("fc")),
        PsfFamily::Airy => {
            let s = p("s");
            radial(size, |r2| {
                if r2 == 0.0 {
                    1.0
                } else {
                    let x = PI * r2.sqrt() / s;
                    let j = 2.0 * bessel_j1(x) / x;
                    j * j
                }
            })
        }
        PsfFamily::Moffat => {
            let (a2, beta) = (p("alpha") * p("alpha"), p("beta"));
            radial(size, |r2| (1.0 + r2 / a2).powf(-beta))
        }
        PsfFamily::Sinc => {
            let s = p("s");
            let axis: Vec<f64> = (-half..=half).map(|d| sinc(d as f64 / s)).collect();
            Array2::from_shape_fn((size, size), |(i, j)| axis[i] * axis[j])
        }
        PsfFamily::LorentzianSq => {
            let g2 = p("gamma") * p("gamma");
            radial(size, |r2| {
                let l = 1.0 / (1.0 + r2 / g2);
                l * l
            })
        }
        PsfFamily::Hermite => {
            let sigma = p("sigma");
            let h2 = |t: f64| 4.0 * t * t - 2.0;
            let s2 = 2.0 * sigma * sigma;
            Array2::from_shape_fn((size, size), |(i, j)| {
                let di = i as f64 - half as f64;
                let dj = j as f64 - half as f64;
                let envelope = (-(di * di + dj * dj) / s2).exp();
                (1.0 + HERMITE_DEPTH * h2(di / sigma) * h2(dj / sigma)) * envelope
            })
        }
        PsfFamily::Parabolic => {
            let a2 = p("a") * p("a");
            radial(size, |r2| (1.0 - r2 / a2).max(0.0))
        }
        PsfFamily::Gabor => gabor(size, p("sigma"), p("lambda"), p("gamma"), p("theta")),
        PsfFamily::Delta => unreachable!(),
    };

    let sum: f64 = raw.sum();
    let sign_indefinite = matches!(
        family,
        PsfFamily::Sinc | PsfFamily::Hermite | PsfFamily::Gabor
    );
    if !sum.is_finite() || sum <= 0.0 || (sign_indefinite && sum < MIN_RAW_SUM) {
        return Err(Error::param(
            family.name(),
            format!("non-normalizable kernel (raw sum {sum:e})"),
        ));
    }
    Ok(PsfKernel {
        weights: raw.mapv(|v| v / sum),
        family,
        params,
    })
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Evaluates a function of the squared radius on the kernel grid. `r2` is
/// formed from integer offsets, so the result has exact dihedral symmetry.
fn radial(size: usize, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let half = (size / 2) as i64;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let di = i as i64 - half;
        let dj = j as i64 - half;
        f((di * di + dj * dj) as f64)
    })
}

fn gabor(size: usize, sigma: f64, lambda: f64, gamma: f64, theta_deg: f64) -> Array2<f64> {
    // with zero phase the kernel is point-symmetric, so theta is taken mod 180
    let theta = theta_deg.rem_euclid(180.0).to_radians();
    let (st, ct) = theta.sin_cos();
    let half = (size / 2) as f64;
    let s2 = 2.0 * sigma * sigma;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let di = i as f64 - half;
        let dj = j as f64 - half;
        let u = dj * ct + di * st;
        let v = -dj * st + di * ct;
        (-(u * u + gamma * gamma * v * v) / s2).exp() * (2.0 * PI * u / lambda).cos()
    })
}

/// Long-exposure atmospheric PSF from its optical transfer function.
///
/// The OTF `exp(-3.44 (f / fc)^(5/3))` is sampled on an `n x n` DFT grid
/// (`n` a power of two, at least 64 and at least 8x the kernel size); the
/// inverse transform is evaluated directly at the cropped offsets. Values are
/// computed once per `(min(|di|,|dj|), max(|di|,|dj|))` so the result is
/// exactly symmetric.
fn kolmogorov(size: usize, fc: f64) -> Array2<f64> {
    let n = (8 * size).next_power_of_two().max(64);
    let nf = n as f64;
    let freqs: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as i64;
            let k = if k >= (n as i64) / 2 { k - n as i64 } else { k };
            k as f64 / nf
        })
        .collect();
    let mut otf = vec![0.0; n * n];
    for (a, fy) in freqs.iter().enumerate() {
        for (b, fx) in freqs.iter().enumerate() {
            let f = (fx * fx + fy * fy).sqrt();
            otf[a * n + b] = (-3.44 * (f / fc).powf(5.0 / 3.0)).exp();
        }
    }
    let half = size / 2;
    let mut octant = vec![vec![0.0; half + 1]; half + 1];
    for lo in 0..=half {
        for hi in lo..=half {
            let mut acc = 0.0;
            for (a, fy) in freqs.iter().enumerate() {
                let phase_y = fy * lo as f64;
                for (b, fx) in freqs.iter().enumerate() {
                    acc += otf[a * n + b] * (2.0 * PI * (phase_y + fx * hi as f64)).cos();
                }
            }
            let v = (acc / (nf * nf)).max(0.0);
            octant[lo][hi] = v;
            octant[hi][lo] = v;
        }
    }
    let h = half as i64;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let di = (i as i64 - h).unsigned_abs() as usize;
        let dj = (j as i64 - h).unsigned_abs() as usize;
        octant[di.min(dj)][di.max(dj)]
    })
}

/// Mirror index without repeating the edge sample.
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Convolves every band of the cube with the kernel, reflect-padded.
pub fn blur(cube: &HsiCube, kernel: &PsfKernel) -> Result<HsiCube> {
    let (h, w, bands) = cube.shape();
    let (kr, kc) = kernel.weights.dim();
    if kr > h || kc > w {
        return Err(Error::param(
            "kernel",
            format!("kernel {kr}x{kc} larger than image {h}x{w}"),
        ));
    }
    if kernel.is_identity() {
        return Ok(cube.clone());
    }
    let src = cube.as_slice();
    let hr = (kr / 2) as i64;
    let hc = (kc / 2) as i64;
    let weights = &kernel.weights;

    let mut out = vec![0.0; h * w * bands];
    out.par_chunks_mut(w * bands)
        .enumerate()
        .for_each(|(r, row_out)| {
            for c in 0..w {
                let acc = &mut row_out[c * bands..(c + 1) * bands];
                for ki in 0..kr {
                    // out(r, c) = sum_k w[k] x(r - (ki - hr), c - (kj - hc))
                    let sr = reflect(r as i64 - (ki as i64 - hr), h);
                    for kj in 0..kc {
                        let wv = weights[[ki, kj]];
                        if wv == 0.0 {
                            continue;
                        }
                        let sc = reflect(c as i64 - (kj as i64 - hc), w);
                        let px = &src[(sr * w + sc) * bands..(sr * w + sc + 1) * bands];
                        for (a, x) in acc.iter_mut().zip(px) {
                            *a += wv * x;
                        }
                    }
                }
            }
        });
    let data = Array3::from_shape_vec((h, w, bands), out).expect("shape matches buffer");
    cube.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(shape: (usize, usize, usize), seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2;
        HsiCube::from_vec(shape, (0..n).map(|_| rng.gen::<f64>()).collect(), None).unwrap()
    }

    fn all_default_kernels() -> Vec<PsfKernel> {
        PsfFamily::ALL
            .iter()
            .map(|f| make_kernel(&PsfSpec::new(*f)).unwrap())
            .collect()
    }

    #[test]
    fn delta_is_identity() {
        let k = make_kernel(&PsfSpec::new(PsfFamily::Delta).with_size(7)).unwrap();
        assert_eq!(k.weights(), &Array2::from_elem((1, 1), 1.0));
    }

    #[test]
    fn defaults_sum_to_one_and_are_odd() {
        for k in all_default_kernels() {
            let s: f64 = k.weights().sum();
            assert!((s - 1.0).abs() < 1e-6, "{}: {s}", k.family());
            assert_eq!(k.size() % 2, 1);
            assert_eq!(k.params()["size"], k.size() as f64);
        }
    }

    #[test]
    fn default_sizes() {
        let g = make_kernel(&PsfSpec::new(PsfFamily::Gaussian)).unwrap();
        assert_eq!(g.size(), 13);
        let wide = make_kernel(&PsfSpec::new(PsfFamily::Gaussian).with_param("sigma", 9.0)).unwrap();
        assert_eq!(wide.size(), 31);
        let airy = make_kernel(&PsfSpec::new(PsfFamily::Airy)).unwrap();
        assert_eq!(airy.size(), 13);
    }

    #[test]
    fn parabolic_default_radius_tracks_size() {
        let k = make_kernel(&PsfSpec::new(PsfFamily::Parabolic).with_size(9)).unwrap();
        assert_eq!(k.params()["a"], 4.5);
    }

    #[test]
    fn isotropic_kernels_are_dihedral() {
        for k in all_default_kernels() {
            if !k.family().is_isotropic() {
                continue;
            }
            let w = k.weights();
            let n = k.size();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(w[[i, j]], w[[j, i]], "{} transpose", k.family());
                    assert_eq!(w[[i, j]], w[[n - 1 - i, j]], "{} flip", k.family());
                }
            }
        }
    }

    #[test]
    fn gabor_is_anisotropic_and_half_turn_periodic() {
        let a = make_kernel(&PsfSpec::new(PsfFamily::Gabor).with_param("theta", 30.0)).unwrap();
        let b = make_kernel(&PsfSpec::new(PsfFamily::Gabor).with_param("theta", 210.0)).unwrap();
        assert_eq!(a.weights(), b.weights());
        let w = a.weights();
        assert_ne!(w[[2, 5]], w[[5, 2]]);
    }

    #[test]
    fn moffat_peaks_at_center_and_decays() {
        let k = make_kernel(
            &PsfSpec::new(PsfFamily::Moffat)
                .with_size(7)
                .with_param("alpha", 2.0)
                .with_param("beta", 2.5),
        )
        .unwrap();
        let w = k.weights();
        let max = w.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(w[[3, 3]], max);
        let mut by_radius: Vec<(i64, f64)> = w
            .indexed_iter()
            .map(|((i, j), v)| {
                let (di, dj) = (i as i64 - 3, j as i64 - 3);
                (di * di + dj * dj, *v)
            })
            .collect();
        by_radius.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in by_radius.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-18);
        }
    }

    #[test]
    fn parabolic_support() {
        // corners sit at rho^2 = 8 (size 5) and 18 (size 7)
        let p5 = make_kernel(&PsfSpec::new(PsfFamily::Parabolic).with_size(5).with_param("a", 3.0))
            .unwrap();
        assert!(p5.weights()[[0, 0]] > 0.0);
        let p5_tight =
            make_kernel(&PsfSpec::new(PsfFamily::Parabolic).with_size(5).with_param("a", 2.5))
                .unwrap();
        assert_eq!(p5_tight.weights()[[0, 0]], 0.0);
        let p7 = make_kernel(&PsfSpec::new(PsfFamily::Parabolic).with_size(7).with_param("a", 3.0))
            .unwrap();
        assert_eq!(p7.weights()[[0, 0]], 0.0);
    }

    #[test]
    fn airy_has_dark_ring() {
        // first zero of the jinc^2 pattern at rho = 1.2197 s
        let k = make_kernel(&PsfSpec::new(PsfFamily::Airy).with_size(13).with_param("s", 2.5))
            .unwrap();
        let w = k.weights();
        assert!(w[[6, 6 + 3]] < w[[6, 6 + 4]], "ring beyond first zero");
    }

    #[test]
    fn kolmogorov_is_peaked_and_nonnegative() {
        let k = make_kernel(&PsfSpec::new(PsfFamily::Kolmogorov)).unwrap();
        let w = k.weights();
        assert!(w.iter().all(|v| *v >= 0.0));
        let max = w.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(w[[6, 6]], max);
        assert!(w[[6, 7]] > w[[6, 9]]);
    }

    #[test]
    fn bad_parameters_name_the_field() {
        let err = make_kernel(&PsfSpec::new(PsfFamily::Gaussian).with_param("sigma", 0.0))
            .unwrap_err()
            .to_string();
        assert!(err.contains("sigma"), "{err}");
        let err = make_kernel(&PsfSpec::new(PsfFamily::Moffat).with_param("width", 1.0))
            .unwrap_err()
            .to_string();
        assert!(err.contains("width"), "{err}");
        assert!(make_kernel(&PsfSpec::new(PsfFamily::Gaussian).with_size(4)).is_err());
    }

    #[test]
    fn gabor_non_normalizable_rejected() {
        // short carrier under a wide envelope integrates to ~0
        let spec = PsfSpec::new(PsfFamily::Gabor)
            .with_size(31)
            .with_param("sigma", 6.0)
            .with_param("lambda", 2.5)
            .with_param("gamma", 1.0);
        let err = make_kernel(&spec).unwrap_err().to_string();
        assert!(err.contains("non-normalizable"), "{err}");
    }

    #[test]
    fn blur_with_delta_is_bitwise_identity() {
        let cube = random_cube((6, 5, 3), 1);
        let k = make_kernel(&PsfSpec::new(PsfFamily::Delta)).unwrap();
        assert_eq!(blur(&cube, &k).unwrap(), cube);
    }

    #[test]
    fn blur_preserves_constants() {
        let cube = HsiCube::filled((15, 14, 2), 0.37).unwrap();
        for k in all_default_kernels() {
            let out = blur(&cube, &k).unwrap();
            for v in out.as_slice() {
                assert!((v - 0.37).abs() < 1e-6, "{}", k.family());
            }
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let mut data = Array3::zeros((5, 5, 1));
        data[[2, 2, 0]] = 1.0;
        let cube = HsiCube::new(data, None).unwrap();
        let k = make_kernel(&PsfSpec::new(PsfFamily::Gaussian).with_size(3).with_param("sigma", 1.0))
            .unwrap();
        let out = blur(&cube, &k).unwrap();
        // direct convolution oracle: out(2 + a, 2 + b) = k(1 - a, 1 - b)
        for a in -1i64..=1 {
            for b in -1i64..=1 {
                let got = out.data()[[(2 + a) as usize, (2 + b) as usize, 0]];
                let want = k.weights()[[(1 - a) as usize, (1 - b) as usize]];
                assert!((got - want).abs() < 1e-15);
            }
        }
        assert_eq!(out.data()[[0, 0, 0]], 0.0);
    }

    #[test]
    fn asymmetric_kernel_is_convolved_not_correlated() {
        let mut w = Array2::zeros((3, 3));
        w[[0, 1]] = 1.0; // offset (-1, 0)
        let k = PsfKernel::from_weights(w, PsfFamily::Gabor, BTreeMap::new()).unwrap();
        let mut data = Array3::zeros((5, 5, 1));
        data[[2, 2, 0]] = 1.0;
        let out = blur(&HsiCube::new(data, None).unwrap(), &k).unwrap();
        assert_eq!(out.data()[[1, 2, 0]], 1.0);
    }

    #[test]
    fn reflect_padding_mirrors_without_edge_repeat() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 5), 3);
    }

    #[test]
    fn kernel_larger_than_image_rejected() {
        let cube = HsiCube::filled((5, 20, 1), 1.0).unwrap();
        let k = make_kernel(&PsfSpec::new(PsfFamily::Sinc).with_size(7)).unwrap();
        assert!(blur(&cube, &k).is_err());
    }

    #[test]
    fn blur_is_linear() {
        let x = random_cube((16, 16, 3), 2);
        let y = random_cube((16, 16, 3), 3);
        let (a, b) = (0.7, -1.3);
        let combo = x.with_data(x.data() * a + y.data() * b).unwrap();
        for k in all_default_kernels() {
            let lhs = blur(&combo, &k).unwrap();
            let bx = blur(&x, &k).unwrap();
            let by = blur(&y, &k).unwrap();
            let rhs = bx.data() * a + by.data() * b;
            for (l, r) in lhs.as_slice().iter().zip(rhs.iter()) {
                assert!((l - r).abs() < 1e-6);
            }
        }
    }

    /// Total weight each input pixel contributes to the output under reflect
    /// padding; these sum to the pixel count.
    fn received_weight(h: usize, w: usize, k: &PsfKernel) -> Vec<f64> {
        let mut weight = vec![0.0; h * w];
        let kn = k.size();
        let half = (kn / 2) as i64;
        for r in 0..h {
            for c in 0..w {
                for ki in 0..kn {
                    for kj in 0..kn {
                        let sr = reflect(r as i64 - (ki as i64 - half), h);
                        let sc = reflect(c as i64 - (kj as i64 - half), w);
                        weight[sr * w + sc] += k.weights()[[ki, kj]];
                    }
                }
            }
        }
        weight
    }

    #[test]
    fn mean_shift_is_bounded_by_border_reweighting() {
        // Under reflect padding the mean changes only through pixels near
        // the border whose received weight differs from 1.
        let (h, w) = (32, 32);
        let cube = random_cube((h, w, 4), 9);
        for k in all_default_kernels() {
            let rw = received_weight(h, w, &k);
            let total: f64 = rw.iter().sum();
            assert!((total - (h * w) as f64).abs() < 1e-9);
            let out = blur(&cube, &k).unwrap();
            let spread = cube.max() - cube.min();
            let bound: f64 =
                rw.iter().map(|x| (x - 1.0).abs()).sum::<f64>() * spread / (h * w) as f64;
            let shift = (out.mean() - cube.mean()).abs();
            assert!(shift <= bound + 1e-12, "{}: {shift} > {bound}", k.family());
        }
    }
}
