//! Observation generation: blur, area downsampling and noise for the
//! low-resolution hyperspectral image; spectral projection and noise for the
//! high-resolution multispectral image.

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::config::DegradationConfig;
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::psf::{self, PsfKernel};
use crate::srf::{self, SrfMatrix};

/// Stream tag for the low-resolution hyperspectral noise.
pub const LR_STREAM: &str = "lr";
/// Stream tag for the multispectral noise.
pub const MSI_STREAM: &str = "msi";

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPair {
    /// `h x w x C`
    pub lr_hsi: HsiCube,
    /// `H x W x c`
    pub hr_msi: HsiCube,
    /// `H x W x C`, cropped to a multiple of the factor.
    pub gt: HsiCube,
    pub factor: usize,
    pub realized_lr_snr_db: Option<f64>,
    pub realized_msi_snr_db: Option<f64>,
}

/// Exact block mean over non-overlapping `factor x factor` windows.
pub fn downsample_area(cube: &HsiCube, factor: usize) -> Result<HsiCube> {
    if factor == 0 {
        return Err(Error::param("factor", "must be >= 1"));
    }
    let (h, w, bands) = cube.shape();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::param(
            "factor",
            format!("{h}x{w} is not divisible by {factor}"),
        ));
    }
    if factor == 1 {
        return Ok(cube.clone());
    }
    let (oh, ow) = (h / factor, w / factor);
    let src = cube.as_slice();
    let area = (factor * factor) as f64;
    let mut out = vec![0.0; oh * ow * bands];
    for orow in 0..oh {
        for ocol in 0..ow {
            let dst = &mut out[(orow * ow + ocol) * bands..(orow * ow + ocol + 1) * bands];
            for r in orow * factor..(orow + 1) * factor {
                for c in ocol * factor..(ocol + 1) * factor {
                    let px = &src[(r * w + c) * bands..(r * w + c + 1) * bands];
                    for (d, x) in dst.iter_mut().zip(px) {
                        *d += x;
                    }
                }
            }
            for d in dst.iter_mut() {
                *d /= area;
            }
        }
    }
    cube.with_data(Array3::from_shape_vec((oh, ow, bands), out).expect("shape matches buffer"))
}

/// Drops bottom rows and right columns so both sides become multiples of
/// `factor`.
pub fn crop_to_factor(cube: &HsiCube, factor: usize) -> Result<HsiCube> {
    let (h, w, _) = cube.shape();
    if factor == 0 || factor > h || factor > w {
        return Err(Error::param(
            "factor",
            format!("factor {factor} exceeds image size {h}x{w}"),
        ));
    }
    let (ch, cw) = (h - h % factor, w - w % factor);
    if (ch, cw) == (h, w) {
        return Ok(cube.clone());
    }
    let data = cube.data().slice(ndarray::s![..ch, ..cw, ..]).to_owned();
    cube.with_data(data)
}

/// Deterministic normal stream keyed by `(seed, tag)`.
///
/// The 256-bit ChaCha key is the SHA-256 digest of a domain prefix, the
/// little-endian seed and the tag, so distinct tags give independent streams
/// and generation order elsewhere cannot perturb them.
pub fn noise_rng(seed: u64, stream_tag: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"hyperbench/awgn/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(stream_tag.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha20Rng::from_seed(key)
}

/// Adds white Gaussian noise at a global SNR.
///
/// The noise variance is `P / 10^(snr/10)` with `P` the mean squared value
/// over the whole cube. Returns the noisy cube and the realized SNR measured
/// from the noise actually drawn.
pub fn add_awgn(cube: &HsiCube, snr_db: f64, seed: u64, stream_tag: &str) -> Result<(HsiCube, f64)> {
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    let values = cube.as_slice();
    let n = values.len() as f64;
    let signal_power = values.iter().map(|v| v * v).sum::<f64>() / n;
    if signal_power <= 0.0 {
        return Err(Error::param("cube", "cannot add noise at an SNR to an all-zero cube"));
    }
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = noise_rng(seed, stream_tag);
    let mut noise_power = 0.0;
    let noisy: Vec<f64> = values
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e = sigma * z;
            noise_power += e * e;
            v + e
        })
        .collect();
    noise_power /= n;
    let realized = 10.0 * (signal_power / noise_power).log10();
    let data = Array3::from_shape_vec(cube.shape(), noisy).expect("shape matches buffer");
    Ok((cube.with_data(data)?, realized))
}

/// Generates the observation pair, building the kernel from the config.
pub fn generate_pair(gt: &HsiCube, config: &DegradationConfig, srf: &SrfMatrix) -> Result<ObservationPair> {
    let kernel = psf::make_kernel(&config.psf)?;
    generate_pair_with_kernel(gt, config, &kernel, srf)
}

/// `lr = noise(D(B(gt)))`, `msi = noise(S(gt))` on the factor-cropped cube.
pub fn generate_pair_with_kernel(
    gt: &HsiCube,
    config: &DegradationConfig,
    kernel: &PsfKernel,
    srf: &SrfMatrix,
) -> Result<ObservationPair> {
    config.validate()?;
    if srf.hsi_bands() != gt.bands() {
        return Err(Error::Srf(format!(
            "SRF has {} columns but the cube has {} bands",
            srf.hsi_bands(),
            gt.bands()
        )));
    }
    let factor = config.factor;
    let gt = crop_to_factor(gt, factor)?;

    let blurred = psf::blur(&gt, kernel)?;
    let mut lr_hsi = downsample_area(&blurred, factor)?;
    let mut realized_lr = None;
    if let Some(snr) = config.lr_snr_db.value() {
        let (noisy, realized) = add_awgn(&lr_hsi, snr, config.seed, LR_STREAM)?;
        lr_hsi = noisy;
        realized_lr = Some(realized);
    }

    let mut hr_msi = srf::apply_srf(&gt, srf)?;
    let mut realized_msi = None;
    if let Some(snr) = config.msi_snr_db.value() {
        let (noisy, realized) = add_awgn(&hr_msi, snr, config.seed, MSI_STREAM)?;
        hr_msi = noisy;
        realized_msi = Some(realized);
    }

    Ok(ObservationPair {
        lr_hsi,
        hr_msi,
        gt,
        factor,
        realized_lr_snr_db: realized_lr,
        realized_msi_snr_db: realized_msi,
    })
}
