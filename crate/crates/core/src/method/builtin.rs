//! In-process baseline reconstructions.

use nalgebra::DMatrix;
use ndarray::Array3;

use crate::cube::HsiCube;
use crate::degrade::{downsample_area, ObservationPair};
use crate::error::{Error, Result};
use crate::psf::{blur, PsfKernel};
use crate::srf::SrfMatrix;

/// Bilinear interpolation by an integer factor with half-pixel alignment:
/// output index `i` samples input coordinate `(i + 0.5) / factor - 0.5`,
/// clamped to the valid range.
pub fn bilinear_upsample(cube: &HsiCube, factor: usize) -> Result<HsiCube> {
    if factor == 0 {
        return Err(Error::param("factor", "must be >= 1"));
    }
    let (h, w, bands) = cube.shape();
    let (oh, ow) = (h * factor, w * factor);
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let rows = taps(h, oh);
    let cols = taps(w, ow);
    let src = cube.data();
    let data = Array3::from_shape_fn((oh, ow, bands), |(r, c, b)| {
        let (r0, r1, tr) = rows[r];
        let (c0, c1, tc) = cols[c];
        let top = src[[r0, c0, b]] + tc * (src[[r0, c1, b]] - src[[r0, c0, b]]);
        let bottom = src[[r1, c0, b]] + tc * (src[[r1, c1, b]] - src[[r1, c0, b]]);
        top + tr * (bottom - top)
    });
    cube.with_data(data)
}

/// Upsamples the low-resolution cube to the reference grid.
pub fn builtin_upsample(pair: &ObservationPair, factor: usize) -> Result<HsiCube> {
    let out = bilinear_upsample(&pair.lr_hsi, factor)?;
    if out.shape() != pair.gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: pair.gt.shape(),
            found: out.shape(),
        });
    }
    Ok(out)
}

/// Per-pixel affine spectral regression from the multispectral image.
///
/// The multispectral image is blurred and downsampled with the observation
/// operators, each low-resolution multispectral spectrum (plus a constant 1)
/// is paired with the co-located hyperspectral spectrum, and a ridge
/// solution `W = (A^T A + lambda I)^-1 A^T B` with
/// `lambda = 1e-6 trace(A^T A) / (c + 1)` is applied to every
/// high-resolution multispectral pixel. Output is clamped to `[0, 1]`.
pub fn builtin_regression(
    pair: &ObservationPair,
    srf: &SrfMatrix,
    kernel: &PsfKernel,
    factor: usize,
) -> Result<HsiCube> {
    let c = pair.hr_msi.bands();
    let big_c = pair.lr_hsi.bands();
    if srf.msi_bands() != c || srf.hsi_bands() != big_c {
        return Err(Error::Srf(format!(
            "SRF is {}x{} but the pair has {c} multispectral and {big_c} hyperspectral bands",
            srf.msi_bands(),
            srf.hsi_bands()
        )));
    }
    let lr_msi = downsample_area(&blur(&pair.hr_msi, kernel)?, factor)?;
    if lr_msi.shape().0 != pair.lr_hsi.height() || lr_msi.shape().1 != pair.lr_hsi.width() {
        return Err(Error::ShapeMismatch {
            expected: (pair.lr_hsi.height(), pair.lr_hsi.width(), c),
            found: lr_msi.shape(),
        });
    }

    let p = c + 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut atb = DMatrix::<f64>::zeros(p, big_c);
    let mut a_row = vec![1.0; p];
    for (msi_px, hsi_px) in lr_msi
        .as_slice()
        .chunks_exact(c)
        .zip(pair.lr_hsi.as_slice().chunks_exact(big_c))
    {
        a_row[..c].copy_from_slice(msi_px);
        for i in 0..p {
            for j in 0..p {
                ata[(i, j)] += a_row[i] * a_row[j];
            }
            for (k, y) in hsi_px.iter().enumerate() {
                atb[(i, k)] += a_row[i] * y;
            }
        }
    }
    let lambda = 1e-6 * ata.trace() / p as f64;
    let mut normal = ata.clone();
    for i in 0..p {
        normal[(i, i)] += lambda;
    }
    let weights = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&atb),
        None => normal
            .lu()
            .solve(&atb)
            .ok_or_else(|| Error::Config("regression normal equations are singular".into()))?,
    };

    let (h, w, _) = pair.hr_msi.shape();
    let mut out = vec![0.0; h * w * big_c];
    for (msi_px, dst) in pair.hr_msi.as_slice().chunks_exact(c).zip(out.chunks_exact_mut(big_c)) {
        for (k, d) in dst.iter_mut().enumerate() {
            let mut v = weights[(c, k)];
            for (i, x) in msi_px.iter().enumerate() {
                v += x * weights[(i, k)];
            }
            *d = v.clamp(0.0, 1.0);
        }
    }
    HsiCube::new(
        Array3::from_shape_vec((h, w, big_c), out).expect("shape matches buffer"),
        pair.gt.wavelengths().map(<[f64]>::to_vec),
    )
}
