//! Reconstruction-quality metrics between a reference cube and an estimate.
//!
//! All statistics are global per band (no sliding windows) with population
//! normalization, accumulated in 64-bit floats in a fixed order.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::report::MetricReport;

/// Denominator stabilizer in the spectral angle.
pub const SAM_EPSILON: f64 = 1e-8;
/// Clipping margin below 1 for the arccos argument.
pub const SAM_DELTA: f64 = 1e-9;

pub const DEFAULT_MAX_VALUE: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct BandStats {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
    mse: f64,
}

/// Two-pass per-band statistics. Variances and covariance share one
/// expression so identical inputs give bitwise-identical values.
fn band_stats(x: &HsiCube, y: &HsiCube) -> Vec<BandStats> {
    let bands = x.bands();
    let n = (x.height() * x.width()) as f64;
    let xs = x.as_slice();
    let ys = y.as_slice();

    let mut sum_x = vec![0.0; bands];
    let mut sum_y = vec![0.0; bands];
    for (px, py) in xs.chunks_exact(bands).zip(ys.chunks_exact(bands)) {
        for b in 0..bands {
            sum_x[b] += px[b];
            sum_y[b] += py[b];
        }
    }
    let mean_x: Vec<f64> = sum_x.iter().map(|s| s / n).collect();
    let mean_y: Vec<f64> = sum_y.iter().map(|s| s / n).collect();

    let mut sxx = vec![0.0; bands];
    let mut syy = vec![0.0; bands];
    let mut sxy = vec![0.0; bands];
    let mut sse = vec![0.0; bands];
    for (px, py) in xs.chunks_exact(bands).zip(ys.chunks_exact(bands)) {
        for b in 0..bands {
            let dx = px[b] - mean_x[b];
            let dy = py[b] - mean_y[b];
            sxx[b] += dx * dx;
            syy[b] += dy * dy;
            sxy[b] += dx * dy;
            let e = py[b] - px[b];
            sse[b] += e * e;
        }
    }
    (0..bands)
        .map(|b| BandStats {
            mean_x: mean_x[b],
            mean_y: mean_y[b],
            var_x: sxx[b] / n,
            var_y: syy[b] / n,
            cov: sxy[b] / n,
            mse: sse[b] / n,
        })
        .collect()
}

/// Root mean squared error over every entry.
pub fn rmse(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    x.require_same_shape(xhat)?;
    let sse: f64 = x
        .as_slice()
        .iter()
        .zip(xhat.as_slice())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok((sse / x.len() as f64).sqrt())
}

fn psnr_from_rmse(rmse: f64, max_value: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (max_value / rmse).log10()
    }
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the RMSE is zero.
pub fn psnr(x: &HsiCube, xhat: &HsiCube, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0 && max_value.is_finite()) {
        return Err(Error::param("max_value", "must be positive and finite"));
    }
    Ok(psnr_from_rmse(rmse(x, xhat)?, max_value))
}

/// Band-averaged SSIM from global band statistics, with
/// `c1 = (0.01 MAX)^2` and `c2 = (0.03 MAX)^2`.
pub fn ssim_with_max(x: &HsiCube, xhat: &HsiCube, max_value: f64) -> Result<f64> {
    x.require_same_shape(xhat)?;
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let stats = band_stats(x, xhat);
    let total: f64 = stats
        .iter()
        .map(|s| {
            let num = (2.0 * s.mean_x * s.mean_y + c1) * (2.0 * s.cov + c2);
            let den = (s.mean_x * s.mean_x + s.mean_y * s.mean_y + c1) * (s.var_x + s.var_y + c2);
            (num / den).clamp(-1.0, 1.0)
        })
        .sum();
    Ok(total / stats.len() as f64)
}

pub fn ssim(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    ssim_with_max(x, xhat, DEFAULT_MAX_VALUE)
}

/// UIQI with the indices of bands whose denominator vanished.
///
/// A degenerate band scores 1 when the two bands are identical constants
/// and 0 otherwise.
pub fn uiqi_with_diagnostics(x: &HsiCube, xhat: &HsiCube) -> Result<(f64, Vec<usize>)> {
    x.require_same_shape(xhat)?;
    let stats = band_stats(x, xhat);
    let mut flagged = Vec::new();
    let mut total = 0.0;
    for (b, s) in stats.iter().enumerate() {
        let var_sum = s.var_x + s.var_y;
        let mean_sq_sum = s.mean_x * s.mean_x + s.mean_y * s.mean_y;
        // a constant band can leave a rounding-level variance behind
        let degenerate = mean_sq_sum == 0.0 || var_sum <= f64::EPSILON * f64::EPSILON * mean_sq_sum;
        let q = if degenerate {
            flagged.push(b);
            let equal = s.mse == 0.0;
            if equal {
                1.0
            } else {
                0.0
            }
        } else {
            // 4 cov mx my / ((vx + vy)(mx^2 + my^2)) as a product of two ratios
            ((2.0 * s.cov / var_sum) * (2.0 * s.mean_x * s.mean_y / mean_sq_sum)).clamp(-1.0, 1.0)
        };
        total += q;
    }
    if !flagged.is_empty() {
        log::debug!("uiqi: degenerate denominator in bands {flagged:?}");
    }
    Ok((total / stats.len() as f64, flagged))
}

pub fn uiqi(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    Ok(uiqi_with_diagnostics(x, xhat)?.0)
}

/// `100 / factor * sqrt(mean_k(RMSE_k^2 / mu_k^2))` with `mu_k` the
/// reference band mean.
pub fn ergas(x: &HsiCube, xhat: &HsiCube, factor: usize) -> Result<f64> {
    x.require_same_shape(xhat)?;
    if factor == 0 {
        return Err(Error::param("factor", "must be >= 1"));
    }
    let stats = band_stats(x, xhat);
    let mut acc = 0.0;
    for (b, s) in stats.iter().enumerate() {
        if s.mean_x == 0.0 {
            return Err(Error::ZeroMeanBand { band: b });
        }
        acc += s.mse / (s.mean_x * s.mean_x);
    }
    Ok(100.0 / factor as f64 * (acc / stats.len() as f64).sqrt())
}

/// Mean spectral angle in degrees with the clipped, stabilized arccos
/// argument `min(<x, y> / (|x| |y| + 1e-8), 1 - 1e-9)`.
pub fn sam(x: &HsiCube, xhat: &HsiCube) -> Result<f64> {
    x.require_same_shape(xhat)?;
    let bands = x.bands();
    let mut total = 0.0;
    let mut pixels = 0usize;
    for (px, py) in x.as_slice().chunks_exact(bands).zip(xhat.as_slice().chunks_exact(bands)) {
        let mut dot = 0.0;
        let mut nx = 0.0;
        let mut ny = 0.0;
        for (a, b) in px.iter().zip(py) {
            dot += a * b;
            nx += a * a;
            ny += b * b;
        }
        let cos = (dot / (nx.sqrt() * ny.sqrt() + SAM_EPSILON)).min(1.0 - SAM_DELTA);
        total += cos.max(-1.0).acos().to_degrees();
        pixels += 1;
    }
    Ok(total / pixels as f64)
}

fn tag<T>(metric: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Metric {
        metric,
        source: Box::new(e),
    })
}

/// All six metrics; a failure carries the name of the first failing metric.
pub fn evaluate_all(x: &HsiCube, xhat: &HsiCube, factor: usize, max_value: f64) -> Result<MetricReport> {
    let rmse_v = tag("rmse", rmse(x, xhat))?;
    let psnr_v = tag("psnr", psnr(x, xhat, max_value))?;
    let ssim_v = tag("ssim", ssim_with_max(x, xhat, max_value))?;
    let uiqi_v = tag("uiqi", uiqi(x, xhat))?;
    let ergas_v = tag("ergas", ergas(x, xhat, factor))?;
    let sam_v = tag("sam", sam(x, xhat))?;
    Ok(MetricReport {
        rmse: rmse_v,
        psnr_db: psnr_v,
        ssim: ssim_v,
        uiqi: uiqi_v,
        ergas: ergas_v,
        sam_deg: sam_v,
    })
}
