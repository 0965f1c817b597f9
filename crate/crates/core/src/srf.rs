//! Spectral response curves and the row-normalized projection matrix built
//! from them.

use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Environment variable pointing at a directory of `<sensor>.csv` files
/// that take precedence over the built-in assets.
pub const ASSETS_ENV: &str = "HYPERBENCH_ASSETS";

/// Sensors shipped with the crate.
pub const SHIPPED_SENSORS: [&str; 4] = ["ikonos-3", "ikonos-4", "worldview2-8", "worldview3-16"];

const IKONOS_3: &str = include_str!("../assets/srf/ikonos-3.csv");
const IKONOS_4: &str = include_str!("../assets/srf/ikonos-4.csv");
const WORLDVIEW2_8: &str = include_str!("../assets/srf/worldview2-8.csv");
const WORLDVIEW3_16: &str = include_str!("../assets/srf/worldview3-16.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct SrfCurve {
    pub name: String,
    /// `(wavelength_nm, response)` with strictly increasing wavelengths.
    pub samples: Vec<(f64, f64)>,
}

impl SrfCurve {
    /// Linear interpolation of the response, zero outside the sampled range.
    pub fn response_at(&self, wavelength: f64) -> f64 {
        let s = &self.samples;
        let (first, last) = (s[0].0, s[s.len() - 1].0);
        if wavelength < first || wavelength > last {
            return 0.0;
        }
        let idx = s.partition_point(|(w, _)| *w <= wavelength);
        if idx == s.len() {
            return s[s.len() - 1].1;
        }
        let (w0, r0) = s[idx - 1];
        let (w1, r1) = s[idx];
        r0 + (wavelength - w0) / (w1 - w0) * (r1 - r0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrfCurveSet {
    pub sensor: String,
    pub bands: Vec<SrfCurve>,
}

impl SrfCurveSet {
    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::Srf(format!("{}: no bands", self.sensor)));
        }
        for band in &self.bands {
            if band.samples.len() < 2 {
                return Err(Error::Srf(format!(
                    "{}: band `{}` needs at least two samples",
                    self.sensor, band.name
                )));
            }
            if band.samples.windows(2).any(|p| p[1].0 <= p[0].0) {
                return Err(Error::Srf(format!(
                    "{}: band `{}` wavelengths not strictly increasing",
                    self.sensor, band.name
                )));
            }
            if band.samples.iter().any(|(w, r)| !w.is_finite() || !r.is_finite() || *r < 0.0) {
                return Err(Error::Srf(format!(
                    "{}: band `{}` has a negative or non-finite response",
                    self.sensor, band.name
                )));
            }
            if !band.samples.iter().any(|(_, r)| *r > 0.0) {
                return Err(Error::Srf(format!(
                    "{}: band `{}` has no positive response",
                    self.sensor, band.name
                )));
            }
        }
        Ok(())
    }
}

/// Parses the curve CSV layout: header `wavelength_nm,<band1>,...`, one row
/// per wavelength sample.
pub fn parse_srf_curves(sensor: &str, reader: impl Read) -> Result<SrfCurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Srf(format!("{sensor}: line 1: {e}")))?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("wavelength_nm") {
        return Err(Error::Srf(format!(
            "{sensor}: line 1: header must be `wavelength_nm,<band>,...`"
        )));
    }
    let mut bands: Vec<SrfCurve> = headers
        .iter()
        .skip(1)
        .map(|name| SrfCurve {
            name: name.to_string(),
            samples: Vec::new(),
        })
        .collect();

    let mut prev_wl = f64::NEG_INFINITY;
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Srf(format!("{sensor}: line {line}: {e}")))?;
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Srf(format!("{sensor}: line {line}: bad number `{s}`")))
        };
        let wl = parse(&row[0])?;
        if wl <= prev_wl {
            return Err(Error::Srf(format!(
                "{sensor}: line {line}: wavelengths not strictly increasing"
            )));
        }
        prev_wl = wl;
        for (band, cell) in bands.iter_mut().zip(row.iter().skip(1)) {
            let r = parse(cell)?;
            if r < 0.0 {
                return Err(Error::Srf(format!(
                    "{sensor}: line {line}: negative response {r} for band `{}`",
                    band.name
                )));
            }
            band.samples.push((wl, r));
        }
    }
    let set = SrfCurveSet {
        sensor: sensor.to_string(),
        bands,
    };
    set.validate()?;
    Ok(set)
}

pub fn load_srf_curves(path: &Path) -> Result<SrfCurveSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let sensor = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("srf")
        .to_string();
    parse_srf_curves(&sensor, file)
}

/// Resolves a sensor identifier or curve file path.
///
/// Lookup order: an existing file path; `$HYPERBENCH_ASSETS/<id>.csv`; the
/// shipped assets.
pub fn resolve_sensor(id: &str) -> Result<SrfCurveSet> {
    let as_path = Path::new(id);
    if as_path.is_file() {
        return load_srf_curves(as_path);
    }
    if let Some(dir) = std::env::var_os(ASSETS_ENV) {
        let candidate: PathBuf = Path::new(&dir).join(format!("{id}.csv"));
        if candidate.is_file() {
            return load_srf_curves(&candidate);
        }
    }
    let text = match id {
        "ikonos-3" => IKONOS_3,
        "ikonos-4" => IKONOS_4,
        "worldview2-8" => WORLDVIEW2_8,
        "worldview3-16" => WORLDVIEW3_16,
        other => {
            return Err(Error::Srf(format!(
                "unknown sensor `{other}` (shipped: {})",
                SHIPPED_SENSORS.join(", ")
            )))
        }
    };
    parse_srf_curves(id, text.as_bytes())
}

/// A `c x C` spectral projection with unit row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfMatrix {
    weights: Array2<f64>,
    sensor: String,
    source_wavelengths: Vec<f64>,
}

impl SrfMatrix {
    /// Wraps explicit weights, enforcing nonnegativity and unit row sums.
    pub fn from_weights(
        weights: Array2<f64>,
        sensor: impl Into<String>,
        source_wavelengths: Vec<f64>,
    ) -> Result<Self> {
        let sensor = sensor.into();
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Srf(format!("{sensor}: empty matrix")));
        }
        if source_wavelengths.len() != weights.ncols() {
            return Err(Error::Srf(format!(
                "{sensor}: {} wavelengths for {} columns",
                source_wavelengths.len(),
                weights.ncols()
            )));
        }
        for (k, row) in weights.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Srf(format!("{sensor}: row {k} has a negative entry")));
            }
            if !row.iter().any(|v| *v > 0.0) {
                return Err(Error::Srf(format!("{sensor}: row {k} is all zero")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Srf(format!("{sensor}: row {k} sums to {sum}")));
            }
        }
        Ok(SrfMatrix {
            weights,
            sensor,
            source_wavelengths,
        })
    }

    pub fn identity(wavelengths: Vec<f64>) -> Result<Self> {
        let n = wavelengths.len();
        Self::from_weights(Array2::eye(n), "identity", wavelengths)
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn sensor(&self) -> &str {
        &self.sensor
    }

    pub fn source_wavelengths(&self) -> &[f64] {
        &self.source_wavelengths
    }

    pub fn msi_bands(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hsi_bands(&self) -> usize {
        self.weights.ncols()
    }
}

/// Samples every curve at the hyperspectral band centers and normalizes each
/// row to unit sum.
pub fn build_srf_matrix(curves: &SrfCurveSet, hsi_wavelengths: &[f64]) -> Result<SrfMatrix> {
    curves.validate()?;
    if hsi_wavelengths.len() < 2 {
        return Err(Error::Srf("need at least two hyperspectral band centers".into()));
    }
    if hsi_wavelengths.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Srf("hyperspectral wavelengths not strictly increasing".into()));
    }
    let c = curves.bands.len();
    let big_c = hsi_wavelengths.len();
    let mut weights = Array2::zeros((c, big_c));
    for (k, curve) in curves.bands.iter().enumerate() {
        let mut row = weights.row_mut(k);
        for (b, wl) in hsi_wavelengths.iter().enumerate() {
            row[b] = curve.response_at(*wl);
        }
        let sum: f64 = row.sum();
        if sum <= 0.0 {
            return Err(Error::Srf(format!(
                "band {k} (`{}`) has no spectral overlap with {}-{} nm",
                curve.name,
                hsi_wavelengths[0],
                hsi_wavelengths[big_c - 1]
            )));
        }
        row.mapv_inplace(|v| v / sum);
    }
    SrfMatrix::from_weights(weights, curves.sensor.clone(), hsi_wavelengths.to_vec())
}

/// Projects every pixel spectrum through the matrix: `(H, W, C) -> (H, W, c)`.
pub fn apply_srf(cube: &HsiCube, srf: &SrfMatrix) -> Result<HsiCube> {
    let (h, w, bands) = cube.shape();
    if bands != srf.hsi_bands() {
        return Err(Error::Srf(format!(
            "band-count mismatch: cube has {bands} bands, SRF expects {}",
            srf.hsi_bands()
        )));
    }
    let c = srf.msi_bands();
    let weights = srf.weights();
    let src = cube.as_slice();
    let mut out = vec![0.0; h * w * c];
    out.par_chunks_mut(c)
        .zip(src.par_chunks(bands))
        .for_each(|(dst, spectrum)| {
            for (k, d) in dst.iter_mut().enumerate() {
                let row = weights.row(k);
                let mut acc = 0.0;
                for (wv, x) in row.iter().zip(spectrum) {
                    acc += wv * x;
                }
                *d = acc;
            }
        });
    let data = Array3::from_shape_vec((h, w, c), out).expect("shape matches buffer");
    HsiCube::new(data, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(name: &str, samples: &[(f64, f64)]) -> SrfCurveSet {
        SrfCurveSet {
            sensor: "test".into(),
            bands: vec![SrfCurve {
                name: name.into(),
                samples: samples.to_vec(),
            }],
        }
    }

    #[test]
    fn parses_three_band_file() {
        let text = "wavelength_nm,b1,b2,b3\n400,0,0.5,1\n500,1,0.5,0\n600,0,0,0.2\n";
        let set = parse_srf_curves("s", text.as_bytes()).unwrap();
        assert_eq!(set.bands.len(), 3);
        assert_eq!(set.bands[1].name, "b2");
        assert_eq!(set.bands[2].samples, vec![(400.0, 1.0), (500.0, 0.0), (600.0, 0.2)]);
    }

    #[test]
    fn negative_response_names_row() {
        let text = "wavelength_nm,b1\n400,0.2\n500,-0.1\n";
        let err = parse_srf_curves("s", text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("negative"), "{err}");
    }

    #[test]
    fn non_monotone_wavelengths_rejected() {
        let text = "wavelength_nm,b1\n500,0.2\n400,0.1\n";
        let err = parse_srf_curves("s", text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("strictly increasing"), "{err}");
    }

    #[test]
    fn garbage_cell_reports_line() {
        let text = "wavelength_nm,b1\n400,0.2\n500,abc\n";
        let err = parse_srf_curves("s", text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_srf_curves("s", "nm,b1\n400,1\n500,1\n".as_bytes()).is_err());
    }

    #[test]
    fn shipped_sensors_have_expected_band_counts() {
        for (id, n) in [("ikonos-3", 3), ("ikonos-4", 4), ("worldview2-8", 8), ("worldview3-16", 16)] {
            let set = resolve_sensor(id).unwrap();
            assert_eq!(set.bands.len(), n, "{id}");
        }
        assert!(resolve_sensor("landsat-9").is_err());
    }

    #[test]
    fn ikonos4_spans_visible_and_nir() {
        let set = resolve_sensor("ikonos-4").unwrap();
        let peak = |c: &SrfCurve| {
            c.samples
                .iter()
                .cloned()
                .fold((0.0, f64::MIN), |acc, s| if s.1 > acc.1 { s } else { acc })
                .0
        };
        let peaks: Vec<f64> = set.bands.iter().map(peak).collect();
        assert!(peaks[0] > 400.0 && peaks[0] < 520.0);
        assert!(peaks[3] > 750.0 && peaks[3] < 900.0);
        assert!(peaks.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn uniform_curve_gives_uniform_row() {
        let set = curve("flat", &[(400.0, 1.0), (700.0, 1.0)]);
        let m = build_srf_matrix(&set, &[450.0, 550.0, 650.0]).unwrap();
        for v in m.weights().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn disjoint_support_is_an_error() {
        let set = curve("blue", &[(400.0, 1.0), (500.0, 1.0)]);
        let err = build_srf_matrix(&set, &[600.0, 700.0]).unwrap_err().to_string();
        assert!(err.contains("no spectral overlap"), "{err}");
    }

    #[test]
    fn triangular_curve_interpolation() {
        let set = curve("tri", &[(500.0, 0.0), (550.0, 1.0), (600.0, 0.0)]);
        let m = build_srf_matrix(&set, &[500.0, 550.0, 600.0]).unwrap();
        assert_eq!(m.weights().row(0).to_vec(), vec![0.0, 1.0, 0.0]);
        // midway on the rising edge
        let m = build_srf_matrix(&set, &[525.0, 550.0]).unwrap();
        let row = m.weights().row(0).to_vec();
        assert!((row[0] - 0.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn apply_mean_row() {
        let cube = HsiCube::from_vec((1, 1, 3), vec![0.2, 0.4, 0.6], None).unwrap();
        let m = SrfMatrix::from_weights(
            Array2::from_elem((1, 3), 1.0 / 3.0),
            "mean",
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let out = apply_srf(&cube, &m).unwrap();
        assert!((out.as_slice()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn apply_matches_per_pixel_product() {
        let cube = HsiCube::new(
            Array3::from_shape_fn((4, 4, 5), |(r, c, b)| ((r * 7 + c * 3 + b * 11) % 13) as f64 / 13.0),
            None,
        )
        .unwrap();
        let m = SrfMatrix::from_weights(
            ndarray::arr2(&[[0.1, 0.2, 0.3, 0.4, 0.0], [0.0, 0.0, 0.5, 0.25, 0.25]]),
            "t",
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let out = apply_srf(&cube, &m).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                for k in 0..2 {
                    let mut want = 0.0;
                    for b in 0..5 {
                        want += m.weights()[[k, b]] * cube.data()[[r, c, b]];
                    }
                    assert!((out.data()[[r, c, k]] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn apply_rejects_band_mismatch() {
        let cube = HsiCube::filled((2, 2, 4), 0.5).unwrap();
        let m = SrfMatrix::identity(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(apply_srf(&cube, &m).is_err());
    }

    #[test]
    fn identity_recovers_cube_exactly() {
        let cube = HsiCube::new(
            Array3::from_shape_fn((3, 2, 4), |(r, c, b)| (r as f64).sin() + c as f64 * 0.1 + b as f64),
            None,
        )
        .unwrap();
        let m = SrfMatrix::identity(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(apply_srf(&cube, &m).unwrap().as_slice(), cube.as_slice());
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(SrfMatrix::from_weights(ndarray::arr2(&[[0.5, 0.6]]), "t", vec![1.0, 2.0]).is_err());
        assert!(SrfMatrix::from_weights(ndarray::arr2(&[[1.5, -0.5]]), "t", vec![1.0, 2.0]).is_err());
        assert!(SrfMatrix::from_weights(ndarray::arr2(&[[0.0, 0.0]]), "t", vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn output_stays_within_input_envelope(
            values in prop::collection::vec(0.0f64..1.0, 2 * 2 * 6),
            raw_row in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let cube = HsiCube::from_vec((2, 2, 6), values, None).unwrap();
            let sum: f64 = raw_row.iter().sum();
            let row: Vec<f64> = raw_row.iter().map(|v| v / sum).collect();
            let m = SrfMatrix::from_weights(
                Array2::from_shape_vec((1, 6), row).unwrap(), "p", (0..6).map(f64::from).collect()).unwrap();
            let out = apply_srf(&cube, &m).unwrap();
            for v in out.as_slice() {
                prop_assert!(*v >= cube.min() - 1e-12 && *v <= cube.max() + 1e-12);
            }
        }

        #[test]
        fn curve_rescaling_does_not_change_matrix(scale in 0.01f64..100.0) {
            let base = curve("tri", &[(400.0, 0.0), (520.0, 0.8), (610.0, 0.3), (700.0, 0.0)]);
            let mut scaled = base.clone();
            for s in &mut scaled.bands[0].samples {
                s.1 *= scale;
            }
            let wl = [410.0, 480.0, 550.0, 620.0, 690.0];
            let a = build_srf_matrix(&base, &wl).unwrap();
            let b = build_srf_matrix(&scaled, &wl).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
