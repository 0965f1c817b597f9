//! The hyperspectral cube shared by every stage of the pipeline.

use ndarray::{Array3, ArrayView1};

use crate::error::{Error, Result};

/// A validated `(row, col, band)` radiance array.
///
/// Every entry is finite and, when present, the band-center wavelengths
/// (nanometers) are strictly increasing with one entry per band. The array
/// is always held in standard (row-major) layout, so the spectrum of a pixel
/// is contiguous in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    data: Array3<f64>,
    wavelengths: Option<Vec<f64>>,
}

/// Validates a raw array and optional wavelengths into an [`HsiCube`].
///
/// The diagnostic names the first violated invariant.
pub fn validate_cube(data: Array3<f64>, wavelengths: Option<Vec<f64>>) -> Result<HsiCube> {
    HsiCube::new(data, wavelengths)
}

impl HsiCube {
    pub fn new(data: Array3<f64>, wavelengths: Option<Vec<f64>>) -> Result<Self> {
        let (h, w, b) = data.dim();
        if h == 0 || w == 0 || b == 0 {
            return Err(Error::InvalidCube(format!(
                "dimensions must be positive, got {h}x{w}x{b}"
            )));
        }
        if let Some(((r, c, k), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidCube(format!(
                "non-finite entry at ({r},{c},{k})"
            )));
        }
        if let Some(wl) = &wavelengths {
            check_wavelengths(wl, b)?;
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(HsiCube { data, wavelengths })
    }

    /// Builds a cube from values in `(row, col, band)` order.
    pub fn from_vec(
        shape: (usize, usize, usize),
        values: Vec<f64>,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        let expected = shape.0 * shape.1 * shape.2;
        if values.len() != expected {
            return Err(Error::InvalidCube(format!(
                "expected {expected} values for shape {shape:?}, got {}",
                values.len()
            )));
        }
        let data = Array3::from_shape_vec(shape, values)
            .map_err(|e| Error::InvalidCube(e.to_string()))?;
        Self::new(data, wavelengths)
    }

    pub fn filled(shape: (usize, usize, usize), value: f64) -> Result<Self> {
        Self::new(Array3::from_elem(shape, value), None)
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn bands(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Values in `(row, col, band)` order.
    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("cube data is kept in standard layout")
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    pub fn pixel(&self, row: usize, col: usize) -> ArrayView1<'_, f64> {
        self.data.slice(ndarray::s![row, col, ..])
    }

    pub fn mean(&self) -> f64 {
        self.as_slice().iter().sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Replaces the wavelength metadata, validating it against the band count.
    pub fn with_wavelengths(mut self, wavelengths: Option<Vec<f64>>) -> Result<Self> {
        if let Some(wl) = &wavelengths {
            check_wavelengths(wl, self.bands())?;
        }
        self.wavelengths = wavelengths;
        Ok(self)
    }

    /// Same-shaped cube sharing this cube's wavelengths, with new data.
    pub(crate) fn with_data(&self, data: Array3<f64>) -> Result<Self> {
        Self::new(data, self.wavelengths.clone())
    }

    pub fn into_parts(self) -> (Array3<f64>, Option<Vec<f64>>) {
        (self.data, self.wavelengths)
    }

    pub(crate) fn require_same_shape(&self, other: &HsiCube) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

fn check_wavelengths(wl: &[f64], bands: usize) -> Result<()> {
    if wl.len() != bands {
        return Err(Error::InvalidCube(format!(
            "wavelength length mismatch: {} wavelengths for {bands} bands",
            wl.len()
        )));
    }
    if wl.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCube("non-finite wavelength".into()));
    }
    if wl.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidCube(
            "wavelengths not strictly increasing".into(),
        ));
    }
    Ok(())
}
