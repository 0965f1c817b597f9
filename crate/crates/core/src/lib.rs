//! Synthetic experimentation engine for hyperspectral super-resolution.
//!
//! The crate builds a normalized reference cube, degrades it into a
//! low-resolution hyperspectral / high-resolution multispectral observation
//! pair, hands the pair to a reconstruction method and scores the result.
//!
//! # Pipeline
//!
//! 1. [`groundtruth`]: percentile clip and rescale of a raw cube to `[0, 1]`.
//! 2. [`psf`]: ten blur kernel families and band-wise convolution.
//! 3. [`srf`]: sensor response curves resampled into a spectral projection.
//! 4. [`degrade`]: blur, area downsampling, spectral projection and seeded noise.
//! 5. [`method`]: built-in baselines and the external workdir protocol.
//! 6. [`metrics`]: RMSE, PSNR, SSIM, UIQI, ERGAS and SAM.
//! 7. [`runner`]: grid expansion, sweeps, single runs and log aggregation.
//!
//! On-disk formats (native cube files, NPY, MATLAB v5, result logs) live in
//! [`io`].

pub mod config;
pub mod cube;
pub mod degrade;
pub mod error;
pub mod groundtruth;
pub mod io;
pub mod method;
pub mod metrics;
pub mod psf;
pub mod report;
pub mod runner;
pub mod srf;
pub mod synthetic;

pub use config::{DegradationConfig, PsfFamily, PsfSpec, Snr};
pub use cube::{validate_cube, HsiCube};
pub use degrade::ObservationPair;
pub use error::{Error, Result};
pub use method::{MethodKind, MethodSpec};
pub use psf::PsfKernel;
pub use report::{ExperimentRecord, MetricReport, RunStatus};
pub use srf::{SrfCurveSet, SrfMatrix};

pub use ndarray;
