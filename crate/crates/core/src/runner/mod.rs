//! Grid sweeps, single runs and log aggregation.
//!
//! A sweep expands its [`GridSpec`], prepares shared inputs once (normalized
//! ground truth per dataset and percentile pair, kernels per PSF, SRF
//! matrices per sensor and dataset), then executes the runs on a bounded
//! worker pool. Every executed run appends exactly one row to
//! `results.csv` (and its `results.jsonl` mirror) in completion order; the
//! `run_index` column restores expansion order.
//!
//! Runs whose inputs cannot be prepared (unreadable dataset, unknown sensor,
//! invalid PSF) are not logged: they are skipped and reported in
//! [`GridSummary::infrastructure_errors`].

mod aggregate;
mod grid;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::DegradationConfig;
use crate::cube::HsiCube;
use crate::degrade::generate_pair_with_kernel;
use crate::error::{Error, Result};
use crate::groundtruth::build_ground_truth;
use crate::io::{self, RecordLog};
use crate::method::{run_method, MethodSpec};
use crate::metrics::{evaluate_all, DEFAULT_MAX_VALUE};
use crate::psf::{make_kernel, PsfKernel};
use crate::report::{ExperimentRecord, RunStatus};
use crate::srf::{build_srf_matrix, resolve_sensor, SrfMatrix};

pub use aggregate::{aggregate, aggregate_table, AggregateRow, AggregateTable, MetricStats};
pub use grid::{
    canned_study_spec, derive_seed, expand_grid, grid_to_toml, load_grid, parse_grid, DatasetSpec, GridRun,
    GridSpec, Pairing, STUDY70_TOML,
};

/// File name of the results log inside a sweep's output directory.
pub const RESULTS_CSV: &str = "results.csv";

/// Per-status counts after a sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSummary {
    pub total_runs: usize,
    pub ok: usize,
    pub method_error: usize,
    pub timeout: usize,
    pub metric_error: usize,
    /// Runs not executed because their inputs could not be prepared.
    pub skipped: usize,
    pub infrastructure_errors: Vec<String>,
}

impl GridSummary {
    fn count(&mut self, status: RunStatus) {
        match status {
            RunStatus::Ok => self.ok += 1,
            RunStatus::MethodError => self.method_error += 1,
            RunStatus::Timeout => self.timeout += 1,
            RunStatus::MetricError => self.metric_error += 1,
        }
    }

    pub fn logged(&self) -> usize {
        self.ok + self.method_error + self.timeout + self.metric_error
    }
}

/// Loads a dataset cube, attaching the wavelength sidecar when given.
pub fn load_dataset(dataset: &DatasetSpec) -> Result<HsiCube> {
    let cube = io::read_cube(&dataset.path)?;
    let cube = match &dataset.wavelengths {
        Some(p) => cube.with_wavelengths(Some(io::read_wavelengths(p)?))?,
        None => cube,
    };
    if cube.wavelengths().is_none() {
        return Err(Error::Config(format!(
            "dataset `{}` has no band wavelengths; supply a wavelengths file",
            dataset.dataset_id
        )));
    }
    Ok(cube)
}

/// Builds the SRF matrix for a sensor against a cube's band centers.
pub fn srf_for(sensor: &str, gt: &HsiCube) -> Result<SrfMatrix> {
    let wl = gt
        .wavelengths()
        .ok_or_else(|| Error::Config("cube has no band wavelengths".into()))?;
    build_srf_matrix(&resolve_sensor(sensor)?, wl)
}

/// Everything a single run needs besides its config.
struct RunInputs<'a> {
    dataset_id: &'a str,
    gt: &'a HsiCube,
    kernel: &'a PsfKernel,
    srf: &'a SrfMatrix,
}

/// Executes one prepared run and returns its record. Never fails: method and
/// metric problems become non-ok records.
fn execute(
    run_index: u64,
    inputs: &RunInputs<'_>,
    method: &MethodSpec,
    config: &DegradationConfig,
    workdir: &Path,
) -> ExperimentRecord {
    let psf_params = inputs.kernel.params_json();
    let start = Instant::now();
    let failed = |status: RunStatus, start: Instant| {
        ExperimentRecord::failed(
            run_index,
            inputs.dataset_id,
            &method.method_id,
            config.clone(),
            psf_params.clone(),
            status,
            start.elapsed().as_secs_f64(),
        )
    };
    let pair = match generate_pair_with_kernel(inputs.gt, config, inputs.kernel, inputs.srf) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("run {run_index}: degradation failed: {e}");
            return failed(RunStatus::MethodError, start);
        }
    };
    let recon = match run_method(method, &pair, inputs.srf, inputs.kernel, config, workdir) {
        Ok(r) => r,
        Err(f) => {
            log::warn!("run {run_index} ({}): {f}", method.method_id);
            return failed(f.status, start);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    match evaluate_all(&pair.gt, &recon, pair.factor, DEFAULT_MAX_VALUE) {
        Ok(metrics) => {
            if workdir.exists() {
                let _ = std::fs::remove_dir_all(workdir);
            }
            ExperimentRecord::ok(
                run_index,
                inputs.dataset_id,
                &method.method_id,
                config.clone(),
                psf_params,
                metrics,
                wall,
            )
        }
        Err(e) => {
            log::warn!("run {run_index}: {e}");
            failed(RunStatus::MetricError, start)
        }
    }
}

fn workdir_for(out_dir: &Path, run_index: u64, method_id: &str) -> PathBuf {
    let safe: String = method_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    out_dir.join("work").join(format!("{run_index:06}-{safe}"))
}

type Prepared<T> = HashMap<String, std::result::Result<Arc<T>, String>>;

/// Runs a whole grid, appending to `out_dir/results.csv`.
///
/// # Errors
/// Only for an invalid spec, an unusable output directory or a log write
/// failure. Per-run problems are recorded, not returned.
pub fn run_grid(spec: &GridSpec, out_dir: &Path, workers: usize) -> Result<GridSummary> {
    if workers == 0 {
        return Err(Error::param("workers", "must be >= 1"));
    }
    let runs = expand_grid(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log = Mutex::new(RecordLog::open(&out_dir.join(RESULTS_CSV))?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    pool.install(|| {
        let mut summary = GridSummary {
            total_runs: runs.len(),
            ..GridSummary::default()
        };

        // raw cubes per dataset
        let raw: Prepared<HsiCube> = spec
            .datasets
            .par_iter()
            .map(|d| {
                let r = load_dataset(d).map(Arc::new).map_err(|e| format!("dataset `{}`: {e}", d.dataset_id));
                (d.dataset_id.clone(), r)
            })
            .collect();
        // ground truth per (dataset, percentile pair)
        let gt_key = |id: &str, c: &DegradationConfig| {
            format!("{id}|{:?}|{:?}", c.clip_percentiles.0, c.clip_percentiles.1)
        };
        let mut gts: Prepared<HsiCube> = HashMap::new();
        let mut kernels: Prepared<PsfKernel> = HashMap::new();
        let mut srfs: Prepared<SrfMatrix> = HashMap::new();
        for run in &runs {
            let gk = gt_key(&run.dataset_id, &run.config);
            let gt = gts
                .entry(gk)
                .or_insert_with(|| {
                    let raw = raw[&run.dataset_id].clone()?;
                    let (lo, hi) = run.config.clip_percentiles;
                    build_ground_truth(&raw, lo, hi)
                        .map(Arc::new)
                        .map_err(|e| format!("dataset `{}`: {e}", run.dataset_id))
                })
                .clone();
            kernels.entry(run.config.psf.canonical()).or_insert_with(|| {
                make_kernel(&run.config.psf)
                    .map(Arc::new)
                    .map_err(|e| format!("psf {}: {e}", run.config.psf.canonical()))
            });
            if let Ok(gt) = gt {
                srfs.entry(format!("{}|{}", run.config.srf, run.dataset_id))
                    .or_insert_with(|| {
                        srf_for(&run.config.srf, &gt)
                            .map(Arc::new)
                            .map_err(|e| format!("srf `{}` on dataset `{}`: {e}", run.config.srf, run.dataset_id))
                    });
            }
        }

        let mut jobs = Vec::with_capacity(runs.len());
        let mut reported = std::collections::BTreeSet::new();
        for run in &runs {
            let gt = &gts[&gt_key(&run.dataset_id, &run.config)];
            let kernel = &kernels[&run.config.psf.canonical()];
            let srf = srfs.get(&format!("{}|{}", run.config.srf, run.dataset_id));
            let prepared = (|| {
                let gt = gt.clone()?;
                let kernel = kernel.clone()?;
                let srf = srf.cloned().unwrap_or_else(|| Err("ground truth unavailable".into()))?;
                Ok::<_, String>((gt, kernel, srf))
            })();
            match prepared {
                Ok(p) => jobs.push((run, p)),
                Err(msg) => {
                    summary.skipped += 1;
                    if reported.insert(msg.clone()) {
                        log::error!("{msg}");
                    }
                }
            }
        }
        summary.infrastructure_errors = reported.into_iter().collect();

        let results: Vec<Result<RunStatus>> = jobs
            .par_iter()
            .map(|(run, (gt, kernel, srf))| {
                let inputs = RunInputs {
                    dataset_id: &run.dataset_id,
                    gt,
                    kernel,
                    srf,
                };
                let workdir = workdir_for(out_dir, run.run_index, &run.method.method_id);
                let record = execute(run.run_index, &inputs, &run.method, &run.config, &workdir);
                let status = record.status();
                log.lock().expect("log writer poisoned").append(&record)?;
                Ok(status)
            })
            .collect();
        for r in results {
            summary.count(r?);
        }
        Ok(summary)
    })
}

/// One full pipeline execution, appended to `log_path`. External methods
/// run in `work_root/<index>-<method_id>`.
pub fn run_single_logged(
    dataset: &DatasetSpec,
    method: &MethodSpec,
    config: &DegradationConfig,
    log_path: &Path,
    work_root: &Path,
) -> Result<ExperimentRecord> {
    config.validate()?;
    method.validate()?;
    let raw = load_dataset(dataset)?;
    let (lo, hi) = config.clip_percentiles;
    let gt = build_ground_truth(&raw, lo, hi)?;
    let kernel = make_kernel(&config.psf)?;
    let srf = srf_for(&config.srf, &gt)?;
    let mut log = RecordLog::open(log_path)?;
    let run_index = io::read_log(log_path)?.rows.len() as u64;
    let inputs = RunInputs {
        dataset_id: &dataset.dataset_id,
        gt: &gt,
        kernel: &kernel,
        srf: &srf,
    };
    let workdir = workdir_for(work_root, run_index, &method.method_id);
    let record = execute(run_index, &inputs, method, config, &workdir);
    log.append(&record)?;
    Ok(record)
}

/// [`run_single_logged`] with the log at `out_dir/results.csv`.
pub fn run_single(
    dataset: &DatasetSpec,
    method: &MethodSpec,
    config: &DegradationConfig,
    out_dir: &Path,
) -> Result<ExperimentRecord> {
    run_single_logged(dataset, method, config, &out_dir.join(RESULTS_CSV), out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PsfFamily, PsfSpec, Snr};
    use crate::io::Dtype;
    use crate::synthetic::low_rank_scene;

    fn scene(dir: &Path) -> DatasetSpec {
        let cube = low_rank_scene(16, 16, 12, 3, 9).unwrap();
        let path = dir.join("scene.hbc");
        io::write_cube(&cube, &path, Dtype::F64).unwrap();
        DatasetSpec {
            dataset_id: "scene".into(),
            path,
            wavelengths: None,
        }
    }

    fn small_grid(dataset: DatasetSpec, methods: Vec<MethodSpec>) -> GridSpec {
        GridSpec {
            base_seed: 1,
            pairing: Pairing::Cartesian,
            srfs: vec!["ikonos-4".into()],
            factors: vec![2, 4],
            lr_snrs_db: vec![Snr::db(30.0)],
            msi_snrs_db: vec![Snr::db(40.0)],
            clip_percentiles: (1.0, 99.0),
            datasets: vec![dataset],
            methods,
            psfs: vec![PsfSpec::new(PsfFamily::Gaussian), PsfSpec::new(PsfFamily::Delta)],
        }
    }

    #[test]
    fn four_upsample_runs_are_ok() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_grid(scene(dir.path()), vec![MethodSpec::builtin_upsample()]);
        let summary = run_grid(&spec, &dir.path().join("out"), 2).unwrap();
        assert_eq!((summary.total_runs, summary.ok), (4, 4));
        let table = io::read_log(&dir.path().join("out").join(RESULTS_CSV)).unwrap();
        assert_eq!(table.rows.len(), 4);
    }

    #[cfg(unix)]
    #[test]
    fn failing_method_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let methods = vec![
            MethodSpec::builtin_upsample(),
            MethodSpec::external("broken", vec!["false".into()]),
        ];
        let spec = small_grid(scene(dir.path()), methods);
        let summary = run_grid(&spec, &dir.path().join("out"), 3).unwrap();
        assert_eq!((summary.ok, summary.method_error), (4, 4));
        assert_eq!(summary.logged(), summary.total_runs);
        // failed runs keep their workdir for inspection
        assert!(dir.path().join("out/work").read_dir().unwrap().count() == 4);
    }

    #[test]
    fn missing_dataset_is_skipped_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_grid(scene(dir.path()), vec![MethodSpec::builtin_upsample()]);
        spec.datasets.push(DatasetSpec {
            dataset_id: "ghost".into(),
            path: dir.path().join("ghost.npy"),
            wavelengths: None,
        });
        let summary = run_grid(&spec, &dir.path().join("out"), 1).unwrap();
        assert_eq!((summary.ok, summary.skipped), (4, 4));
        assert_eq!(summary.infrastructure_errors.len(), 1);
        assert!(summary.infrastructure_errors[0].contains("ghost"));
    }

    #[test]
    fn identity_single_run_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let config = DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "ikonos-4", 1, 3);
        let rec = run_single(&scene(dir.path()), &MethodSpec::builtin_upsample(), &config, dir.path()).unwrap();
        assert_eq!(rec.status(), RunStatus::Ok);
        assert_eq!(rec.metrics().unwrap().psnr_db, f64::INFINITY);
        let text = std::fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",inf,"));
    }

    #[test]
    fn missing_dataset_single_run_logs_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetSpec {
            dataset_id: "x".into(),
            path: dir.path().join("nope.npy"),
            wavelengths: None,
        };
        let config = DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "ikonos-4", 1, 3);
        assert!(run_single(&ds, &MethodSpec::builtin_upsample(), &config, dir.path()).is_err());
        assert!(!dir.path().join(RESULTS_CSV).exists());
    }

    #[test]
    fn zero_workers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_grid(scene(dir.path()), vec![MethodSpec::builtin_upsample()]);
        assert!(run_grid(&spec, dir.path(), 0).is_err());
    }
}
