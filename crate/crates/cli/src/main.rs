//! `hyperbench` command-line front end.
//!
//! Exit codes: 0 success, 1 pipeline error, 2 usage error, 3 method failure.

mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hyperbench::config::{DegradationConfig, PsfFamily, PsfSpec, Snr};
use hyperbench::degrade::generate_pair_with_kernel;
use hyperbench::groundtruth::build_ground_truth;
use hyperbench::io::{self, Dtype};
use hyperbench::method::MethodSpec;
use hyperbench::metrics::evaluate_all;
use hyperbench::psf::make_kernel;
use hyperbench::report::{MetricReport, RunStatus};
use hyperbench::runner::{self, DatasetSpec, GridSpec};
use hyperbench::{Error, HsiCube};

use output::{print_json, Failure, Outcome};

#[derive(Parser, Debug)]
#[command(name = "hyperbench", version, about = "Synthetic degradation and scoring for hyperspectral super-resolution")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build ground truth and the LR-HSI / HR-MSI observation pair.
    Degrade(DegradeArgs),
    /// Degrade, reconstruct with one method, score and log one record.
    Run(RunArgs),
    /// Execute a grid file.
    Sweep(SweepArgs),
    /// Score a reconstruction against a reference cube.
    Eval(EvalArgs),
    /// Group-by summary of a results log.
    Aggregate(AggregateArgs),
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Raw cube (native, .npy or .mat).
    #[arg(long)]
    input: PathBuf,
    /// Band-center wavelengths in nm, required when the cube has none.
    #[arg(long)]
    wavelengths: Option<PathBuf>,
    /// PSF family.
    #[arg(long, default_value = "gaussian")]
    psf: String,
    /// PSF parameter override, `name=value` (repeatable). `size=N` sets the kernel side.
    #[arg(long = "psf-param", value_name = "K=V")]
    psf_params: Vec<String>,
    /// Shipped sensor id or SRF curve file.
    #[arg(long, default_value = "ikonos-4")]
    srf: String,
    #[arg(long)]
    factor: usize,
    /// LR-HSI SNR in dB, or `none`.
    #[arg(long, default_value = "none")]
    lr_snr: String,
    /// HR-MSI SNR in dB, or `none`.
    #[arg(long, default_value = "none")]
    msi_snr: String,
    /// Noise seed. Required: there is no entropy fallback.
    #[arg(long)]
    seed: u64,
    /// Ground-truth clip percentiles `lo,hi`.
    #[arg(long, default_value = "1,99")]
    clip: String,
}

#[derive(Args, Debug)]
struct DegradeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Sample type of the written cube files.
    #[arg(long, default_value = "f64", value_parser = ["f32", "f64"])]
    dtype: String,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// `upsample`, `regression` or `exec:<command>`.
    #[arg(long)]
    method: String,
    /// Results log (CSV; a `.jsonl` mirror is written alongside).
    #[arg(long, default_value = "results.csv")]
    log: PathBuf,
    /// Root for external-method workdirs.
    #[arg(long, default_value = "hyperbench-work")]
    out_dir: PathBuf,
    /// Dataset identifier for the log; defaults to the input file stem.
    #[arg(long)]
    dataset_id: Option<String>,
    /// Wall-clock limit for external methods, seconds.
    #[arg(long, default_value_t = hyperbench::method::DEFAULT_TIMEOUT_S)]
    timeout: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Grid file (TOML). `study70` selects the shipped study grid.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Override the grid's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Add a dataset, `id=path` or `id=path,wavelengths` (repeatable).
    #[arg(long = "dataset", value_name = "ID=PATH")]
    datasets: Vec<String>,
    /// Add a method, same syntax as `run --method` (repeatable).
    #[arg(long = "method")]
    methods: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    recon: PathBuf,
    #[arg(long, default_value_t = 1)]
    factor: usize,
    /// Peak value for PSNR and SSIM.
    #[arg(long, default_value_t = hyperbench::metrics::DEFAULT_MAX_VALUE)]
    max: f64,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    #[arg(long)]
    log: PathBuf,
    /// Comma-separated group-by columns; empty for one global row.
    #[arg(long, default_value = "")]
    group_by: String,
    /// Comma-separated metric columns.
    #[arg(long, default_value = "rmse,psnr_db,ssim,uiqi,ergas,sam_deg")]
    metrics: String,
    /// Also write the table as CSV.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Degrade(a) => cmd_degrade(a, cli.json),
        Command::Run(a) => cmd_run(a, cli.json),
        Command::Sweep(a) => cmd_sweep(a, cli.json),
        Command::Eval(a) => cmd_eval(a, cli.json),
        Command::Aggregate(a) => cmd_aggregate(a, cli.json),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::MethodFailed) => ExitCode::from(3),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

type CmdResult = Result<Outcome, Failure>;

fn parse_clip(s: &str) -> anyhow::Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| anyhow!("--clip expects `lo,hi`, got `{s}`"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn parse_psf(family: &str, params: &[String]) -> anyhow::Result<PsfSpec> {
    let mut spec = PsfSpec::new(family.parse::<PsfFamily>()?);
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| anyhow!("--psf-param expects `name=value`, got `{p}`"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("--psf-param {k}: not a number"))?;
        if k.trim() == "size" {
            if v < 1.0 || v.fract() != 0.0 {
                bail!("--psf-param size must be a positive integer");
            }
            spec = spec.with_size(v as usize);
        } else {
            spec = spec.with_param(k.trim(), v);
        }
    }
    Ok(spec)
}

/// Parses and validates every pipeline flag before any file is touched.
fn parse_config(a: &PipelineArgs) -> anyhow::Result<DegradationConfig> {
    let psf = parse_psf(&a.psf, &a.psf_params)?;
    let config = DegradationConfig {
        clip_percentiles: parse_clip(&a.clip)?,
        ..DegradationConfig::new(psf, a.srf.clone(), a.factor, a.seed)
            .with_snr(a.lr_snr.parse::<Snr>()?, a.msi_snr.parse::<Snr>()?)
    };
    config.validate()?;
    make_kernel(&config.psf)?;
    Ok(config)
}

fn parse_method(s: &str) -> anyhow::Result<MethodSpec> {
    if let Some(cmd) = s.strip_prefix("exec:") {
        let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        if argv.is_empty() {
            bail!("`exec:` needs a command");
        }
        let id = Path::new(&argv[0])
            .file_name()
            .map_or_else(|| argv[0].clone(), |n| n.to_string_lossy().into_owned());
        return Ok(MethodSpec::external(id, argv));
    }
    match s {
        "upsample" | "builtin_upsample" => Ok(MethodSpec::builtin_upsample()),
        "regression" | "builtin_regression" => Ok(MethodSpec::builtin_regression()),
        other => bail!("unknown method `{other}` (use upsample, regression or exec:<command>)"),
    }
}

fn dataset_for(a: &PipelineArgs, id: Option<&str>) -> DatasetSpec {
    let dataset_id = id.map(String::from).unwrap_or_else(|| {
        a.input
            .file_stem()
            .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
    });
    DatasetSpec {
        dataset_id,
        path: a.input.clone(),
        wavelengths: a.wavelengths.clone(),
    }
}

fn metric_json(m: &MetricReport) -> Value {
    let mut obj = serde_json::Map::new();
    for (name, v) in MetricReport::NAMES.iter().zip(m.values()) {
        obj.insert((*name).into(), if v.is_infinite() { json!("inf") } else { json!(v) });
    }
    Value::Object(obj)
}

fn cmd_degrade(a: &DegradeArgs, as_json: bool) -> CmdResult {
    let config = parse_config(&a.pipeline).map_err(Failure::usage)?;
    let dtype = if a.dtype == "f32" { Dtype::F32 } else { Dtype::F64 };

    let raw = runner::load_dataset(&dataset_for(&a.pipeline, None)).map_err(Failure::pipeline)?;
    let (lo, hi) = config.clip_percentiles;
    let gt = build_ground_truth(&raw, lo, hi).map_err(Failure::pipeline)?;
    let kernel = make_kernel(&config.psf).map_err(Failure::pipeline)?;
    let srf = runner::srf_for(&config.srf, &gt).map_err(Failure::pipeline)?;
    let pair = generate_pair_with_kernel(&gt, &config, &kernel, &srf).map_err(Failure::pipeline)?;

    // everything is computed before the first write
    let out = &a.out_dir;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::pipeline)?;
    let files = [("gt.hbc", &pair.gt), ("lr_hsi.hbc", &pair.lr_hsi), ("hr_msi.hbc", &pair.hr_msi)];
    for (name, cube) in files {
        io::write_cube(cube, &out.join(name), dtype).map_err(Failure::pipeline)?;
    }
    let manifest = json!({
        "config": config,
        "psf_params": kernel.params(),
        "srf_sensor": srf.sensor(),
        "realized_lr_snr_db": pair.realized_lr_snr_db,
        "realized_msi_snr_db": pair.realized_msi_snr_db,
        "gt_shape": shape_json(&pair.gt),
        "lr_hsi_shape": shape_json(&pair.lr_hsi),
        "hr_msi_shape": shape_json(&pair.hr_msi),
        "files": files.map(|f| f.0),
        "dtype": a.dtype,
    });
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::pipeline)?;

    if as_json {
        print_json(&manifest);
    } else {
        println!("wrote gt {:?}, lr_hsi {:?}, hr_msi {:?} to {}", pair.gt.shape(), pair.lr_hsi.shape(), pair.hr_msi.shape(), out.display());
        if let Some(s) = pair.realized_lr_snr_db {
            println!("realized LR-HSI SNR {s:.3} dB");
        }
        if let Some(s) = pair.realized_msi_snr_db {
            println!("realized HR-MSI SNR {s:.3} dB");
        }
    }
    Ok(Outcome::Success)
}

fn shape_json(c: &HsiCube) -> Value {
    let (h, w, b) = c.shape();
    json!([h, w, b])
}

fn cmd_run(a: &RunArgs, as_json: bool) -> CmdResult {
    let config = parse_config(&a.pipeline).map_err(Failure::usage)?;
    let mut method = parse_method(&a.method).map_err(Failure::usage)?;
    method.timeout_s = a.timeout;
    method.validate().map_err(Failure::usage)?;
    let dataset = dataset_for(&a.pipeline, a.dataset_id.as_deref());

    let record = runner::run_single_logged(&dataset, &method, &config, &a.log, &a.out_dir).map_err(Failure::pipeline)?;
    if as_json {
        print_json(&json!({
            "run_index": record.run_index,
            "dataset_id": record.dataset_id,
            "method_id": record.method_id,
            "status": record.status().as_str(),
            "seed": record.config.seed,
            "metrics": record.metrics().map(metric_json),
            "wall_time_s": record.wall_time_s,
        }));
    } else {
        println!("{} / {}: {}", record.dataset_id, record.method_id, record.status());
        if let Some(m) = record.metrics() {
            output::print_metric_table(m);
        }
    }
    if record.status() == RunStatus::Ok {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::MethodFailed)
    }
}

fn load_sweep_grid(a: &SweepArgs) -> anyhow::Result<GridSpec> {
    let path = Path::new(&a.grid);
    let mut spec = if !path.exists() && (a.grid == "study70" || a.grid == "study70.toml") {
        runner::parse_grid(runner::STUDY70_TOML)?
    } else {
        runner::load_grid(path)?
    };
    if let Some(seed) = a.seed {
        spec.base_seed = seed;
    }
    for d in &a.datasets {
        let (id, rest) = d
            .split_once('=')
            .ok_or_else(|| anyhow!("--dataset expects `id=path[,wavelengths]`, got `{d}`"))?;
        let (p, wl) = match rest.split_once(',') {
            Some((p, wl)) => (p, Some(PathBuf::from(wl))),
            None => (rest, None),
        };
        spec.datasets.push(DatasetSpec {
            dataset_id: id.to_string(),
            path: p.into(),
            wavelengths: wl,
        });
    }
    for m in &a.methods {
        spec.methods.push(parse_method(m)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(a: &SweepArgs, as_json: bool) -> CmdResult {
    if a.workers == 0 {
        return Err(Failure::usage(anyhow!("--workers must be >= 1")));
    }
    let spec = load_sweep_grid(a).map_err(Failure::usage)?;
    log::info!(
        "sweeping {} dataset(s) x {} method(s) into {} with {} worker(s)",
        spec.datasets.len(),
        spec.methods.len(),
        a.out_dir.display(),
        a.workers
    );
    let summary = runner::run_grid(&spec, &a.out_dir, a.workers).map_err(Failure::pipeline)?;
    if as_json {
        print_json(&json!({
            "total_runs": summary.total_runs,
            "ok": summary.ok,
            "method_error": summary.method_error,
            "timeout": summary.timeout,
            "metric_error": summary.metric_error,
            "skipped": summary.skipped,
            "infrastructure_errors": summary.infrastructure_errors,
            "log": a.out_dir.join(runner::RESULTS_CSV),
        }));
    } else {
        println!(
            "{} runs: {} ok, {} method_error, {} timeout, {} metric_error, {} skipped",
            summary.total_runs, summary.ok, summary.method_error, summary.timeout, summary.metric_error, summary.skipped
        );
        for e in &summary.infrastructure_errors {
            println!("  {e}");
        }
        println!("log: {}", a.out_dir.join(runner::RESULTS_CSV).display());
    }
    if summary.infrastructure_errors.is_empty() {
        Ok(Outcome::Success)
    } else {
        Err(Failure::pipeline(anyhow!(
            "{} runs skipped because their inputs could not be prepared",
            summary.skipped
        )))
    }
}

fn cmd_eval(a: &EvalArgs, as_json: bool) -> CmdResult {
    if a.factor == 0 {
        return Err(Failure::usage(anyhow!("--factor must be >= 1")));
    }
    if !(a.max.is_finite() && a.max > 0.0) {
        return Err(Failure::usage(anyhow!("--max must be positive")));
    }
    let gt = io::read_cube(&a.gt).map_err(Failure::pipeline)?;
    let recon = io::read_cube(&a.recon).map_err(Failure::pipeline)?;
    let report = evaluate_all(&gt, &recon, a.factor, a.max).map_err(Failure::pipeline)?;
    if as_json {
        print_json(&metric_json(&report));
    } else {
        output::print_metric_table(&report);
    }
    Ok(Outcome::Success)
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn cmd_aggregate(a: &AggregateArgs, as_json: bool) -> CmdResult {
    let group_by = split_list(&a.group_by);
    let metrics = split_list(&a.metrics);
    let table = runner::aggregate(&a.log, &group_by, &metrics).map_err(|e| match e {
        Error::UnknownColumn(_) => Failure::usage(e),
        other => Failure::pipeline(other),
    })?;
    if let Some(path) = &a.csv_out {
        output::write_table_csv(path, &table.flat_header(), &table.flat_rows()).map_err(Failure::pipeline)?;
    }
    if as_json {
        let rows: Vec<Value> = table
            .rows
            .iter()
            .map(|r| {
                let group: BTreeMap<&str, &str> =
                    table.group_by.iter().map(String::as_str).zip(r.group.iter().map(String::as_str)).collect();
                let stats: BTreeMap<&str, Value> = r
                    .stats
                    .iter()
                    .map(|s| {
                        (
                            s.metric.as_str(),
                            json!({"mean": s.mean, "std": s.std, "count": s.count, "inf_count": s.inf_count}),
                        )
                    })
                    .collect();
                json!({"group": group, "metrics": stats})
            })
            .collect();
        print_json(&json!({ "group_by": table.group_by, "rows": rows }));
    } else {
        output::print_table(&table.flat_header(), &table.flat_rows());
    }
    Ok(Outcome::Success)
}
