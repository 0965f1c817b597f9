//! Result logs: a CSV table plus a JSON-lines mirror with the same fields.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::report::{format_metric, ExperimentRecord};

/// Column order of the results table.
pub const LOG_COLUMNS: [&str; 20] = [
    "dataset_id",
    "method_id",
    "psf_family",
    "psf_params",
    "srf_sensor",
    "factor",
    "lr_snr_db",
    "msi_snr_db",
    "seed",
    "clip_lo",
    "clip_hi",
    "status",
    "rmse",
    "psnr_db",
    "ssim",
    "uiqi",
    "ergas",
    "sam_deg",
    "wall_time_s",
    "run_index",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// CSV cells for a record, in [`LOG_COLUMNS`] order.
pub fn csv_fields(r: &ExperimentRecord) -> Vec<String> {
    let metric_cells: Vec<String> = match r.metrics() {
        Some(m) => m.values().iter().map(|v| format_metric(*v)).collect(),
        None => vec![String::new(); 6],
    };
    let mut cells = vec![
        r.dataset_id.clone(),
        r.method_id.clone(),
        r.config.psf.family.name().to_string(),
        r.psf_params.clone(),
        r.config.srf.clone(),
        r.config.factor.to_string(),
        r.config.lr_snr_db.to_string(),
        r.config.msi_snr_db.to_string(),
        r.config.seed.to_string(),
        format!("{}", r.config.clip_percentiles.0),
        format!("{}", r.config.clip_percentiles.1),
        r.status().to_string(),
    ];
    cells.extend(metric_cells);
    cells.push(format!("{}", r.wall_time_s));
    cells.push(r.run_index.to_string());
    cells
}

fn snr_json(v: Option<f64>) -> Value {
    match v {
        Some(x) => json!(x),
        None => json!("none"),
    }
}

fn metric_json(v: f64) -> Value {
    if v == f64::INFINITY {
        json!("inf")
    } else {
        json!(v)
    }
}

/// The JSON-lines mirror of [`csv_fields`].
pub fn json_object(r: &ExperimentRecord) -> Value {
    let mut obj = Map::new();
    let cfg = &r.config;
    obj.insert("dataset_id".into(), json!(r.dataset_id));
    obj.insert("method_id".into(), json!(r.method_id));
    obj.insert("psf_family".into(), json!(cfg.psf.family.name()));
    obj.insert("psf_params".into(), json!(r.psf_params));
    obj.insert("srf_sensor".into(), json!(cfg.srf));
    obj.insert("factor".into(), json!(cfg.factor));
    obj.insert("lr_snr_db".into(), snr_json(cfg.lr_snr_db.value()));
    obj.insert("msi_snr_db".into(), snr_json(cfg.msi_snr_db.value()));
    obj.insert("seed".into(), json!(cfg.seed));
    obj.insert("clip_lo".into(), json!(cfg.clip_percentiles.0));
    obj.insert("clip_hi".into(), json!(cfg.clip_percentiles.1));
    obj.insert("status".into(), json!(r.status().as_str()));
    let names = ["rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg"];
    match r.metrics() {
        Some(m) => {
            for (name, v) in names.iter().zip(m.values()) {
                obj.insert((*name).into(), metric_json(v));
            }
        }
        None => {
            for name in names {
                obj.insert(name.into(), Value::Null);
            }
        }
    }
    obj.insert("wall_time_s".into(), json!(r.wall_time_s));
    obj.insert("run_index".into(), json!(r.run_index));
    Value::Object(obj)
}

/// Path of the JSON-lines mirror next to a CSV log.
pub fn jsonl_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("jsonl")
}

/// An open results log. Writes are serialized by `&mut self`; share it
/// between workers behind a mutex.
#[derive(Debug)]
pub struct RecordLog {
    csv_path: PathBuf,
    csv: csv::Writer<File>,
    jsonl: File,
}

impl RecordLog {
    /// Opens (creating if needed) the CSV log and its JSONL sibling. An
    /// existing CSV must carry exactly the expected header.
    pub fn open(csv_path: &Path) -> Result<Self> {
        let expected = LOG_COLUMNS.join(",");
        let needs_header = match File::open(csv_path) {
            Ok(f) => {
                let mut first = String::new();
                BufReader::new(f)
                    .read_line(&mut first)
                    .map_err(|e| Error::io(csv_path, e))?;
                let first = first.trim_end_matches(['\r', '\n']);
                if first.is_empty() {
                    true
                } else if first != expected {
                    return Err(Error::Format(format!(
                        "{}: schema drift, existing header `{first}` differs from `{expected}`",
                        csv_path.display()
                    )));
                } else {
                    false
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => true,
            Err(e) => return Err(Error::io(csv_path, e)),
        };
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv_path)
            .map_err(|e| Error::io(csv_path, e))?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if needs_header {
            csv.write_record(LOG_COLUMNS).map_err(|e| csv_err(csv_path, e))?;
            csv.flush().map_err(|e| Error::io(csv_path, e))?;
        }
        let jpath = jsonl_path(csv_path);
        let jsonl = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&jpath)
            .map_err(|e| Error::io(&jpath, e))?;
        Ok(RecordLog {
            csv_path: csv_path.to_path_buf(),
            csv,
            jsonl,
        })
    }

    pub fn append(&mut self, record: &ExperimentRecord) -> Result<()> {
        self.csv
            .write_record(csv_fields(record))
            .map_err(|e| csv_err(&self.csv_path, e))?;
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        let mut line = serde_json::to_string(&json_object(record)).expect("record serializes");
        line.push('\n');
        self.jsonl
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(jsonl_path(&self.csv_path), e))
    }

    pub fn csv_path(&self) -> &Path {
        &self.csv_path
    }
}

/// Appends one record, writing the header if the log is new.
pub fn append_record(record: &ExperimentRecord, csv_path: &Path) -> Result<()> {
    RecordLog::open(csv_path)?.append(record)
}

/// A parsed results table: header plus string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl LogTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Reads a CSV log. A missing or empty file yields an empty table.
pub fn read_log(csv_path: &Path) -> Result<LogTable> {
    let file = match File::open(csv_path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(LogTable::default()),
        Err(e) => return Err(Error::io(csv_path, e)),
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(csv_path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(csv_path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(LogTable { headers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DegradationConfig, PsfFamily, PsfSpec, Snr};
    use crate::report::{MetricReport, RunStatus};

    fn record(i: u64, status: RunStatus) -> ExperimentRecord {
        let cfg = DegradationConfig::new(PsfSpec::new(PsfFamily::Gaussian), "ikonos-4", 4, 77)
            .with_snr(Snr::db(35.0), Snr::NONE);
        if status == RunStatus::Ok {
            let m = MetricReport {
                rmse: 0.01 * i as f64,
                psnr_db: if i == 0 { f64::INFINITY } else { 30.0 + i as f64 },
                ssim: 0.9,
                uiqi: 0.8,
                ergas: 1.5,
                sam_deg: 2.25,
            };
            ExperimentRecord::ok(i, "scene", "upsample", cfg, r#"{"sigma":1.7,"size":13.0}"#, m, 0.5)
        } else {
            ExperimentRecord::failed(i, "scene", "ext", cfg, "{}", status, 0.1)
        }
    }

    #[test]
    fn first_record_writes_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        append_record(&record(0, RunStatus::Ok), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], LOG_COLUMNS.join(","));
        assert!(lines[1].contains(",inf,"), "{}", lines[1]);
        assert!(lines[1].contains(r#""{""sigma"":1.7,""size"":13.0}""#));
    }

    #[test]
    fn seventy_records_give_seventy_one_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut log = RecordLog::open(&path).unwrap();
        for i in 0..70 {
            log.append(&record(i, RunStatus::Ok)).unwrap();
        }
        drop(log);
        // reopening must not write a second header
        append_record(&record(70, RunStatus::Timeout), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 72);
        assert_eq!(std::fs::read_to_string(jsonl_path(&path)).unwrap().lines().count(), 71);
    }

    #[test]
    fn schema_drift_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        let err = RecordLog::open(&path).unwrap_err().to_string();
        assert!(err.contains("schema drift"), "{err}");
    }

    #[test]
    fn failed_rows_have_empty_metrics() {
        let r = record(3, RunStatus::MethodError);
        let cells = csv_fields(&r);
        assert_eq!(cells[11], "method_error");
        assert!(cells[12..18].iter().all(String::is_empty));
        let obj = json_object(&r);
        assert!(obj["rmse"].is_null());
        assert_eq!(obj["msi_snr_db"], "none");
    }

    #[test]
    fn read_missing_log_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let t = read_log(&dir.path().join("nope.csv")).unwrap();
        assert!(t.rows.is_empty());
    }
}
