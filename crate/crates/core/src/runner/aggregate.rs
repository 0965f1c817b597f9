//! Group-by summaries over a results log.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::records::{read_log, LogTable};
use crate::report::{parse_metric, RunStatus};

/// Summary of one metric within one group. Only `ok` rows contribute;
/// infinite values (a perfect PSNR) are counted in `inf_count` and kept out
/// of `mean` and `std`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricStats {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    pub inf_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    /// Values of the group-by columns, in the requested order.
    pub group: Vec<String>,
    pub stats: Vec<MetricStats>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    pub group_by: Vec<String>,
    pub metrics: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    /// Header for a flat rendering: group columns, then
    /// `<metric>_mean,<metric>_std,<metric>_count,<metric>_inf` per metric.
    pub fn flat_header(&self) -> Vec<String> {
        let mut h = self.group_by.clone();
        for m in &self.metrics {
            for suffix in ["mean", "std", "count", "inf"] {
                h.push(format!("{m}_{suffix}"));
            }
        }
        h
    }

    pub fn flat_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                let mut cells = row.group.clone();
                for s in &row.stats {
                    cells.push(format!("{}", s.mean));
                    cells.push(format!("{}", s.std));
                    cells.push(s.count.to_string());
                    cells.push(s.inf_count.to_string());
                }
                cells
            })
            .collect()
    }
}

/// Orders numbers numerically and everything else as text.
fn numeric_aware(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates an in-memory table.
pub fn aggregate_table(table: &LogTable, group_by: &[String], metrics: &[String]) -> Result<AggregateTable> {
    let mut out = AggregateTable {
        group_by: group_by.to_vec(),
        metrics: metrics.to_vec(),
        rows: Vec::new(),
    };
    if table.headers.is_empty() {
        return Ok(out);
    }
    let col = |name: &String| table.column(name).ok_or_else(|| Error::UnknownColumn(name.clone()));
    let group_cols: Vec<usize> = group_by.iter().map(col).collect::<Result<_>>()?;
    let metric_cols: Vec<usize> = metrics.iter().map(col).collect::<Result<_>>()?;
    let status_col = table
        .column("status")
        .ok_or_else(|| Error::UnknownColumn("status".into()))?;

    let mut groups: BTreeMap<Vec<String>, Vec<&Vec<String>>> = BTreeMap::new();
    for row in &table.rows {
        if row.get(status_col).map(String::as_str) != Some(RunStatus::Ok.as_str()) {
            continue;
        }
        let key = group_cols.iter().map(|c| row.get(*c).cloned().unwrap_or_default()).collect();
        groups.entry(key).or_default().push(row);
    }

    let mut rows: Vec<AggregateRow> = groups
        .into_iter()
        .map(|(group, members)| {
            let stats = metrics
                .iter()
                .zip(&metric_cols)
                .map(|(name, c)| {
                    let mut finite = Vec::new();
                    let mut inf_count = 0;
                    for row in &members {
                        match row.get(*c).and_then(|s| parse_metric(s)) {
                            Some(v) if v.is_finite() => finite.push(v),
                            Some(v) if v.is_infinite() => inf_count += 1,
                            _ => {}
                        }
                    }
                    let (mean, std) = mean_std(&finite);
                    MetricStats {
                        metric: name.clone(),
                        mean,
                        std,
                        count: finite.len(),
                        inf_count,
                    }
                })
                .collect();
            AggregateRow { group, stats }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.group
            .iter()
            .zip(&b.group)
            .map(|(x, y)| numeric_aware(x, y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    out.rows = rows;
    Ok(out)
}

/// Reads a log and aggregates it. A missing or empty log gives an empty
/// table.
pub fn aggregate(log_path: &Path, group_by: &[String], metrics: &[String]) -> Result<AggregateTable> {
    aggregate_table(&read_log(log_path)?, group_by, metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[&str; 4]]) -> LogTable {
        LogTable {
            headers: ["method_id", "factor", "status", "psnr_db"].map(String::from).to_vec(),
            rows: rows.iter().map(|r| r.map(String::from).to_vec()).collect(),
        }
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn hand_computed_four_rows() {
        let t = table(&[
            ["a", "4", "ok", "30"],
            ["a", "4", "ok", "34"],
            ["a", "8", "ok", "20"],
            ["b", "4", "ok", "25"],
        ]);
        let agg = aggregate_table(&t, &s(&["method_id"]), &s(&["psnr_db"])).unwrap();
        assert_eq!(agg.rows.len(), 2);
        let a = &agg.rows[0].stats[0];
        // mean of 30, 34, 20 = 28; population variance = (4 + 36 + 64) / 3
        assert!((a.mean - 28.0).abs() < 1e-12);
        assert!((a.std - (104.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(a.count, 3);
        assert_eq!(agg.rows[1].stats[0].std, 0.0);
    }

    #[test]
    fn non_ok_and_inf_rows() {
        let t = table(&[
            ["a", "4", "ok", "inf"],
            ["a", "4", "ok", "40"],
            ["a", "4", "method_error", ""],
            ["a", "4", "timeout", ""],
        ]);
        let agg = aggregate_table(&t, &[], &s(&["psnr_db"])).unwrap();
        assert_eq!(agg.rows.len(), 1);
        let st = &agg.rows[0].stats[0];
        assert_eq!((st.count, st.inf_count, st.mean), (1, 1, 40.0));
    }

    #[test]
    fn numeric_group_order() {
        let t = table(&[
            ["a", "16", "ok", "1"],
            ["a", "4", "ok", "2"],
            ["a", "8", "ok", "3"],
        ]);
        let agg = aggregate_table(&t, &s(&["factor"]), &s(&["psnr_db"])).unwrap();
        let order: Vec<&str> = agg.rows.iter().map(|r| r.group[0].as_str()).collect();
        assert_eq!(order, ["4", "8", "16"]);
    }

    #[test]
    fn unknown_column() {
        let t = table(&[["a", "4", "ok", "1"]]);
        let err = aggregate_table(&t, &s(&["nope"]), &s(&["psnr_db"])).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(ref c) if c == "nope"));
    }

    #[test]
    fn empty_log_gives_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let agg = aggregate(&dir.path().join("none.csv"), &s(&["x"]), &s(&["y"])).unwrap();
        assert!(agg.rows.is_empty());
    }
}
