//! Exit-code plumbing and terminal / JSON rendering.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use hyperbench::report::{format_metric, MetricReport};

/// Successful command completion, or a method that ran but failed.
pub enum Outcome {
    Success,
    MethodFailed,
}

/// An error paired with its exit code.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: e.into() }
    }

    pub fn pipeline(e: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

/// Renders JSON with every floating-point number at 17 significant digits.
pub fn to_json_17(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let _ = write!(out, "{x:.16e}");
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn print_json(v: &Value) {
    println!("{}", to_json_17(v));
}

pub fn print_metric_table(m: &MetricReport) {
    let header = MetricReport::NAMES.map(String::from).to_vec();
    let row = m.values().map(format_metric).to_vec();
    print_table(&header, &[row]);
}

/// Left-aligned columns separated by two spaces.
pub fn print_table(header: &[String], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    println!("{}", line(header));
    for row in rows {
        println!("{}", line(row));
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_table_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut text = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        text.push_str(&row.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_get_seventeen_digits() {
        let text = to_json_17(&json!({"a": 0.1, "b": [1, "x", null], "c": {"d": 2.5}}));
        assert_eq!(text, r#"{"a":1.0000000000000001e-1,"b":[1,"x",null],"c":{"d":2.5000000000000000e0}}"#);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_cells_are_quoted_when_needed() {
        assert_eq!(csv_cell("plain"), "plain");
        assert_eq!(csv_cell(r#"{"a":1,"b":2}"#), r#""{""a"":1,""b"":2}""#);
    }
}
