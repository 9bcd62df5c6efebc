//! Report emission: pretty JSON, or the same document flattened to
//! `path,value` CSV rows.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::failure::{CliResult, Failure};

fn flatten(v: &Value, path: &mut String, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let len = path.len();
                if !path.is_empty() {
                    path.push('.');
                }
                path.push_str(k);
                flatten(x, path, rows);
                path.truncate(len);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                flatten(x, path, rows);
                path.truncate(len);
            }
        }
        Value::String(s) => rows.push((path.clone(), s.clone())),
        Value::Null => rows.push((path.clone(), String::new())),
        other => rows.push((path.clone(), other.to_string())),
    }
}

pub fn to_csv(v: &Value) -> CliResult<String> {
    let mut rows = Vec::new();
    flatten(v, &mut String::new(), &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(["path", "value"]).map_err(io)?;
    for (k, x) in rows {
        w.write_record([k, x]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report` to `out`, or to stdout when `out` is `None`.
pub fn emit<T: Serialize>(report: &T, csv: bool, out: Option<&Path>) -> CliResult<()> {
    let value = serde_json::to_value(report).map_err(|e| Failure::Io(e.to_string()))?;
    let text = if csv {
        to_csv(&value)?
    } else {
        let mut s = serde_json::to_string_pretty(&value).map_err(|e| Failure::Io(e.to_string()))?;
        s.push('\n');
        s
    };
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattens_nested_paths() {
        let v = serde_json::json!({"a": {"b": 1.5, "c": [true, null]}, "d": "x,y"});
        let csv = to_csv(&v).unwrap();
        assert_eq!(csv, "path,value\na.b,1.5\na.c[0],true\na.c[1],\nd,\"x,y\"\n");
    }
}
