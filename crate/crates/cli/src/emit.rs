//! CSV and JSON output, plus reading JSON results back.
//!
//! Floats carry 12 significant digits in both formats. JSON numbers are
//! rounded to 12 digits before serialisation, so a parse → emit cycle
//! reproduces the same bytes.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Map, Value};

use crate::sweep::{Cell, ErrorKind, Metadata, Row, RowError, SweepResult};

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// `%.12g`-style text: fixed notation for moderate exponents, scientific
/// otherwise, trailing zeros dropped.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Int(n) => n.to_string(),
        Cell::Float(x) => format_float(*x),
        Cell::Empty => String::new(),
    }
}

/// CSV header for a result; `error` is appended only when some row failed,
/// so successful sweeps keep the documented header exactly.
pub fn csv_header(result: &SweepResult) -> Vec<String> {
    let mut header = result.columns.clone();
    if result.failed_rows() > 0 {
        header.push("error".into());
    }
    header
}

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let header = csv_header(result);
    w.write_record(&header)?;
    let with_error = header.len() > result.columns.len();
    for row in &result.rows {
        let mut record: Vec<String> = row.cells.iter().map(cell_text).collect();
        if with_error {
            record.push(row.error.as_ref().map(|e| e.message.clone()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(result: &SweepResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

fn cell_json(cell: &Cell) -> Value {
    match cell {
        Cell::Int(n) => json!(n),
        Cell::Float(x) => json!(round_sig(*x)),
        Cell::Empty => Value::Null,
    }
}

fn round_value(v: &Value) -> Value {
    match v {
        Value::Number(n) if !n.is_u64() && !n.is_i64() => json!(round_sig(n.as_f64().unwrap_or(f64::NAN))),
        Value::Array(items) => Value::Array(items.iter().map(round_value).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), round_value(x))).collect()),
        other => other.clone(),
    }
}

pub fn to_json_value(result: &SweepResult) -> Value {
    let md = &result.metadata;
    let mut meta = Map::new();
    meta.insert("version".into(), json!(md.version));
    meta.insert("schema_version".into(), json!(md.schema_version));
    meta.insert("experiment".into(), json!(md.experiment));
    meta.insert("seed".into(), json!(md.seed));
    meta.insert("config_hash".into(), json!(md.config_hash));
    meta.insert("summary".into(), round_value(&json!(md.extra)));
    if let Some(t) = md.wall_time_s {
        meta.insert("wall_time_s".into(), json!(round_sig(t)));
    }
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|row| {
            let mut obj: Map<String, Value> =
                result.columns.iter().zip(&row.cells).map(|(c, cell)| (c.clone(), cell_json(cell))).collect();
            let error =
                row.error.as_ref().map_or(Value::Null, |e| json!({"kind": e.kind.name(), "message": e.message}));
            obj.insert("error".into(), error);
            Value::Object(obj)
        })
        .collect();
    json!({ "metadata": meta, "columns": result.columns, "rows": rows })
}

pub fn to_json_string(result: &SweepResult) -> String {
    let mut s = serde_json::to_string_pretty(&to_json_value(result)).expect("JSON values serialise");
    s.push('\n');
    s
}

pub fn emit<W: Write>(result: &SweepResult, format: Format, mut out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => write_csv(result, out).map_err(std::io::Error::other),
        Format::Json => out.write_all(to_json_string(result).as_bytes()),
    }
}

/// Reads a JSON result written by [`to_json_string`].
pub fn from_json_str(text: &str) -> Result<SweepResult, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let field = |v: &Value, k: &str| v.get(k).cloned().ok_or_else(|| format!("missing field {k:?}"));
    let meta = field(&doc, "metadata")?;
    let columns: Vec<String> = serde_json::from_value(field(&doc, "columns")?).map_err(|e| e.to_string())?;
    let extra: BTreeMap<String, Value> = serde_json::from_value(field(&meta, "summary")?).map_err(|e| e.to_string())?;
    let metadata = Metadata {
        version: serde_json::from_value(field(&meta, "version")?).map_err(|e| e.to_string())?,
        schema_version: serde_json::from_value(field(&meta, "schema_version")?).map_err(|e| e.to_string())?,
        experiment: serde_json::from_value(field(&meta, "experiment")?).map_err(|e| e.to_string())?,
        seed: serde_json::from_value(field(&meta, "seed")?).map_err(|e| e.to_string())?,
        config_hash: serde_json::from_value(field(&meta, "config_hash")?).map_err(|e| e.to_string())?,
        extra,
        wall_time_s: meta.get("wall_time_s").and_then(Value::as_f64),
    };
    let Value::Array(items) = field(&doc, "rows")? else {
        return Err("rows must be an array".into());
    };
    let mut rows = Vec::with_capacity(items.len());
    for item in &items {
        let cells = columns
            .iter()
            .map(|c| match item.get(c) {
                None => Err(format!("row is missing column {c:?}")),
                Some(Value::Null) => Ok(Cell::Empty),
                Some(Value::Number(n)) => Ok(match n.as_u64() {
                    Some(i) if !n.is_f64() => Cell::Int(i),
                    _ => Cell::Float(n.as_f64().expect("JSON numbers are finite")),
                }),
                Some(other) => Err(format!("column {c:?} holds {other}, expected a number or null")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let error = match item.get("error") {
            None | Some(Value::Null) => None,
            Some(e) => {
                let kind = match e.get("kind").and_then(Value::as_str) {
                    Some("resource-cap") => ErrorKind::ResourceCap,
                    Some("failure") => ErrorKind::Failure,
                    other => return Err(format!("unknown error kind {other:?}")),
                };
                let message = e.get("message").and_then(Value::as_str).unwrap_or_default().to_string();
                Some(RowError { kind, message })
            }
        };
        rows.push(Row { cells, error });
    }
    Ok(SweepResult { columns, rows, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.996890123456789), "0.996890123457");
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(-0.25), "-0.25");
        assert_eq!(format_float(4.0906e-6), "4.0906e-6");
        assert_eq!(format_float(1.0e-5), "1e-5");
        assert_eq!(format_float(1.5e-4), "0.00015");
        assert_eq!(format_float(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_float(9.99999999999999), "10");
        assert_eq!(format_float(0.0), "0");
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 2.0e-300, 6.02214076e23, 0.1 + 0.2] {
            let r = round_sig(x);
            assert_eq!(round_sig(r), r);
            assert_eq!(format_float(r), format_float(x));
        }
    }
}
