//! Evaluation reports with byte-stable JSON and CSV renderings.
//!
//! JSON output has sorted keys and every non-integer number printed with six
//! decimals. CSV output is long-format, `section,id,metric,value`, one row per
//! scalar. Means are checked against their per-instance tables before a
//! report is written.

use serde::Serialize;
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const TOOL_NAME: &str = "rationale-eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// Tolerance between a mean and its table when both come from memory.
pub const MEAN_TOLERANCE: f64 = 1e-9;
/// Tolerance after a round trip through six-decimal JSON.
pub const ROUNDED_MEAN_TOLERANCE: f64 = 2e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plausibility: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qc: Option<Value>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl EvalReport {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        EvalReport {
            tool: TOOL_NAME,
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed,
            config: BTreeMap::new(),
            stats: None,
            plausibility: None,
            faithfulness: None,
            qc: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn config(mut self, key: &str, value: impl Serialize) -> Self {
        self.config.insert(key.to_string(), to_value(value));
        self
    }

    pub fn meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.metadata.insert(key.to_string(), to_value(value));
        self
    }

    pub fn to_value(&self) -> Value {
        to_value(self)
    }
}

/// Serialize any report block. Report blocks are plain data, so this cannot
/// fail.
pub fn to_value(value: impl Serialize) -> Value {
    serde_json::to_value(value).expect("report blocks serialize to JSON")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: mean {mean} does not match its table ({expected} over {rows} rows)")]
    MeanMismatch {
        path: String,
        mean: f64,
        expected: f64,
        rows: usize,
    },
    #[error("{path}: expected {expected}")]
    Shape {
        path: String,
        expected: &'static str,
    },
    #[error("report blocks conflict on key {0:?}")]
    Conflict(String),
}

fn format_number(n: &serde_json::Number) -> String {
    if n.is_i64() || n.is_u64() {
        return n.to_string();
    }
    let s = format!("{:.6}", n.as_f64().expect("finite JSON number"));
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn write_canonical(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&format_number(n)),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_canonical(out, item, indent + 2);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_canonical(out, &map[*k], indent + 2);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Sorted keys, two-space indentation, floats at six decimals, trailing
/// newline.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(&mut out, v, 0);
    out.push('\n');
    out
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(format_number(n)),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

/// Identifier of a table row: its `id`, or its `*_id` fields joined by `|`.
fn row_id(row: &Map<String, Value>) -> String {
    if let Some(id) = row.get("id").and_then(scalar_text) {
        return id;
    }
    let mut keys: Vec<&String> = row.keys().filter(|k| k.ends_with("_id")).collect();
    keys.sort();
    keys.iter()
        .filter_map(|k| scalar_text(&row[*k]))
        .collect::<Vec<_>>()
        .join("|")
}

fn flatten_into(rows: &mut Vec<[String; 4]>, section: &str, id: &str, prefix: &str, v: &Value) {
    let join = |a: &str, b: &str| {
        if a.is_empty() {
            b.to_string()
        } else {
            format!("{a}.{b}")
        }
    };
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                let child = &map[k];
                let is_table = matches!(child, Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty());
                if is_table {
                    let table = join(section, &join(prefix, k));
                    for item in child.as_array().expect("checked array") {
                        let row = item.as_object().expect("checked object");
                        let rid = row_id(row);
                        let mut fields: Vec<&String> = row
                            .keys()
                            .filter(|f| *f != "id" && !f.ends_with("_id"))
                            .collect();
                        fields.sort();
                        for f in fields {
                            flatten_into(rows, &table, &rid, f, &row[f]);
                        }
                    }
                } else {
                    flatten_into(rows, section, id, &join(prefix, k), child);
                }
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_into(rows, section, id, &format!("{prefix}[{i}]"), item);
            }
        }
        scalar => rows.push([
            section.to_string(),
            id.to_string(),
            prefix.to_string(),
            scalar_text(scalar).expect("scalar"),
        ]),
    }
}

/// Long-format CSV: summary scalars of each top-level block first, then one
/// row per table cell. Sections are `block` or `block.table`.
pub fn emit_csv(v: &Value) -> String {
    let mut rows = Vec::new();
    if let Value::Object(map) = v {
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        for k in keys {
            match &map[k] {
                block @ Value::Object(_) => flatten_into(&mut rows, k, "", "", block),
                scalar => flatten_into(&mut rows, "report", "", k, scalar),
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "id", "metric", "value"])
        .expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

pub fn emit_report(v: &Value, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => canonical_json(v),
        ReportFormat::Csv => emit_csv(v),
    }
}

fn number(v: &Value, path: &str) -> Result<f64, ReportError> {
    v.as_f64().ok_or_else(|| ReportError::Shape {
        path: path.to_string(),
        expected: "a number",
    })
}

/// Check `block[mean_key]` against the mean of `column` over
/// `block[table_key]`. Absent means (e.g. suf/com on MRC) are skipped.
fn check_mean(
    block: &Value,
    block_name: &str,
    mean_key: &str,
    table_key: &str,
    column: &str,
    tolerance: f64,
) -> Result<(), ReportError> {
    let path = format!("{block_name}.{mean_key}");
    let mean = match block.get(mean_key) {
        None | Some(Value::Null) => return Ok(()),
        Some(v) => number(v, &path)?,
    };
    let rows = block
        .get(table_key)
        .and_then(Value::as_array)
        .ok_or_else(|| ReportError::Shape {
            path: format!("{block_name}.{table_key}"),
            expected: "an array of rows",
        })?;
    let mut sum = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let cell_path = format!("{block_name}.{table_key}[{i}].{column}");
        sum += match row.get(column) {
            Some(Value::Bool(b)) => f64::from(u8::from(*b)),
            Some(v) => number(v, &cell_path)?,
            None => {
                return Err(ReportError::Shape {
                    path: cell_path,
                    expected: "a value",
                })
            }
        };
    }
    // An empty table only supports a zero mean.
    let expected = if rows.is_empty() {
        0.0
    } else {
        sum / rows.len() as f64
    };
    if (mean - expected).abs() > tolerance {
        return Err(ReportError::MeanMismatch {
            path,
            mean,
            expected,
            rows: rows.len(),
        });
    }
    Ok(())
}

/// Every reported mean must be reproducible from the table beside it.
pub fn check_consistency(v: &Value, tolerance: f64) -> Result<(), ReportError> {
    if let Some(p) = v.get("plausibility") {
        check_mean(
            p,
            "plausibility",
            "token_f1",
            "per_instance",
            "token_f1",
            tolerance,
        )?;
        check_mean(
            p,
            "plausibility",
            "iou_f1",
            "per_instance",
            "matched",
            tolerance,
        )?;
    }
    if let Some(f) = v.get("faithfulness") {
        check_mean(f, "faithfulness", "map", "per_pair", "map", tolerance)?;
        check_mean(f, "faithfulness", "suf", "per_instance", "suf", tolerance)?;
        check_mean(f, "faithfulness", "com", "per_instance", "com", tolerance)?;
    }
    Ok(())
}

/// Merge top-level blocks of several reports. Identical values may repeat;
/// differing values for the same key are a conflict, except for `command`,
/// which becomes the list of source commands.
pub fn merge_reports(reports: &[Value]) -> Result<Value, ReportError> {
    let mut merged = Map::new();
    let mut commands = Vec::new();
    for r in reports {
        let obj = r.as_object().ok_or_else(|| ReportError::Shape {
            path: "report".into(),
            expected: "a JSON object",
        })?;
        for (k, v) in obj {
            if k == "command" {
                commands.push(v.clone());
                continue;
            }
            match merged.get(k) {
                Some(existing) if existing == v => {}
                Some(Value::Object(a))
                    if matches!(v, Value::Object(_)) && (k == "config" || k == "metadata") =>
                {
                    let mut combined = a.clone();
                    for (ck, cv) in v.as_object().expect("checked object") {
                        match combined.get(ck) {
                            Some(old) if old != cv => {
                                return Err(ReportError::Conflict(format!("{k}.{ck}")))
                            }
                            _ => {
                                combined.insert(ck.clone(), cv.clone());
                            }
                        }
                    }
                    merged.insert(k.clone(), Value::Object(combined));
                }
                Some(_) => return Err(ReportError::Conflict(k.clone())),
                None => {
                    merged.insert(k.clone(), v.clone());
                }
            }
        }
    }
    merged.insert("command".into(), Value::Array(commands));
    Ok(Value::Object(merged))
}

/// One-line human summary for stderr or stdout.
pub fn summary_line(v: &Value) -> String {
    let mut out = String::new();
    for (block, keys) in [
        ("stats", &["rlr", "rsn"][..]),
        ("plausibility", &["token_f1", "iou_f1"][..]),
        ("faithfulness", &["map", "suf", "com"][..]),
        ("qc", &["qualified", "needs_revision", "discarded"][..]),
    ] {
        if let Some(b) = v.get(block) {
            for k in keys {
                if let Some(Value::Number(n)) = b.get(*k) {
                    let _ = write!(
                        out,
                        "{}{k}={}",
                        if out.is_empty() { "" } else { " " },
                        format_number(n)
                    );
                }
            }
        }
    }
    out
}
