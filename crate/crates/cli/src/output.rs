//! Result envelopes and CSV formatting.

use serde_json::{json, Map, Value};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Builds CSV text with `#`-prefixed metadata lines before the header.
pub struct CsvTable {
    metadata: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { metadata: Vec::new(), header, rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// Metadata placed before anything already recorded.
    pub fn prepend_meta(&mut self, entries: Vec<(String, String)>) {
        self.metadata.splice(0..0, entries);
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(writer.into_inner().expect("flushed")).expect("utf-8 input"));
        out
    }
}

pub fn numbers(values: &[f64]) -> Vec<String> {
    values.iter().copied().map(format_number).collect()
}

/// JSON envelope shared by every command.
pub fn envelope(command: &str, seed: u64, tolerances: Value, steps: Value, timestamp: Option<String>, result: Value) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    map.insert("seed".into(), json!(seed));
    map.insert("tolerances".into(), tolerances);
    map.insert("steps".into(), steps);
    if let Some(ts) = timestamp {
        map.insert("timestamp".into(), json!(ts));
    }
    map.insert("result".into(), result);
    Value::Object(map)
}

pub fn matrix_rows(m: &geoconn::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
