//! Result rows and their serializations: CSV for humans, JSON lines for
//! machines. Rational values are serialized as `p/q` strings so nothing is
//! lost; every row carries a certificate hash binding it to its inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultRow {
    pub instance: String,
    pub operation: String,
    pub params: String,
    pub quantity: String,
    pub value: String,
    pub certificate: String,
    pub wall_ms: u64,
}

impl ResultRow {
    pub fn csv_header() -> &'static str {
        "instance,operation,params,quantity,value,certificate,wall_ms"
    }

    pub fn to_csv_line(&self) -> String {
        // free-text fields (error notes) may carry commas; fold them into
        // the internal `;` separators instead of quoting
        let clean = |s: &str| s.replace(',', ";").replace('\n', " ");
        format!(
            "{},{},{},{},{},{},{}",
            clean(&self.instance),
            clean(&self.operation),
            clean(&self.params),
            clean(&self.quantity),
            clean(&self.value),
            self.certificate,
            self.wall_ms
        )
    }
}

/// Hash binding a result to its operation, parameters and input payloads.
pub fn certificate(operation: &str, params: &str, inputs: &[&str]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(operation.as_bytes());
    hasher.update([0u8]);
    hasher.update(params.as_bytes());
    for input in inputs {
        hasher.update([0u8]);
        hasher.update(input.as_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Builder that stamps rows with wall time and certificates.
pub struct RowSink {
    pub rows: Vec<ResultRow>,
}

impl RowSink {
    pub fn new() -> Self {
        RowSink { rows: Vec::new() }
    }

    pub fn record<F: FnOnce() -> String>(
        &mut self,
        instance: &str,
        operation: &str,
        params: &str,
        quantity: &str,
        inputs: &[&str],
        compute: F,
    ) {
        let start = Instant::now();
        let value = compute();
        let wall_ms = start.elapsed().as_millis() as u64;
        self.rows.push(ResultRow {
            instance: instance.to_string(),
            operation: operation.to_string(),
            params: params.to_string(),
            quantity: quantity.to_string(),
            value,
            certificate: certificate(operation, params, inputs),
            wall_ms,
        });
    }

    pub fn push_value(
        &mut self,
        instance: &str,
        operation: &str,
        params: &str,
        quantity: &str,
        value: String,
        inputs: &[&str],
    ) {
        self.rows.push(ResultRow {
            instance: instance.to_string(),
            operation: operation.to_string(),
            params: params.to_string(),
            quantity: quantity.to_string(),
            value,
            certificate: certificate(operation, params, inputs),
            wall_ms: 0,
        });
    }
}

impl Default for RowSink {
    fn default() -> Self {
        Self::new()
    }
}

pub fn write_csv(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str(ResultRow::csv_header());
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn write_jsonl(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("row serialization"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certificate_depends_on_inputs() {
        let a = certificate("op", "p=1", &["x"]);
        let b = certificate("op", "p=1", &["y"]);
        let c = certificate("op", "p=2", &["x"]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, certificate("op", "p=1", &["x"]));
    }

    #[test]
    fn jsonl_roundtrip() {
        let row = ResultRow {
            instance: "four-corner".into(),
            operation: "iota".into(),
            params: "sigma=1/2;N=3".into(),
            quantity: "integrand".into(),
            value: "3/16".into(),
            certificate: "abcd".into(),
            wall_ms: 5,
        };
        let line = write_jsonl(std::slice::from_ref(&row));
        let back: ResultRow = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back, row);
    }
}
