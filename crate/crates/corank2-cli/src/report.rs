//! Report assembly and rendering.
//!
//! One report shape serves every subcommand: a command/model/seed header,
//! a list of named check items, and per-point payloads. JSON output is
//! byte-deterministic: struct fields serialize in declaration order, maps
//! are ordered, and every float is written as `%.12e` through a custom
//! formatter, so identical inputs produce identical bytes.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

#[derive(Debug, Clone, Serialize)]
pub struct Item {
    pub name: String,
    /// "pass", "fail", or "info".
    pub status: String,
    pub residual: Option<f64>,
    pub detail: String,
}

impl Item {
    pub fn check(name: impl Into<String>, pass: bool, residual: f64, detail: String) -> Item {
        Item {
            name: name.into(),
            status: if pass { "pass" } else { "fail" }.into(),
            residual: Some(residual).filter(|r| r.is_finite()),
            detail,
        }
    }

    pub fn info(name: impl Into<String>, detail: String) -> Item {
        Item {
            name: name.into(),
            status: "info".into(),
            residual: None,
            detail,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == "fail"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub items: Vec<Item>,
    pub points: Vec<serde_json::Value>,
}

impl Report {
    pub fn new(command: &str, model: &str, seed: u64) -> Report {
        Report {
            command: command.into(),
            model: model.into(),
            seed,
            items: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        !self.items.iter().any(Item::failed)
    }

    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
        self.serialize(&mut ser).expect("report serialization");
        out.push(b'\n');
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "command: {}\nmodel: {}\nseed: {}\n",
            self.command, self.model, self.seed
        ));
        for item in &self.items {
            let status = item.status.to_uppercase();
            match item.residual {
                Some(r) => out.push_str(&format!(
                    "{status:4} {:28} {:.3e}  {}\n",
                    item.name, r, item.detail
                )),
                None => out.push_str(&format!("{status:4} {:28} {}\n", item.name, item.detail)),
            }
        }
        for value in &self.points {
            out.push_str(&render_value(value));
            out.push('\n');
        }
        out
    }
}

/// Formats a float the way every serialized number is formatted, so text
/// and JSON output agree and stay deterministic.
pub fn sci(x: f64) -> String {
    format!("{x:.12e}")
}

fn render_value(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => sci(x),
            _ => n.to_string(),
        },
        serde_json::Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(render_value).collect();
            format!("[{}]", inner.join(", "))
        }
        serde_json::Value::Object(map) => {
            let inner: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{k}: {}", render_value(v)))
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
        other => other.to_string(),
    }
}

/// Compact JSON with `%.12e` floats.
struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.12e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_floats_are_pinned_and_runs_identical() {
        let mut report = Report::new("classify", "cubic", 7);
        report.items.push(Item::check("band", true, 2.5e-13, "ok".into()));
        report.points.push(json!({"det": 0.72, "kind": "elliptic"}));
        let a = report.to_json();
        let b = report.to_json();
        assert_eq!(a, b);
        assert!(a.contains("2.500000000000e-13"), "{a}");
        assert!(a.contains("7.200000000000e-1"), "{a}");
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn pass_fail_aggregation() {
        let mut report = Report::new("verify", "catalog", 0);
        report.items.push(Item::check("a", true, 0.0, String::new()));
        assert!(report.passed());
        report.items.push(Item::check("b", false, 1.0, String::new()));
        assert!(!report.passed());
        report.items.push(Item::info("c", "note".into()));
        assert_eq!(report.items[2].residual, None);
    }
}
