use std::path::Path;
use std::time::Duration;

use clap::ValueEnum;
use serde_json::{json, Map, Value};

use crate::{Common, Failure};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub results: Value,
    pub timing: Map<String, Value>,
}

impl Report {
    pub fn new(command: &'static str, config: Value) -> Self {
        Report { command, config, results: json!({}), timing: Map::new() }
    }

    pub fn time(&mut self, stage: &str, d: Duration) {
        self.timing.insert(format!("{stage}_s"), json!(d.as_secs_f64()));
    }

    fn value(&self) -> Value {
        json!({
            "schema": 1,
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "timing": self.timing,
        })
    }

    pub fn render(&self, format: Format) -> String {
        let v = self.value();
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Tsv => {
                let mut rows = Vec::new();
                flatten("", &v, &mut rows);
                rows.iter().map(|(k, x)| format!("{k}\t{x}\n")).collect()
            }
        }
    }

    pub fn emit(&self, common: &Common) -> Result<(), Failure> {
        let text = self.render(common.format);
        match &common.report {
            Some(p) => write_file(p, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Non-finite values become `null` in JSON; keep them readable instead.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn read_file(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("cannot read {}: {e}", p.display())))
}

pub fn write_file(p: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))
}

pub fn path_value(p: &Option<std::path::PathBuf>) -> Value {
    match p {
        Some(p) => json!(p.display().to_string()),
        None => Value::Null,
    }
}
