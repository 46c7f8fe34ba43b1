//! Report emission. Primary artifacts are deterministic given the seed; the
//! wall-clock record goes to a `.meta.json` sidecar next to them.

use crate::config::{Format, Settings};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = match option_env!("LANDAU_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

/// Header of every artifact. The echoed config omits the output path and
/// thread count, which do not affect results.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub program: &'static str,
    pub version: &'static str,
    pub rng_scheme: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Settings,
}

impl Meta {
    pub fn new(command: &str, config: &Settings) -> Self {
        Meta {
            program: "landau",
            version: VERSION,
            rng_scheme: landau_core::rng::RNG_SCHEME,
            command: command.to_string(),
            seed: config.seed,
            config: Settings { output: None, threads: None, ..config.clone() },
        }
    }
}

/// A table: column names plus rows of already formatted cells.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj = self.columns.iter().zip(r).map(|(c, x)| (c.clone(), cell_value(x))).collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

fn cell_value(s: &str) -> Value {
    if s.is_empty() {
        return Value::Null;
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => Value::String(s.to_string()),
    }
}

pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub struct Sink {
    pub path: Option<PathBuf>,
    pub format: Format,
    started: std::time::Instant,
}

impl Sink {
    pub fn new(path: Option<PathBuf>, format: Format) -> Self {
        Sink { path, format, started: std::time::Instant::now() }
    }

    /// Writes `table` (CSV or JSON rows) with `extra` fields merged into the JSON document.
    pub fn write_table(&self, meta: &Meta, table: &Table, extra: Value) -> std::io::Result<()> {
        let body = match self.format {
            Format::Csv => {
                let mut s = String::new();
                s.push_str(&format!("# meta: {}\n", serde_json::to_string(meta).expect("serializable meta")));
                if !extra.is_null() {
                    s.push_str(&format!("# info: {}\n", serde_json::to_string(&extra).expect("serializable info")));
                }
                s.push_str(&table.columns.join(","));
                s.push('\n');
                for r in &table.rows {
                    s.push_str(&r.join(","));
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let mut doc = json!({ "meta": meta });
                if let Value::Object(m) = extra {
                    doc.as_object_mut().expect("object").extend(m);
                }
                doc["rows"] = table.to_json();
                pretty(&doc)
            }
        };
        self.emit(&body)
    }

    /// Writes a JSON report regardless of the requested format.
    pub fn write_report<T: Serialize>(&self, meta: &Meta, report: &T) -> std::io::Result<()> {
        let mut doc = json!({ "meta": meta });
        let Value::Object(m) = serde_json::to_value(report).expect("serializable report") else {
            panic!("report must serialize to an object")
        };
        doc.as_object_mut().expect("object").extend(m);
        self.emit(&pretty(&doc))
    }

    fn emit(&self, body: &str) -> std::io::Result<()> {
        match &self.path {
            Some(p) => {
                std::fs::write(p, body)?;
                let wall = json!({
                    "artifact": p.file_name().map(|f| f.to_string_lossy().into_owned()),
                    "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
                    "finished_unix_seconds": std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                });
                std::fs::write(sidecar(p), pretty(&wall))
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()?;
                eprintln!("wall clock: {:.3} s", self.started.elapsed().as_secs_f64());
                Ok(())
            }
        }
    }
}

pub fn sidecar(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}
