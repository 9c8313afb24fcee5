use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use ocrconf::io::TOOLKIT_VERSION;

/// Line-delimited JSON output whose first record carries the effective
/// configuration and toolkit version.
pub struct Records {
    lines: Vec<String>,
}

impl Records {
    pub fn new(config: &Value) -> Self {
        let header = json!({
            "kind": "header",
            "toolkit_version": TOOLKIT_VERSION,
            "config": config,
        });
        Records {
            lines: vec![header.to_string()],
        }
    }

    /// Appends `value`'s fields with a `kind` tag.
    pub fn push<T: Serialize>(&mut self, kind: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        match v.as_object_mut() {
            Some(map) => {
                map.insert("kind".into(), Value::String(kind.into()));
            }
            None => v = json!({ "kind": kind, "value": v }),
        }
        // Round trip through Value so keys come out sorted.
        let sorted: Value = serde_json::from_value(v)?;
        self.lines.push(sorted.to_string());
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.lines.join("\n") + "\n"))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Plain text table with right-aligned numeric columns.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(out, "{c:<w$}");
                } else {
                    let _ = write!(out, "  {c:>w$}");
                }
            }
            out.push('\n');
        };
        line(&mut out, &self.header);
        let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }
}

pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}
