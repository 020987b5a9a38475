//! CSV and JSON writers.
//!
//! Every CSV starts with one `#` comment line carrying the schema version and
//! the resolved configuration as compact JSON, followed by a header row.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::SCHEMA_VERSION;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, config_json: &str) -> Result<String> {
        let mut out =
            format!("# schema_version={SCHEMA_VERSION} config={config_json}\n").into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out)?)
    }

    pub fn write(&self, dir: &Path, name: &str, config_json: &str) -> Result<()> {
        write_file(dir, name, &self.render(config_json)?)
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Parses a CSV produced by [`Csv::render`], skipping the comment line.
pub fn parse(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}
