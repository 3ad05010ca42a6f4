use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const FAILED_MARKER: &str = "FAILED";

/// Output directory of one command.
pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        fs::create_dir_all(&path).with_context(|| format!("creating output directory {}", path.display()))?;
        let marker = path.join(FAILED_MARKER);
        if marker.exists() {
            fs::remove_file(&marker)?;
        }
        Ok(OutDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.file(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

pub fn write_failure(dir: &Path, error: &anyhow::Error) {
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join(FAILED_MARKER), format!("{error:#}\n"));
}

/// Plain text table with columns padded to their widest cell.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> =
                (0..cols).map(|i| format!("{:<w$}", cells.get(i).map(String::as_str).unwrap_or(""), w = widths[i])).collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        out += &(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ") + "\n");
        for row in &self.rows {
            out += &line(row);
        }
        out
    }
}

/// Accuracy as a percentage with one decimal.
pub fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let mut t = Table::new(["mode", "A"]);
        t.row(["none", "79.4"]);
        t.row(["random_all", "51.1"]);
        assert_eq!(
            t.render(),
            "mode        A\n----------  ----\nnone        79.4\nrandom_all  51.1\n"
        );
    }

    #[test]
    fn percent_format() {
        assert_eq!(pct(0.794), "79.4");
        assert_eq!(pct(1.0), "100.0");
    }
}
