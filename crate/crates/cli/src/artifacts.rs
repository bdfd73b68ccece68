use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory whose files are replaced atomically.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to a temporary sibling and renames it over `name`.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.root.join(name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = target.with_file_name(format!(
            ".{}.tmp-{}",
            target.file_name().and_then(|n| n.to_str()).unwrap_or("artifact"),
            std::process::id()
        ));
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target).with_context(|| format!("renaming onto {}", target.display()))?;
        Ok(target)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write(name, &buf)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub jumpflow_version: &'a str,
    pub cli_version: &'a str,
    pub artifacts: Vec<String>,
}

/// One line of the stdout summary.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn print_summary(rows: &[SummaryRow]) {
    if rows.is_empty() {
        return;
    }
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    println!("{:<width$}  {:>14}  {:>14}  result", "check", "statistic", "threshold");
    for r in rows {
        println!(
            "{:<width$}  {:>14.6e}  {:>14.6e}  {}",
            r.name,
            r.statistic,
            r.threshold,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
}
