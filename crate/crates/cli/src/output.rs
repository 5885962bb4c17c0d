//! Artifact directory bookkeeping: CSV/text writers, checks, manifest and
//! gnuplot scripts derived from the CSVs.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub struct Run {
    dir: PathBuf,
    files: Vec<String>,
    pub checks: Vec<Check>,
    timings: Vec<(String, f64)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Run {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: vec![],
            checks: vec![],
            timings: vec![],
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn register(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        body(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        self.register(name);
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.register(name);
        Ok(())
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: &str) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.to_string(),
        });
    }

    pub fn timing(&mut self, name: &str, d: Duration) {
        self.timings.push((name.to_string(), d.as_secs_f64()));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One gnuplot script per CSV: every numeric column against the first.
    pub fn emit_plots(&mut self) -> Result<()> {
        let csvs: Vec<String> = self
            .files
            .iter()
            .filter(|f| f.ends_with(".csv"))
            .cloned()
            .collect();
        for name in csvs {
            let file = File::open(self.dir.join(&name))?;
            let mut header = String::new();
            BufReader::new(file).read_line(&mut header)?;
            let cols: Vec<&str> = header.trim().split(',').collect();
            if cols.len() < 2 {
                continue;
            }
            let stem = name.trim_end_matches(".csv");
            let series: Vec<String> = (2..=cols.len().min(6))
                .map(|k| {
                    format!(
                        "'{name}' using 1:{k} with linespoints title '{}'",
                        cols[k - 1]
                    )
                })
                .collect();
            let script = format!(
                "set datafile separator ','\nset terminal pngcairo size 900,600\nset output '{stem}.png'\n\
                 set xlabel '{}'\nset key outside\nplot {}\n",
                cols[0],
                series.join(", \\\n     ")
            );
            self.text(&format!("{stem}.gp"), &script)?;
        }
        Ok(())
    }

    /// Writes `manifest.txt`, the only file with timestamps.
    pub fn write_manifest(&mut self, meta: &[(&str, String)]) -> Result<()> {
        let mut s = String::new();
        for (k, v) in meta {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in &self.timings {
            s.push_str(&format!("timing.{k} = {v:.6}\n"));
        }
        for c in &self.checks {
            s.push_str(&format!(
                "check = {} | {} | {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        s.push_str(&format!(
            "status = {}\n",
            if self.all_pass() { "pass" } else { "fail" }
        ));
        for f in &self.files {
            let bytes = std::fs::read(self.dir.join(f))?;
            s.push_str(&format!("file = {f} sha256:{}\n", sha256_hex(&bytes)));
        }
        std::fs::write(self.dir.join("manifest.txt"), s)?;
        Ok(())
    }
}
