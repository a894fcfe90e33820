use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

/// CSV files and the pass/fail summary of one run.
pub struct Output {
    dir: PathBuf,
    checks: Vec<(bool, String, String)>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), checks: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = format!("{header}\n");
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    /// Appends rows, writing the header first when the file is new.
    pub fn append_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let p = self.path(name);
        let fresh = !p.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(&p).with_context(|| format!("opening {}", p.display()))?;
        if fresh {
            writeln!(f, "{header}")?;
        }
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        let detail = detail.into();
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.checks.push((pass, name.to_string(), detail));
    }

    pub fn note(&mut self, name: &str, detail: impl Into<String>) {
        let detail = detail.into();
        println!("{name}: {detail}");
        self.checks.push((true, name.to_string(), format!("info {detail}")));
    }

    /// Writes `summary.txt`; true when every check passed.
    pub fn finish(self, command: &str) -> Result<bool> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut text = format!("timestamp: {stamp}\ncommand: {command}\n");
        for (pass, name, detail) in &self.checks {
            let tag = if detail.starts_with("info ") { "INFO" } else if *pass { "PASS" } else { "FAIL" };
            let detail = detail.strip_prefix("info ").unwrap_or(detail);
            text.push_str(&format!("{tag} {name}: {detail}\n"));
        }
        let ok = self.checks.iter().all(|c| c.0);
        text.push_str(if ok { "result: pass\n" } else { "result: fail\n" });
        let p = self.path("summary.txt");
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(ok)
    }
}
