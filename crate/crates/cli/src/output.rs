//! Run directories: files are staged in a sibling temp directory and moved
//! into place only when the run finishes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub struct RunDir {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// Refuses to replace an existing directory that was not written by a
    /// previous run (no `manifest.json`).
    pub fn create(target: &Path) -> Result<Self, String> {
        if target.exists() && !target.join("manifest.json").is_file() {
            return Err(format!("{} exists and is not a previous run directory", target.display()));
        }
        let name = target.file_name().ok_or_else(|| format!("invalid output path {}", target.display()))?;
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
        let staging = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| e.to_string())?;
        }
        fs::create_dir(&staging).map_err(|e| format!("cannot create {}: {e}", staging.display()))?;
        Ok(Self { target: target.to_path_buf(), staging, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<()> {
        let mut f = fs::File::create(self.staging.join(name))?;
        f.write_all(contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn commit(self) -> std::io::Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_time_seconds: f64,
    pub exit_code: i32,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub ewlab: &'static str,
    pub ewlab_cli: &'static str,
}

pub const VERSIONS: Versions = Versions { ewlab: ewlab::VERSION, ewlab_cli: env!("CARGO_PKG_VERSION") };
