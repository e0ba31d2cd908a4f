//! Timestamped run directories and their manifests.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Creates `<parent>/<command>_<YYYYmmdd-HHMMSS>`, adding a numeric suffix
/// when that name is taken.
pub fn create_run_dir(parent: &Path, command: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{command}_{stamp}");
    let mut dir = parent.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = parent.join(format!("{base}_{k}"));
        k += 1;
    }
    std::fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    created: String,
    tool_version: &'a str,
    config: &'a RunConfig,
    outputs: &'a T,
}

/// Writes `manifest.json` with the resolved config and command outputs.
pub fn write_manifest<T: Serialize>(dir: &Path, command: &str, config: &RunConfig, outputs: &T) -> Result<PathBuf> {
    let manifest = Manifest {
        command,
        created: chrono::Local::now().to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        outputs,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_do_not_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), "train").unwrap();
        let b = create_run_dir(tmp.path(), "train").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("train_"));
    }
}
