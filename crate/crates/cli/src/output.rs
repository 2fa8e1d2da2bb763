//! Report files. Every write goes through [`OutDir`], which only accepts bare
//! file names or relative paths without parent components.

use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
    pub build: &'static str,
}

pub const TOOL: ToolInfo = ToolInfo { name: "pmi-curation", version: env!("CARGO_PKG_VERSION"), build: env!("PMI_BUILD_ID") };

/// Envelope shared by every JSON report.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'a ToolInfo,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub result: T,
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            bail!("refusing to write outside the output directory: {}", rel.display());
        }
        let full = self.root.join(rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(full)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(rel)?;
        let mut text = serde_json::to_string_pretty(value).with_context(|| format!("serializing {rel}"))?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_csv<R: Serialize>(&self, rel: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.path(rel)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel)?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
