pub mod characterize;
pub mod dataset;
pub mod decode;
pub mod oracle;
pub mod reconstruct;
pub mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config;
use crate::error::{CliError, CliResult};

pub(crate) const MANIFEST: &str = "manifest.toml";

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> CliResult<()> {
    write_text(&dir.join(MANIFEST), &config::to_toml(manifest)?)
}

/// Reads `<dir>/manifest.toml` as written by another subcommand.
pub(crate) fn read_manifest<T: serde::de::DeserializeOwned>(dir: &Path) -> CliResult<T> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| {
        CliError::Core(snapcube::Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    })
}

/// Path as recorded in a manifest: forward slashes, never absolute unless given so.
pub(crate) fn display_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
        .replace("//", "/")
}

/// Resolves a path recorded in `base`'s manifest: as given, else relative to `base`.
pub(crate) fn resolve(base: &Path, recorded: &str) -> PathBuf {
    let p = PathBuf::from(recorded);
    if p.exists() || p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Small CSV table writer for profile dumps.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}
