//! Output paths and the provenance stamp carried by every artifact.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mevauction::simulate::hex_digest;
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A JSON document with (format, version, seed, digest) ahead of its body.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub format: &'a str,
    pub version: &'a str,
    pub seed: Option<u64>,
    pub config_digest: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

/// Digest of a command's resolved inputs, tied to the tool version.
pub fn digest<T: Serialize>(command: &str, inputs: &T) -> String {
    let text = serde_json::to_string(&(command, VERSION, inputs)).expect("digest input serializes");
    hex_digest(text.as_bytes())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex_digest(&bytes))
}

/// Resolves output names against the output directory.
#[derive(Debug, Clone)]
pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    pub fn path(&self, name: &Path) -> PathBuf {
        self.dir.join(name)
    }

    /// `name` with its extension replaced.
    pub fn sibling(&self, name: &Path, ext: &str) -> PathBuf {
        self.path(name).with_extension(ext)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_stamped<T: Serialize>(
    path: &Path,
    format: &str,
    seed: Option<u64>,
    config_digest: &str,
    body: &T,
) -> Result<()> {
    write_json(
        path,
        &Stamped {
            format,
            version: VERSION,
            seed,
            config_digest,
            body,
        },
    )
}
