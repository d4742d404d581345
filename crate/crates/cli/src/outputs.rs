//! Atomic, versioned output writing with a manifest.
//!
//! Every artifact is written to a temp file and renamed into place; names
//! that already exist get a `.vK` suffix instead of being clobbered. The
//! manifest records each artifact's SHA-256 and the full resolved config.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: String,
    created_unix: u64,
    config_hash: String,
    artifacts: Vec<ManifestEntry>,
    config: &'a multiscale::config::Config,
}

pub struct OutputWriter {
    dir: PathBuf,
    command: String,
    entries: Vec<ManifestEntry>,
}

impl OutputWriter {
    pub fn new(dir: &Path, command: &str) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            entries: Vec::new(),
        })
    }

    /// Next free versioned path for `name` (`name`, then `name.v2`, ...).
    fn versioned(&self, name: &str) -> PathBuf {
        let candidate = self.dir.join(name);
        if !candidate.exists() {
            return candidate;
        }
        let (stem, ext) = match name.rsplit_once('.') {
            Some((s, e)) => (s.to_string(), format!(".{e}")),
            None => (name.to_string(), String::new()),
        };
        for v in 2.. {
            let p = self.dir.join(format!("{stem}.v{v}{ext}"));
            if !p.exists() {
                return p;
            }
        }
        unreachable!()
    }

    /// Write one artifact atomically; returns the path actually used.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
        let target = self.versioned(name);
        let tmp = target.with_extension("tmp-partial");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(contents)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &target)?;
        let mut hasher = Sha256::new();
        hasher.update(contents);
        self.entries.push(ManifestEntry {
            name: target
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned(),
            sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            bytes: contents.len(),
        });
        Ok(target)
    }

    /// Write the manifest (itself versioned) and finish.
    pub fn finish(self, config: &multiscale::config::Config) -> std::io::Result<PathBuf> {
        let target = self.versioned("manifest.json");
        let manifest = Manifest {
            command: self.command,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_hash: config.content_hash(),
            artifacts: self.entries,
            config,
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let tmp = target.with_extension("tmp-partial");
        std::fs::write(&tmp, body.as_bytes())?;
        std::fs::rename(&tmp, &target)?;
        Ok(target)
    }
}
