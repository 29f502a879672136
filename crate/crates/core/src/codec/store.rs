use std::path::{Path, PathBuf};

use super::{io_err, Result};

/// Data directory layout:
///
/// ```text
/// <root>/events/   pd_<ts>_<kHz>kHz.iqf, pd_<ts>_<kHz>kHz_spectrum.csv
/// <root>/sweeps/   sweep_<ts>_<sweep_id>.csv
/// <root>/index/    events.jsonl, sweeps.jsonl
/// ```
#[derive(Clone, Debug)]
pub struct DataStore {
    root: PathBuf,
    max_bytes: Option<u64>,
}

impl DataStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["events", "sweeps", "index"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(Self { root, max_bytes: None })
    }

    /// Acquisition pauses once the directory holds this many bytes.
    pub fn with_watermark(mut self, max_bytes: Option<u64>) -> Self {
        self.max_bytes = max_bytes;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn events_index(&self) -> PathBuf {
        self.root.join("index/events.jsonl")
    }

    pub fn sweeps_index(&self) -> PathBuf {
        self.root.join("index/sweeps.jsonl")
    }

    pub fn usage_bytes(&self) -> u64 {
        fn walk(p: &Path) -> u64 {
            let Ok(rd) = std::fs::read_dir(p) else { return 0 };
            rd.flatten()
                .map(|e| match e.file_type() {
                    Ok(t) if t.is_dir() => walk(&e.path()),
                    Ok(_) => e.metadata().map(|m| m.len()).unwrap_or(0),
                    Err(_) => 0,
                })
                .sum()
        }
        walk(&self.root)
    }

    pub fn is_full(&self) -> bool {
        self.max_bytes.is_some_and(|m| self.usage_bytes() >= m)
    }
}
