use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{io_err, Result};

/// Sync progress of an artifact. Only ever advances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UploadState {
    #[default]
    Pending,
    Uploaded,
    Acked,
}

/// One detected event, as appended to `index/events.jsonl`. Paths are
/// relative to the data directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventIndexRecord {
    pub event_id: Uuid,
    pub t0: DateTime<Utc>,
    pub peak_freq_hz: f64,
    pub peak_power_dbm: f64,
    pub threshold_dbm: f64,
    pub sweep_id: Uuid,
    pub iq_path: String,
    pub spectrum_path: String,
    #[serde(default)]
    pub upload_state: UploadState,
}

/// One finished (or interrupted) sweep, appended to `index/sweeps.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepIndexRecord {
    pub sweep_id: Uuid,
    pub t_start: DateTime<Utc>,
    pub t_end: DateTime<Utc>,
    pub complete: bool,
    pub spectrum_path: String,
    pub n_events: usize,
    pub failed_windows: Vec<usize>,
}

/// Line-delimited JSON log with a single serialized writer.
///
/// Readers treat a final line without its newline as not yet written.
pub struct AppendLog<R> {
    path: PathBuf,
    writer: Mutex<File>,
    _rec: PhantomData<fn(R)>,
}

impl<R: Serialize + DeserializeOwned> AppendLog<R> {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self { path, writer: Mutex::new(file), _rec: PhantomData })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &R) -> Result<()> {
        let mut line = serde_json::to_vec(record).expect("index records serialize");
        line.push(b'\n');
        let mut f = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(&line).map_err(io_err(&self.path))?;
        f.sync_data().map_err(io_err(&self.path))
    }

    /// Complete records starting at byte `offset`, plus the offset just past
    /// the last complete line.
    pub fn read_from(path: impl AsRef<Path>, offset: u64) -> Result<(Vec<R>, u64)> {
        let path = path.as_ref();
        let mut f = File::open(path).map_err(io_err(path))?;
        f.seek(SeekFrom::Start(offset)).map_err(io_err(path))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(io_err(path))?;
        let mut out = Vec::new();
        let mut consumed = 0usize;
        while let Some(nl) = buf[consumed..].iter().position(|&b| b == b'\n') {
            let line = &buf[consumed..consumed + nl];
            consumed += nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice(line) {
                Ok(r) => out.push(r),
                Err(e) => tracing::warn!(path = %path.display(), "skipping malformed index line: {e}"),
            }
        }
        Ok((out, offset + consumed as u64))
    }

    pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<R>> {
        Ok(Self::read_from(path, 0)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u128) -> EventIndexRecord {
        EventIndexRecord {
            event_id: Uuid::from_u128(i),
            t0: DateTime::from_timestamp_millis(1_700_000_000_000 + i as i64).unwrap(),
            peak_freq_hz: 315e6,
            peak_power_dbm: -35.7,
            threshold_dbm: -50.0,
            sweep_id: Uuid::from_u128(99),
            iq_path: format!("events/{i}.iqf"),
            spectrum_path: format!("events/{i}_spectrum.csv"),
            upload_state: UploadState::Pending,
        }
    }

    #[test]
    fn append_then_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("index/events.jsonl");
        let log = AppendLog::<EventIndexRecord>::open(&p).unwrap();
        log.append(&rec(1)).unwrap();
        log.append(&rec(2)).unwrap();
        let (all, off) = AppendLog::<EventIndexRecord>::read_from(&p, 0).unwrap();
        assert_eq!(all, vec![rec(1), rec(2)]);
        log.append(&rec(3)).unwrap();
        let (more, off2) = AppendLog::<EventIndexRecord>::read_from(&p, off).unwrap();
        assert_eq!(more, vec![rec(3)]);
        assert!(off2 > off);
    }

    #[test]
    fn torn_final_line_ignored_until_completed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.jsonl");
        let log = AppendLog::<EventIndexRecord>::open(&p).unwrap();
        log.append(&rec(1)).unwrap();
        let full = serde_json::to_string(&rec(2)).unwrap();
        let (head, tail) = full.split_at(20);
        OpenOptions::new().append(true).open(&p).unwrap().write_all(head.as_bytes()).unwrap();
        let (recs, off) = AppendLog::<EventIndexRecord>::read_from(&p, 0).unwrap();
        assert_eq!(recs, vec![rec(1)]);
        OpenOptions::new().append(true).open(&p).unwrap().write_all(format!("{tail}\n").as_bytes()).unwrap();
        let (recs, _) = AppendLog::<EventIndexRecord>::read_from(&p, off).unwrap();
        assert_eq!(recs, vec![rec(2)]);
    }

    #[test]
    fn reopening_appends_without_rewriting() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.jsonl");
        AppendLog::<EventIndexRecord>::open(&p).unwrap().append(&rec(1)).unwrap();
        let before = std::fs::read(&p).unwrap();
        AppendLog::<EventIndexRecord>::open(&p).unwrap().append(&rec(2)).unwrap();
        let after = std::fs::read(&p).unwrap();
        assert_eq!(&after[..before.len()], &before[..]);
    }

    #[test]
    fn upload_state_ordering() {
        assert!(UploadState::Pending < UploadState::Uploaded);
        assert!(UploadState::Uploaded < UploadState::Acked);
        assert_eq!(serde_json::to_string(&UploadState::Acked).unwrap(), "\"acked\"");
    }
}
