//! Artifact formats: the `.iqf` binary IQ container, CSV exports, the
//! append-only event and sweep indexes, and the on-disk data store layout.

mod batch;
mod csv;
mod index;
mod iqf;
mod store;

pub use self::csv::{export_csv, read_spectrum_csv, write_spectrum_csv, SpectrumRows};
pub use batch::{batch_decode, BatchEntry};
pub use index::{AppendLog, EventIndexRecord, SweepIndexRecord, UploadState};
pub use iqf::{decode_iqf, encode_iqf, read_iqf, write_iqf, IQF_HEADER_LEN, IQF_MAGIC, IQF_VERSION};
pub use store::DataStore;

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: ::csv::Error },
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodecError + '_ {
    move |source| CodecError::Io { path: path.to_path_buf(), source }
}
