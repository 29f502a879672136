use std::path::{Path, PathBuf};

use super::{export_csv, io_err, read_iqf, Result};

/// Outcome for one input file of [`batch_decode`].
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEntry {
    pub input: PathBuf,
    pub output: std::result::Result<PathBuf, String>,
}

/// Decode every `.iqf` in `dir_in` to `<stem>.csv` in `dir_out`.
///
/// Per-file failures are collected in the manifest; only an unreadable
/// input directory or an uncreatable output directory is an error. Inputs
/// are processed in name order.
pub fn batch_decode(dir_in: impl AsRef<Path>, dir_out: impl AsRef<Path>) -> Result<Vec<BatchEntry>> {
    let (dir_in, dir_out) = (dir_in.as_ref(), dir_out.as_ref());
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(dir_in)
        .map_err(io_err(dir_in))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "iqf"))
        .collect();
    inputs.sort();
    std::fs::create_dir_all(dir_out).map_err(io_err(dir_out))?;
    Ok(inputs
        .into_iter()
        .map(|input| {
            let out = dir_out.join(input.with_extension("csv").file_name().expect("file has a name"));
            let output =
                read_iqf(&input).and_then(|frame| export_csv(&frame, &out)).map(|_| out).map_err(|e| e.to_string());
            BatchEntry { input, output }
        })
        .collect())
}
