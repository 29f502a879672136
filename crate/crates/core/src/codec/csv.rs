use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{io_err, CodecError, Result};
use crate::dsp::PowerSpectrum;
use crate::frame::IqFrame;
use crate::scalar::Real;

/// Anything that can be written as `freq_hz,power_dbm` rows.
pub trait SpectrumRows {
    fn spectrum_rows(&self) -> Vec<(f64, f64)>;
}

impl<T: Real> SpectrumRows for PowerSpectrum<T> {
    fn spectrum_rows(&self) -> Vec<(f64, f64)> {
        self.bin_freqs.iter().zip(&self.power_dbm).map(|(f, p)| (*f, p.as_f64())).collect()
    }
}

/// Time-sequence dump of a frame:
/// `sample_index,time_s,i_adc,q_adc,i_volts,q_volts`.
pub fn export_csv(frame: &IqFrame, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let scale = frame.volts_per_count();
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "sample_index,time_s,i_adc,q_adc,i_volts,q_volts")?;
        for (k, s) in frame.samples.iter().enumerate() {
            let t = k as f64 / frame.iq_rate;
            let (i, q) = (f64::from(s.re) * scale, f64::from(s.im) * scale);
            writeln!(w, "{k},{t},{},{},{i},{q}", s.re, s.im)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))?;
    Ok(frame.samples.len())
}

/// `freq_hz,power_dbm`, ascending in frequency; `-inf` for silent bins.
pub fn write_spectrum_csv(spectrum: &dyn SpectrumRows, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let mut rows = spectrum.spectrum_rows();
    if rows.is_empty() {
        return Err(CodecError::Format("empty spectrum".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "freq_hz,power_dbm")?;
        for (f, p) in &rows {
            writeln!(w, "{f},{p}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))?;
    Ok(rows.len())
}

pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let csv_err = |source| CodecError::Csv { path: path.to_path_buf(), source };
    let mut rdr = ::csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["freq_hz", "power_dbm"] {
        return Err(CodecError::Format(format!("unexpected spectrum header {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| CodecError::Format(format!("bad number {:?}: {e}", &rec[i])))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}
