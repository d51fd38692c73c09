use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::experiment::Summary;
use super::trial::FrameRecord;
use super::HarnessError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

/// Writes a trace. The header is always present, even with no records.
pub fn write_trace(records: &[FrameRecord], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(FrameRecord::COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trace(records: &[FrameRecord], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_trace(records, BufWriter::new(file)).map_err(csv_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<FrameRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<FrameRecord>, _>>().map_err(csv_err(path))
}

pub fn summary_to_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary values are finite");
    s.push('\n');
    s
}

pub fn emit_summary(summary: &Summary, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, summary_to_json(summary)).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Summary, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
