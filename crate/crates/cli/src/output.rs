//! CSV and JSON artifacts. Everything is rendered in memory first and then
//! written through a temporary file in the target directory, so a failed
//! run never leaves a partial file behind.

use std::io::Write;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

pub fn csv_preamble() -> String {
    format!("# fgf-chaos v{} schema={SCHEMA_VERSION}\n", env!("CARGO_PKG_VERSION"))
}

/// Shortest decimal form that reads back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// An in-memory CSV table with the versioned comment line on top.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new<I, S>(header: I) -> std::io::Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut buf = Vec::new();
        buf.extend_from_slice(csv_preamble().as_bytes());
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(buf);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.writer.write_record(fields)?)
    }

    pub fn into_bytes(self) -> std::io::Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| e.into_error())
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// To `path` when given, else to stdout.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> std::io::Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}
