//! CSV and JSON result files.

use super::{EpisodeRecord, HarnessError, Summary, FLUSH_EVERY};
use std::fs::File;
use std::path::Path;

pub const CSV_COLUMNS: [&str; 8] = [
    "episode",
    "realized_return",
    "v_star",
    "v_pik",
    "inst_regret",
    "cum_regret",
    "bonus_mass",
    "optimism_violations",
];

/// JSON schema of `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

/// Incremental per-run CSV writer; flushes every 50 rows so a failed run
/// leaves its prefix on disk.
pub struct CsvLog {
    writer: csv::Writer<File>,
    rows: usize,
}

impl CsvLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        writer.write_record(CSV_COLUMNS)?;
        writer.flush()?;
        Ok(Self { writer, rows: 0 })
    }

    pub fn push(&mut self, row: &EpisodeRecord) -> Result<(), HarnessError> {
        self.writer.serialize(row)?;
        self.rows += 1;
        if self.rows % FLUSH_EVERY == 0 {
            self.writer.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), HarnessError> {
        Ok(self.writer.flush()?)
    }
}

pub fn emit_csv(records: &[EpisodeRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut log = CsvLog::create(path)?;
    for r in records {
        log.push(r)?;
    }
    log.flush()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(HarnessError::Config(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    Ok(reader.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn emit_summary_json(summary: &Summary, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
