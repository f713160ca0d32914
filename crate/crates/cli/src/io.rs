//! Reading observations and writing result files.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use slam_core::evalsim::{replicate_csv_row, ReplicateResult, CSV_HEADER};
use slam_core::pipeline::PipelineResult;
use slam_core::{Error, Result};

fn io_error(path: &Path, err: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: err.to_string() }
}

/// Observations from a single-column CSV; a leading "y" header is skipped.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut y = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_error(path, e))?;
        if record.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "{}: line {} has {} columns; expected one",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        let field = &record[0];
        if line == 0 && field.eq_ignore_ascii_case("y") {
            continue;
        }
        let v: f64 = field.parse().map_err(|_| {
            Error::InvalidArgument(format!("{}: line {}: {field:?} is not a number", path.display(), line + 1))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{}: line {}: value is not finite", path.display(), line + 1)));
        }
        y.push(v);
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument(format!("{}: need at least two observations", path.display())));
    }
    Ok(y)
}

pub fn write_observations(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(["y"]).map_err(|e| io_error(path, e))?;
    for v in y {
        w.write_record([v.to_string()]).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Pretty JSON; floats use the shortest representation that parses back
/// to the same value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(|e| io_error(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn joined(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// One row per segment of the fitted mixture.
pub fn write_mixture_segments(path: &Path, res: &PipelineResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(["start", "end", "x_start", "x_end", "level", "tuple", "ambiguous"])
        .map_err(|e| io_error(path, e))?;
    if let (Some(fit), Some(dec)) = (&res.fit, &res.sources) {
        let n = res.n as f64;
        for seg in fit.g_hat.segments() {
            let tuple = dec.sources.tuple_at(seg.start);
            let ambiguous = dec
                .sources
                .segments()
                .iter()
                .zip(&dec.ambiguous)
                .any(|(s, &a)| a && s.start <= seg.start && seg.start <= s.end);
            w.write_record([
                seg.start.to_string(),
                seg.end.to_string(),
                ((seg.start - 1) as f64 / n).to_string(),
                (seg.end as f64 / n).to_string(),
                seg.level.to_string(),
                joined(tuple),
                ambiguous.to_string(),
            ])
            .map_err(|e| io_error(path, e))?;
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// One row per source and band segment, with the admissible values and how
/// many of them differ from the estimate.
pub fn write_source_segments(path: &Path, res: &PipelineResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(["source", "start", "end", "value", "admissible", "deviation_count", "misfit"])
        .map_err(|e| io_error(path, e))?;
    if let (Some(band), Some(dec)) = (&res.band, &res.sources) {
        for r in 0..dec.sources.m() {
            for seg in &band.segments {
                w.write_record([
                    (r + 1).to_string(),
                    seg.start.to_string(),
                    seg.end.to_string(),
                    dec.sources.tuple_at(seg.start)[r].to_string(),
                    joined(&seg.per_source[r]),
                    seg.deviation_count[r].to_string(),
                    seg.misfit.to_string(),
                ])
                .map_err(|e| io_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn write_replicates(path: &Path, rows: &[ReplicateResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(CSV_HEADER.split(',')).map_err(|e| io_error(path, e))?;
    for r in rows {
        w.write_record(replicate_csv_row(r)).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}
