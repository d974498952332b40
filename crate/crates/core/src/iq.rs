//! IQ sample files.
//!
//! The CSV layout is one sample per row under the header `sensor,n,re,im`,
//! with 0-based sensor and sample indices. Rows may come in any order but
//! must cover a complete L×N grid exactly once.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::channel::ObservationBlock;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["sensor", "n", "re", "im"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IqFormat {
    #[default]
    Csv,
}

pub fn load_iq_block(path: impl AsRef<Path>, format: IqFormat) -> Result<ObservationBlock> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        IqFormat::Csv => read_csv(file),
    }
}

pub fn write_iq_block(path: impl AsRef<Path>, block: &ObservationBlock, format: IqFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        IqFormat::Csv => write_csv(file, block).map_err(|e| match e {
            Error::Input { message, .. } => Error::io(path, std::io::Error::other(message)),
            other => other,
        }),
    }
}

pub fn write_csv<W: Write>(writer: W, block: &ObservationBlock) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::input(e.to_string());
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for (l, row) in block.rows().enumerate() {
        for (n, s) in row.iter().enumerate() {
            // `{:e}` on f64 is the shortest exact round-trip representation
            w.write_record(&[l.to_string(), n.to_string(), format!("{:e}", s.re), format!("{:e}", s.im)])
                .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::input(e.to_string()))
}

pub fn read_csv<R: Read>(reader: R) -> Result<ObservationBlock> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::input_at(e.to_string(), 1, None))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::input_at(
            format!("expected header '{}'", CSV_HEADER.join(",")),
            1,
            None,
        ));
    }

    let mut entries: Vec<(usize, usize, Complex64, usize)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::input_at(e.to_string(), row, None))?;
        if record.len() != 4 {
            return Err(Error::input_at(format!("expected 4 fields, found {}", record.len()), row, None));
        }
        let index = |col: usize| -> Result<usize> {
            record[col].parse().map_err(|_| {
                Error::input_at(format!("'{}' is not a non-negative integer", &record[col]), row, Some(CSV_HEADER[col]))
            })
        };
        let value = |col: usize| -> Result<f64> {
            let v: f64 = record[col].parse().map_err(|_| {
                Error::input_at(format!("'{}' is not a number", &record[col]), row, Some(CSV_HEADER[col]))
            })?;
            if !v.is_finite() {
                return Err(Error::input_at("non-finite value", row, Some(CSV_HEADER[col])));
            }
            Ok(v)
        };
        entries.push((index(0)?, index(1)?, Complex64::new(value(2)?, value(3)?), row));
    }
    if entries.is_empty() {
        return Err(Error::input("IQ file has no samples"));
    }

    let sensors = entries.iter().map(|e| e.0).max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; sensors];
    let mut length = 0;
    for &(l, n, _, _) in &entries {
        counts[l] += 1;
        length = length.max(n + 1);
    }
    if let Some(l) = counts.iter().position(|&c| c != counts[0]) {
        return Err(Error::input(format!(
            "dimension mismatch: sensor 0 has {} samples, sensor {l} has {}",
            counts[0], counts[l]
        )));
    }
    if counts[0] != length {
        return Err(Error::input(format!(
            "dimension mismatch: sample indices reach {} but each sensor has {} rows",
            length - 1,
            counts[0]
        )));
    }

    let mut grid: Vec<Option<Complex64>> = vec![None; sensors * length];
    for (l, n, v, row) in entries {
        let slot = &mut grid[l * length + n];
        if slot.is_some() {
            return Err(Error::input_at(format!("duplicate sample sensor {l}, n {n}"), row, None));
        }
        *slot = Some(v);
    }
    let samples = grid
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| Error::input(format!("missing sample sensor {}, n {}", i / length, i % length)))
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationBlock::from_flat(sensors, length, samples)
}
