//! CSV layout: a header row, then one row per sample.
//!
//! Dynamic data uses `u1,...,um,y`; steady-state data uses
//! `u1_bar,...,um_bar,y_bar`. Floats are written with Rust's shortest
//! round-trip representation, so reading back is value-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DynDataset, SteadyDataset, SteadyPair};
use crate::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a numeric table, returning the header and the rows. Rows are
/// numbered from 1 at the header line.
fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 0,
                message: "no header".into(),
            })
        }
        Some(r) => r.map_err(csv_error)?,
    };
    let header: Vec<String> = header.iter().map(str::to_owned).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "no header".into(),
        });
    }
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "no header (first row is numeric)".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let line = i + 2;
        let record = record.map_err(csv_error)?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(header.len()) + 1,
                message: format!(
                    "ragged row: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            });
        }
        let mut values = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                column: c + 1,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            values.push(v);
        }
        rows.push(values);
    }
    Ok((header, rows))
}

fn check_output_column(header: &[String], expected: &str) -> Result<()> {
    match header.last() {
        Some(last) if last == expected => Ok(()),
        _ => Err(Error::Parse {
            row: 1,
            column: header.len(),
            message: format!("last header column must be {expected:?}"),
        }),
    }
}

fn write_rows<W: Write>(
    writer: W,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dyn_from<R: Read>(reader: R) -> Result<DynDataset> {
    let (header, rows) = read_table(reader)?;
    check_output_column(&header, "y")?;
    let channels = header.len() - 1;
    let mut inputs = vec![Vec::with_capacity(rows.len()); channels];
    let mut output = Vec::with_capacity(rows.len());
    for row in rows {
        for (c, v) in row[..channels].iter().enumerate() {
            inputs[c].push(*v);
        }
        output.push(row[channels]);
    }
    DynDataset::new(inputs, output)
}

pub fn write_dyn_to<W: Write>(writer: W, data: &DynDataset) -> Result<()> {
    let mut header: Vec<String> = (1..=data.input_count()).map(|c| format!("u{c}")).collect();
    header.push("y".into());
    let rows = (0..data.sample_count()).map(|k| {
        let mut row: Vec<f64> = data.inputs().iter().map(|ch| ch[k]).collect();
        row.push(data.output()[k]);
        row
    });
    write_rows(writer, &header, rows)
}

pub fn read_steady_from<R: Read>(reader: R) -> Result<SteadyDataset> {
    let (header, rows) = read_table(reader)?;
    check_output_column(&header, "y_bar")?;
    let channels = header.len() - 1;
    SteadyDataset::new(
        rows.into_iter()
            .map(|row| SteadyPair {
                u_bar: row[..channels].to_vec(),
                y_bar: row[channels],
            })
            .collect(),
    )
}

pub fn write_steady_to<W: Write>(writer: W, data: &SteadyDataset) -> Result<()> {
    let mut header: Vec<String> = (1..=data.input_count())
        .map(|c| format!("u{c}_bar"))
        .collect();
    header.push("y_bar".into());
    let rows = data.pairs().iter().map(|p| {
        let mut row = p.u_bar.clone();
        row.push(p.y_bar);
        row
    });
    write_rows(writer, &header, rows)
}

pub fn read_dyn_csv(path: impl AsRef<Path>) -> Result<DynDataset> {
    read_dyn_from(BufReader::new(File::open(path)?))
}

pub fn write_dyn_csv(path: impl AsRef<Path>, data: &DynDataset) -> Result<()> {
    write_dyn_to(BufWriter::new(File::create(path)?), data)
}

pub fn read_steady_csv(path: impl AsRef<Path>) -> Result<SteadyDataset> {
    read_steady_from(BufReader::new(File::open(path)?))
}

pub fn write_steady_csv(path: impl AsRef<Path>, data: &SteadyDataset) -> Result<()> {
    write_steady_to(BufWriter::new(File::create(path)?), data)
}
