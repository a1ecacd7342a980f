//! Headerless CSV matrices: rows are respondents, columns are items.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::RtMatrix;

/// How values in an input file are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScale {
    /// Values are already log response times.
    #[default]
    Log,
    /// Values are positive raw times; the natural log is taken at ingest.
    Raw,
}

pub fn read_matrix(path: &Path, scale: TimeScale) -> Result<RtMatrix> {
    let file = File::open(path)?;
    read_matrix_from(BufReader::new(file), scale)
}

/// Parses a headerless numeric CSV. Row and column numbers in errors are
/// 1-based.
pub fn read_matrix_from(reader: impl Read, scale: TimeScale) -> Result<RtMatrix> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            column: 1,
            message: e.to_string(),
        })?;
        let row = i + 1;
        if record.len() == 1 && record[0].is_empty() {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "blank line".into(),
            });
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                column: expected.min(record.len()) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "input is empty".into(),
        });
    }
    match scale {
        TimeScale::Log => RtMatrix::from_log_rows(rows),
        TimeScale::Raw => RtMatrix::from_raw_rows(rows),
    }
}

pub fn write_matrix(path: &Path, data: &RtMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_to(&mut out, data)?;
    out.flush()?;
    Ok(())
}

/// Writes values in shortest round-trip form, so reading the file back
/// reproduces every bit.
pub fn write_matrix_to(out: &mut impl Write, data: &RtMatrix) -> Result<()> {
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RtMatrix> {
        read_matrix_from(text.as_bytes(), TimeScale::Log)
    }

    #[test]
    fn reads_a_small_matrix() {
        let m = parse("1.5, 2\n3,4.25\n").unwrap();
        assert_eq!(m.n_respondents(), 2);
        assert_eq!(m.row(1), &[3.0, 4.25]);
    }

    #[test]
    fn reports_row_and_column() {
        match parse("1,2,3\n4,x,6\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        match parse("1,2,3\n4,5\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        assert!(matches!(parse(""), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn non_finite_is_a_data_error() {
        assert!(matches!(parse("1,NaN\n2,3\n"), Err(Error::Data(_))));
        assert!(matches!(parse("1,inf\n2,3\n"), Err(Error::Data(_))));
    }

    #[test]
    fn raw_scale_takes_logs() {
        let m = read_matrix_from("1,2.718281828459045\n".as_bytes(), TimeScale::Raw).unwrap();
        assert_eq!(m.row(0)[0], 0.0);
        assert!((m.row(0)[1] - 1.0).abs() < 1e-15);
        assert!(m.logged_at_ingest());
        assert!(matches!(
            read_matrix_from("1,0\n".as_bytes(), TimeScale::Raw),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![
            vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300],
            vec![std::f64::consts::PI, 1e17 + 1.0, -0.0],
        ];
        let m = RtMatrix::from_log_rows(rows).unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&mut buf, &m).unwrap();
        let back = read_matrix_from(buf.as_slice(), TimeScale::Log).unwrap();
        for (a, b) in m.rows().zip(back.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
