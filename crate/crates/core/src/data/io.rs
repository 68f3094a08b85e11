//! Matrix files.
//!
//! `plom-bin` layout: ASCII magic `PLOM`, `u32` version (1), `u64` rows,
//! `u64` cols, then `rows * cols` little-endian IEEE-754 `f64` values in
//! column-major order. The format carries no labels.
//!
//! CSV layout: by default one feature per line and one sample per field,
//! matching the `[x_d]` orientation; [`CsvOrientation::SamplesAsRows`] reads
//! and writes the transposed, one-sample-per-line layout. In either
//! orientation an optional first line of non-numeric fields lists the feature
//! labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use super::DataMatrix;
use crate::error::{Error, Result};

pub const PLOM_BIN_MAGIC: &[u8; 4] = b"PLOM";
pub const PLOM_BIN_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    PlomBin,
}

impl MatrixFormat {
    /// Guesses the format from a file extension (`.csv` or anything else).
    pub fn from_path(path: &Path) -> MatrixFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::PlomBin,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "plom-bin" | "plom" | "bin" => Ok(MatrixFormat::PlomBin),
            other => Err(Error::invalid(format!(
                "unknown matrix format '{other}' (expected csv or plom-bin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvOrientation {
    #[default]
    FeaturesAsRows,
    SamplesAsRows,
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DataMatrix> {
    match format {
        MatrixFormat::Csv => load_csv(path, CsvOrientation::FeaturesAsRows),
        MatrixFormat::PlomBin => {
            let mut r = BufReader::new(File::open(path)?);
            DataMatrix::new(read_plom_bin(&mut r)?)
        }
    }
}

pub fn save_matrix(data: &DataMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => save_csv(data, path, CsvOrientation::FeaturesAsRows),
        MatrixFormat::PlomBin => {
            let mut w = BufWriter::new(File::create(path)?);
            write_plom_bin(&mut w, data.values())?;
            w.flush()?;
            Ok(())
        }
    }
}

pub fn write_plom_bin<W: Write>(w: &mut W, values: &Array2<f64>) -> Result<()> {
    w.write_all(PLOM_BIN_MAGIC)?;
    w.write_all(&PLOM_BIN_VERSION.to_le_bytes())?;
    w.write_all(&(values.nrows() as u64).to_le_bytes())?;
    w.write_all(&(values.ncols() as u64).to_le_bytes())?;
    for col in values.columns() {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::parse(format!("truncated plom-bin {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_plom_bin<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic, "header")?;
    if &magic != PLOM_BIN_MAGIC {
        return Err(Error::parse("bad plom-bin magic"));
    }
    let mut word = [0u8; 4];
    read_exact_or_truncated(r, &mut word, "header")?;
    let version = u32::from_le_bytes(word);
    if version != PLOM_BIN_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: PLOM_BIN_VERSION,
        });
    }
    let mut dword = [0u8; 8];
    read_exact_or_truncated(r, &mut dword, "header")?;
    let rows = u64::from_le_bytes(dword) as usize;
    read_exact_or_truncated(r, &mut dword, "header")?;
    let cols = u64::from_le_bytes(dword) as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|c| *c <= (1usize << 40))
        .ok_or_else(|| Error::parse("plom-bin dimensions overflow"))?;

    let mut bytes = vec![0u8; count * 8];
    read_exact_or_truncated(r, &mut bytes, "payload")?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    // column-major payload
    Array2::from_shape_vec((cols, rows), data)
        .map(|a| a.reversed_axes().as_standard_layout().into_owned())
        .map_err(|e| Error::parse(e.to_string()))
}

pub fn load_csv(path: impl AsRef<Path>, orientation: CsvOrientation) -> Result<DataMatrix> {
    let file = File::open(path)?;
    read_csv(BufReader::new(file), orientation)
}

pub fn read_csv<R: Read>(reader: R, orientation: CsvOrientation) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut labels: Option<Vec<String>> = None;
    let mut lines: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            message: e.to_string(),
            line: Some(line),
            column: None,
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if idx == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            labels = Some(record.iter().map(str::to_owned).collect());
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v = field.parse::<f64>().map_err(|_| Error::Parse {
                message: format!("'{field}' is not a number"),
                line: Some(line),
                column: Some(c + 1),
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    message: format!("expected {w} fields, found {}", row.len()),
                    line: Some(line),
                    column: None,
                })
            }
            _ => {}
        }
        lines.push(row);
    }

    let width = width.ok_or_else(|| Error::parse("CSV contains no numeric rows"))?;
    let height = lines.len();
    let flat: Vec<f64> = lines.into_iter().flatten().collect();
    let grid = Array2::from_shape_vec((height, width), flat).map_err(|e| Error::parse(e.to_string()))?;
    let values = match orientation {
        CsvOrientation::FeaturesAsRows => grid,
        CsvOrientation::SamplesAsRows => grid.reversed_axes().as_standard_layout().into_owned(),
    };
    let mut m = DataMatrix::new(values)?;
    if labels.is_some() {
        m.set_labels(labels)?;
    }
    Ok(m)
}

pub fn save_csv(data: &DataMatrix, path: impl AsRef<Path>, orientation: CsvOrientation) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, data, orientation)?;
    w.flush()?;
    Ok(())
}

/// Writes shortest round-trip decimal representations, so a CSV round trip
/// is lossless.
pub fn write_csv<W: Write>(w: &mut W, data: &DataMatrix, orientation: CsvOrientation) -> Result<()> {
    // the label header has one field per feature, not per record column
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if let Some(labels) = data.labels() {
        wtr.write_record(labels).map_err(err)?;
    }
    let values = match orientation {
        CsvOrientation::FeaturesAsRows => data.values().view(),
        CsvOrientation::SamplesAsRows => data.values().t(),
    };
    for row in values.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn plom_bin_layout_is_column_major() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut buf = Vec::new();
        write_plom_bin(&mut buf, &a).unwrap();
        assert_eq!(&buf[..4], b"PLOM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        let first: Vec<f64> = buf[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(read_plom_bin(&mut buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn truncated_plom_bin_is_parse_error() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let mut buf = Vec::new();
        write_plom_bin(&mut buf, &a).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_plom_bin(&mut buf.as_slice()), Err(Error::Parse { .. })));
        assert!(matches!(read_plom_bin(&mut &buf[..10]), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_version_rejected() {
        let mut buf = Vec::new();
        write_plom_bin(&mut buf, &array![[1.0, 2.0]]).unwrap();
        buf[4] = 2;
        assert!(matches!(
            read_plom_bin(&mut buf.as_slice()),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn csv_header_populates_labels() {
        let text = "a,b\n1,2,3\n4,5,6\n";
        let m = read_csv(text.as_bytes(), CsvOrientation::FeaturesAsRows).unwrap();
        assert_eq!(m.labels().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(m.values(), &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn labelled_csv_round_trip() {
        let m = DataMatrix::with_labels(
            array![[0.1, 2.5, -3.0], [1e-17, 4.0, 6.25]],
            vec!["y".into(), "input:x".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &m, CsvOrientation::FeaturesAsRows).unwrap();
        assert_eq!(read_csv(buf.as_slice(), CsvOrientation::FeaturesAsRows).unwrap(), m);
    }

    #[test]
    fn csv_transposed() {
        let text = "x,y\n1,4\n2,5\n3,6\n";
        let m = read_csv(text.as_bytes(), CsvOrientation::SamplesAsRows).unwrap();
        assert_eq!(m.values(), &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn csv_parse_error_location() {
        let text = "1,2,3\n4,oops,6\n";
        match read_csv(text.as_bytes(), CsvOrientation::FeaturesAsRows) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, Some(2));
                assert_eq!(column, Some(2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let text = "1,2,3\n4,5\n";
        assert!(matches!(
            read_csv(text.as_bytes(), CsvOrientation::FeaturesAsRows),
            Err(Error::Parse { line: Some(2), .. })
        ));
    }
}
