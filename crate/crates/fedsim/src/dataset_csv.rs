//! Labelled numeric datasets stored as CSV.

use std::path::Path;

use fedspeed_core::partition::{Dataset, Provenance};

use crate::config::LabelColumn;
use crate::error::{FedsimError, Result};

/// Reads a rectangular numeric CSV. One column holds non-negative integer
/// class labels; every other column is a feature. `header = None` treats the
/// first row as a header when any of its cells is non-numeric. Errors carry
/// the 1-based line number in the file.
pub fn load_csv_dataset(
    path: &Path,
    label_column: &LabelColumn,
    header: Option<bool>,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, i + 1, e))?;
        records.push(rec);
    }
    let parse_err = |row: usize, message: String| FedsimError::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    if records.is_empty() {
        return Err(parse_err(1, "file is empty".into()));
    }
    let has_header = header.unwrap_or_else(|| records[0].iter().any(|c| c.parse::<f64>().is_err()));
    let width = records[0].len();
    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(parse_err(
                1,
                format!("label column {i} out of range for {width} columns"),
            ))
        }
        LabelColumn::Name(name) => {
            if !has_header {
                return Err(parse_err(1, format!("label column `{name}` needs a header row")));
            }
            records[0]
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| parse_err(1, format!("no column named `{name}`")))?
        }
    };
    if width < 2 {
        return Err(parse_err(1, "need a label column and at least one feature".into()));
    }

    let first_data = usize::from(has_header);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.iter().enumerate().skip(first_data) {
        let row = i + 1;
        if rec.len() != width {
            return Err(parse_err(row, format!("expected {width} columns, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, format!("column {j}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("column {j}: non-finite value")));
            }
            if j == label_idx {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(parse_err(row, format!("label `{cell}` is not a class index")));
                }
                labels.push(v as usize);
            } else {
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(parse_err(first_data + 1, "no data rows".into()));
    }
    let classes = match num_classes {
        Some(c) => {
            if let Some(pos) = labels.iter().position(|&y| y >= c) {
                return Err(parse_err(
                    pos + first_data + 1,
                    format!("label {} out of range for {c} classes", labels[pos]),
                ));
            }
            c
        }
        None => labels.iter().max().map_or(1, |m| m + 1),
    };
    Ok(Dataset::new(features, width - 1, labels, classes, Provenance::File)?)
}

/// Writes `dataset` with the label in the last column and a header row.
/// Values use Rust's shortest round-trip formatting.
pub fn write_csv_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    let mut header: Vec<String> = (0..dataset.dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_error(path, 0, e))?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.labels[i].to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, i + 2, e))?;
    }
    w.flush().map_err(|e| FedsimError::io(path, e))
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> FedsimError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return FedsimError::io(path, io);
        }
        unreachable!("is_io_error checked");
    }
    FedsimError::Parse {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_detected_and_rows_counted() {
        let f = file("a,b,label\n1,2,0\n3,4,1\n5,6,1\n");
        let d = load_csv_dataset(f.path(), &LabelColumn::Name("label".into()), None, None).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim, 2);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn headerless_with_label_index() {
        let f = file("0,1.5,2.5\n2,3.5,4.5\n");
        let d = load_csv_dataset(f.path(), &LabelColumn::Index(0), None, Some(3)).unwrap();
        assert_eq!(d.labels, vec![0, 2]);
        assert_eq!(d.features, vec![1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn errors_name_the_row() {
        let cases = [
            ("x,y\n1,0\n2,3\n", Some(3), 3), // label 3 with 3 classes
            ("x,y\n1,0\n2\n", None, 3),      // ragged
            ("x,y\n1,0\nfoo,1\n", None, 3),  // non-numeric
            ("x,y\n1,0\n1,0.5\n", None, 3),  // fractional label
        ];
        for (text, classes, want_row) in cases {
            let f = file(text);
            match load_csv_dataset(f.path(), &LabelColumn::Index(1), None, classes) {
                Err(FedsimError::Parse { row, .. }) => assert_eq!(row, want_row, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv_dataset(Path::new("/nonexistent/x.csv"), &LabelColumn::Index(0), None, None).unwrap_err();
        assert!(matches!(err, FedsimError::Io { .. }), "{err:?}");
    }

    #[test]
    fn write_then_load_is_bit_identical() {
        let d = Dataset::new(
            vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, 1e300],
            2,
            vec![1, 0, 2],
            3,
            Provenance::Synthetic,
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv_dataset(f.path(), &d).unwrap();
        let back = load_csv_dataset(f.path(), &LabelColumn::Name("label".into()), None, Some(3)).unwrap();
        assert_eq!(back.labels, d.labels);
        for (a, b) in back.features.iter().zip(&d.features) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
