//! CSV ingestion.

use std::path::Path;

use gibbscal::{DataSet, LossModel};

use crate::error::CliError;

/// Reads a rectangular numeric CSV. Every row becomes one record; columns
/// after `split_index` are responses.
pub fn load_dataset_csv(path: &Path, has_header: bool, split_index: Option<usize>) -> Result<DataSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_dataset_csv(&text, has_header, split_index)
}

pub fn parse_dataset_csv(text: &str, has_header: bool, split_index: Option<usize>) -> Result<DataSet, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut width = None;
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("CSV parse error: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(CliError::Data(format!("line {line}: expected {w} fields, found {}", rec.len())));
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}, column {}: cannot parse {cell:?} as a number", col + 1)))?;
            values.push(v);
        }
    }
    let width = width.ok_or_else(|| CliError::Data("data file has no records".into()))?;
    DataSet::new(values, width, split_index).map_err(CliError::from)
}

/// Loads a data file laid out for `loss` and validates labels.
pub fn load_for_loss(path: &Path, has_header: bool, loss: &LossModel) -> Result<DataSet, CliError> {
    let w = loss.record_width();
    let data = load_dataset_csv(path, has_header, if w > 1 { Some(w - 1) } else { None })?;
    loss.check_data(&data)?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gibbscal::Basis;

    #[test]
    fn three_by_two() {
        let d = parse_dataset_csv("1,2\n3,4\n5,6\n", false, Some(1)).unwrap();
        assert_eq!((d.len(), d.record_width()), (3, 2));
    }

    #[test]
    fn crlf_matches_lf() {
        let a = parse_dataset_csv("x,y\n1,2\n3,4\n", true, Some(1)).unwrap();
        let b = parse_dataset_csv("x,y\r\n1,2\r\n3,4\r\n", true, Some(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ragged_and_bad_cells_report_location() {
        let e = parse_dataset_csv("1,2\n3\n", false, None).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = parse_dataset_csv("1,2\n3,abc\n", false, None).unwrap_err().to_string();
        assert!(e.contains("line 2, column 2"), "{e}");
    }

    #[test]
    fn zero_label_rejected_for_classification() {
        let dir = std::env::temp_dir().join(format!("gibbscal-labels-{}", std::process::id()));
        std::fs::write(&dir, "0.5,1\n1.5,0\n").unwrap();
        let loss = LossModel::hinge(Basis::Affine { input_dim: 1 }).unwrap();
        let err = load_for_loss(&dir, false, &loss).unwrap_err();
        std::fs::remove_file(&dir).ok();
        assert!(matches!(err, CliError::Data(_)), "{err}");
    }
}
