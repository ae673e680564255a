//! Delimited text: feature tables in, centers and embeddings out.

use std::fs::File;
use std::path::Path;

use clusternet_core::data::Dataset;
use clusternet_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which column, if any, carries integer class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelColumn {
    #[default]
    Last,
    First,
    Index(usize),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: LabelColumn,
}

pub fn read_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        // 1-based line numbers as an editor shows them
        let line = i + 1 + usize::from(options.has_header);
        let record = record.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let label_at = match options.label_column {
            LabelColumn::Last => record.len().checked_sub(1),
            LabelColumn::First => Some(0),
            LabelColumn::Index(c) => Some(c),
            LabelColumn::None => None,
        };
        if let Some(c) = label_at {
            let field = record
                .get(c)
                .ok_or_else(|| Error::format(path, format!("line {line}: no label column {c}")))?;
            let label = field
                .parse::<usize>()
                .map_err(|_| Error::format(path, format!("line {line}: label {field:?} is not a non-negative integer")))?;
            labels.push(label);
        }
        let before = values.len();
        for (c, field) in record.iter().enumerate() {
            if Some(c) == label_at {
                continue;
            }
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {line}, column {}: {field:?} is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("line {line}, column {}: non-finite value", c + 1)));
            }
            values.push(v);
        }
        let n = values.len() - before;
        match width {
            None if n == 0 => return Err(Error::format(path, format!("line {line}: no feature columns"))),
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::format(path, format!("line {line}: {n} features, earlier rows have {w}")));
            }
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::format(path, "no data rows"))?;
    let samples = Matrix::from_vec(values.len() / width, width, values)?;
    let labels = (options.label_column != LabelColumn::None).then_some(labels);
    Ok(Dataset::new(samples, labels, None)?)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

/// Rows of `features`, optionally followed by integer columns such as
/// labels or predictions. Floats are written in shortest round-trip form.
pub fn write_rows(path: impl AsRef<Path>, prefix: &str, features: &Matrix, extra: &[(&str, &[usize])]) -> Result<()> {
    let path = path.as_ref();
    for (name, col) in extra {
        if col.len() != features.rows() {
            return Err(Error::format(path, format!("column {name} has {} rows, expected {}", col.len(), features.rows())));
        }
    }
    let mut w = writer(path)?;
    let mut head: Vec<String> = (0..features.cols()).map(|j| format!("{prefix}{j}")).collect();
    head.extend(extra.iter().map(|(n, _)| n.to_string()));
    w.write_record(&head).map_err(csv_err(path))?;
    for (i, row) in features.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.extend(extra.iter().map(|(_, col)| col[i].to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A labeled dataset as `x0,...,x{d-1},label`.
pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    match data.labels() {
        Some(l) => write_rows(path, "x", data.samples(), &[("label", l)]),
        None => write_rows(path, "x", data.samples(), &[]),
    }
}
