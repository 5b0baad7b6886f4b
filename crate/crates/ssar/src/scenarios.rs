//! Scenario sets as CSV: one header row of farm names, one scenario per row,
//! values in pu. Lines starting with `#` are comments.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use ssar_core::uncertainty::ScenarioSet;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("column `{0}` is not a wind farm of the case")]
    UnknownFarm(String),
    #[error("wind farm `{0}` has no column")]
    MissingFarm(String),
    #[error("row {row}: {message}")]
    Value { row: usize, message: String },
}

pub fn write_scenarios<W: Write>(
    out: W,
    names: &[String],
    set: &ScenarioSet,
    comment: Option<&str>,
) -> Result<(), ScenarioCsvError> {
    let mut out = out;
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for r in set.samples.row_iter() {
        w.write_record(r.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads scenarios and reorders the columns to match `names`.
pub fn read_scenarios<R: Read>(input: R, names: &[String]) -> Result<DMatrix<f64>, ScenarioCsvError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    for h in &header {
        if !names.contains(h) {
            return Err(ScenarioCsvError::UnknownFarm(h.clone()));
        }
    }
    let cols: Vec<usize> = names
        .iter()
        .map(|n| header.iter().position(|h| h == n).ok_or_else(|| ScenarioCsvError::MissingFarm(n.clone())))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = cols
            .iter()
            .map(|&c| {
                let t = rec.get(c).unwrap_or("");
                t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| ScenarioCsvError::Value {
                    row: i + 1,
                    message: format!("`{t}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]))
}
