use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: bad CSV at line {}", path.display(), i + 1))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .with_context(|| format!("{}: line {}: '{field}' is not a number", path.display(), i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Row-major matrix, one row per line, no header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let Some(first) = rows.first() else {
        bail!("{}: empty matrix", path.display());
    };
    let ncols = first.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        bail!(
            "{}: line {} has {} columns, expected {ncols}",
            path.display(),
            i + 1,
            r.len()
        );
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

/// A vector written as one column or one row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let rows = read_rows(path)?;
    let values: Vec<f64> = match rows.as_slice() {
        [] => bail!("{}: empty vector", path.display()),
        [single] => single.clone(),
        many if many.iter().all(|r| r.len() == 1) => many.iter().map(|r| r[0]).collect(),
        _ => bail!("{}: expected a single row or a single column", path.display()),
    };
    Ok(DVector::from_vec(values))
}
