//! CSV datasets with a header `x1,...,xd[,y]`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use psimkl::nalgebra::{DMatrix, DVector};

pub struct Table {
    pub inputs: DMatrix<f64>,
    pub outputs: Option<DVector<f64>>,
}

/// Reads a table; `require_y` demands a trailing `y` column.
pub fn read_table(path: &Path, require_y: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header = reader
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let has_y = names.last() == Some(&"y");
    let d = if has_y { names.len() - 1 } else { names.len() };
    if require_y && !has_y {
        bail!("{}: line 1: last column must be named y", path.display());
    }
    if d == 0 {
        bail!("{}: line 1: no input columns", path.display());
    }
    for (j, name) in names[..d].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            bail!(
                "{}: line 1: expected column x{}, found {name:?}",
                path.display(),
                j + 1
            );
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(k as u64 + 2, |p| p.line());
        let record = record.with_context(|| format!("{}: line {line}", path.display()))?;
        if record.len() != names.len() {
            bail!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                names.len(),
                record.len()
            );
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().with_context(|| {
                format!(
                    "{}: line {line}: cannot parse {field:?} as a number",
                    path.display()
                )
            })?;
            if !v.is_finite() {
                bail!(
                    "{}: line {line}: non-finite value {field:?}",
                    path.display()
                );
            }
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = xs.len() / d;
    if n == 0 {
        bail!("{}: no data rows", path.display());
    }
    Ok(Table {
        inputs: DMatrix::from_row_slice(n, d, &xs),
        outputs: has_y.then(|| DVector::from_vec(ys)),
    })
}
