//! Tabular data model: feature matrices, missingness masks and CSV I/O.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense column-major `n x p` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        Matrix {
            n,
            p,
            data: vec![0.0; n * p],
        }
    }

    /// Build from column vectors, all of length `n`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("ragged columns".into()));
        }
        Ok(Matrix {
            n,
            p,
            data: columns.into_iter().flatten().collect(),
        })
    }

    /// Build from row vectors, all of length `p`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let mut m = Matrix::zeros(n, p);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p).map(|j| self.get(i, j)).collect()
    }

    /// Rows `idx` (in the given order) as a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for j in 0..self.p {
            let c = self.col(j);
            data.extend(idx.iter().map(|&i| c[i]));
        }
        Matrix {
            n: idx.len(),
            p: self.p,
            data,
        }
    }

    /// Columns `idx` (in the given order) as a new matrix.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n);
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Matrix {
            n: self.n,
            p: idx.len(),
            data,
        }
    }
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Fully observed features and response.
#[derive(Clone, Debug, PartialEq)]
pub struct CompleteDataset {
    pub features: Matrix,
    pub response: Vec<f64>,
    pub names: Vec<String>,
    pub target: String,
}

impl CompleteDataset {
    pub fn new(features: Matrix, response: Vec<f64>) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows vs {} responses",
                features.nrows(),
                response.len()
            )));
        }
        let names = default_names(features.ncols());
        Ok(CompleteDataset {
            features,
            response,
            names,
            target: "y".into(),
        })
    }

    pub fn with_names(mut self, names: Vec<String>, target: String) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::Dimension("feature name count".into()));
        }
        self.names = names;
        self.target = target;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset_rows(&self, idx: &[usize]) -> CompleteDataset {
        CompleteDataset {
            features: self.features.select_rows(idx),
            response: idx.iter().map(|&i| self.response[i]).collect(),
            names: self.names.clone(),
            target: self.target.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        IncompleteDataset::from_complete(self.clone()).write_csv(out)
    }
}

/// Features with a per-cell observation mask; the response is always observed.
///
/// Masked cells hold a NaN sentinel. Numeric code must go through
/// [`IncompleteDataset::observed`] or check the mask first; [`IncompleteDataset::get`]
/// on a masked cell trips a debug assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct IncompleteDataset {
    features: Matrix,
    response: Vec<f64>,
    /// Column-major, `true` = observed.
    mask: Vec<bool>,
    pub names: Vec<String>,
    pub target: String,
}

impl IncompleteDataset {
    pub fn from_complete(data: CompleteDataset) -> Self {
        let len = data.n() * data.p();
        IncompleteDataset {
            features: data.features,
            response: data.response,
            mask: vec![true; len],
            names: data.names,
            target: data.target,
        }
    }

    /// Apply a column-major mask (`true` = observed) to complete data.
    pub fn with_mask(data: CompleteDataset, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != data.n() * data.p() {
            return Err(Error::Dimension(format!(
                "mask has {} cells, data has {}",
                mask.len(),
                data.n() * data.p()
            )));
        }
        let mut features = data.features;
        let n = features.nrows();
        for (k, &obs) in mask.iter().enumerate() {
            if !obs {
                features.set(k % n, k / n, f64::NAN);
            }
        }
        Ok(IncompleteDataset {
            features,
            response: data.response,
            mask,
            names: data.names,
            target: data.target,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.n() + i]
    }

    /// Value of an observed cell. Reading a masked cell is a logic error.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.is_observed(i, j), "read of masked cell ({i}, {j})");
        self.features.get(i, j)
    }

    #[inline]
    pub fn observed(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.features.get(i, j))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn column_mask(&self, j: usize) -> &[bool] {
        let n = self.n();
        &self.mask[j * n..(j + 1) * n]
    }

    /// Observed row indices of column `j`, ascending.
    pub fn observed_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_observed(i, j)).collect()
    }

    pub fn observed_values(&self, j: usize) -> Vec<f64> {
        (0..self.n()).filter_map(|i| self.observed(i, j)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Fraction of masked feature cells.
    pub fn missing_rate(&self) -> f64 {
        let cells = self.n() * self.p();
        if cells == 0 {
            return 0.0;
        }
        self.missing_count() as f64 / cells as f64
    }

    /// Rows whose every feature is observed, ascending.
    pub fn complete_cases(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| (0..self.p()).all(|j| self.is_observed(i, j)))
            .collect()
    }

    /// Convert to a complete dataset; fails if any cell is masked.
    pub fn to_complete(&self) -> Result<CompleteDataset> {
        if self.missing_count() > 0 {
            return Err(Error::InvalidParameter(format!(
                "dataset has {} missing cells",
                self.missing_count()
            )));
        }
        Ok(CompleteDataset {
            features: self.features.clone(),
            response: self.response.clone(),
            names: self.names.clone(),
            target: self.target.clone(),
        })
    }

    /// Copy of the features with masked cells replaced by `fill(i, j)`.
    pub(crate) fn fill_features(&self, mut fill: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut m = self.features.clone();
        for j in 0..self.p() {
            for i in 0..self.n() {
                if !self.is_observed(i, j) {
                    m.set(i, j, fill(i, j));
                }
            }
        }
        m
    }

    pub fn read_csv<R: Read>(input: R, target_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let target_idx = header
            .iter()
            .position(|h| h == target_column)
            .ok_or_else(|| Error::MissingTarget(target_column.to_owned()))?;
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let p = names.len();

        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
        let mut mask_cols: Vec<Vec<bool>> = vec![Vec::new(); p];
        let mut response = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut j = 0;
            for (k, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                if k == target_idx {
                    if cell.is_empty() {
                        return Err(Error::MissingResponse(row + 1));
                    }
                    response.push(parse_cell(cell, row + 1, &header[k])?);
                    continue;
                }
                if cell.is_empty() {
                    columns[j].push(f64::NAN);
                    mask_cols[j].push(false);
                } else {
                    columns[j].push(parse_cell(cell, row + 1, &header[k])?);
                    mask_cols[j].push(true);
                }
                j += 1;
            }
        }
        if response.len() < 2 {
            return Err(Error::TooSmall(format!("{} data rows, need at least 2", response.len())));
        }
        if p < 1 {
            return Err(Error::TooSmall("no feature columns besides the target".into()));
        }
        Ok(IncompleteDataset {
            features: Matrix::from_columns(columns)?,
            response,
            mask: mask_cols.into_iter().flatten().collect(),
            names,
            target: header[target_idx].clone(),
        })
    }

    /// Write features (masked cells empty) followed by the target column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.names.clone();
        header.push(self.target.clone());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            rec.clear();
            for j in 0..self.p() {
                rec.push(self.observed(i, j).map_or_else(String::new, |v| v.to_string()));
            }
            rec.push(self.response[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_owned(),
            value: cell.to_owned(),
        }),
    }
}

/// Load a CSV file; empty cells become masked, `target_column` becomes the response.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<IncompleteDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    IncompleteDataset::read_csv(std::io::BufReader::new(file), target_column)
}

pub fn missing_rate(ds: &IncompleteDataset) -> f64 {
    ds.missing_rate()
}

pub fn complete_cases(ds: &IncompleteDataset) -> Vec<usize> {
    ds.complete_cases()
}
