//! Missing-data matrix, missingness patterns and CSV ingestion.
//!
//! Missing cells are stored as a literal `0.0` in `values` together with a
//! boolean mask (`true` = observed). The zero fill is what the indicator
//! regressions operate on; the mask keeps observedness unambiguous when zero
//! is a legitimate measurement.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Missing-value tokens used when none are supplied.
pub const DEFAULT_MISSING_TOKENS: [&str; 3] = ["", ".", "NA"];

/// A single cell of a dataset, 0-based internally.
///
/// `Display` and the serialized form use 1-based rows so that reports line up
/// with conventional observation numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub var: usize,
}

impl Cell {
    pub fn new(row: usize, var: usize) -> Self {
        Self { row, var }
    }

    /// Label such as `X1@10`, with a 1-based row.
    pub fn label(&self, names: &[String]) -> String {
        format!("{}@{}", names[self.var], self.row + 1)
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Cell", 2)?;
        st.serialize_field("row", &(self.row + 1))?;
        st.serialize_field("var", &self.var)?;
        st.end()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}@{}", self.var + 1, self.row + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, zero-filling every unobserved cell.
    pub fn new(mut values: DMatrix<f64>, mask: DMatrix<bool>, names: Vec<String>) -> Result<Self> {
        if values.nrows() != mask.nrows() {
            return Err(Error::Dimension {
                expected: values.nrows(),
                found: mask.nrows(),
            });
        }
        if values.ncols() != mask.ncols() {
            return Err(Error::Dimension {
                expected: values.ncols(),
                found: mask.ncols(),
            });
        }
        if names.len() != values.ncols() {
            return Err(Error::Dimension {
                expected: values.ncols(),
                found: names.len(),
            });
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty);
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !mask[(i, j)] {
                    values[(i, j)] = 0.0;
                } else if !values[(i, j)].is_finite() {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!("non-finite value in column `{}`", names[j]),
                    });
                }
            }
        }
        Ok(Self {
            values,
            mask,
            names,
        })
    }

    /// Row-wise constructor; `None` marks a missing cell.
    pub fn from_rows(names: &[&str], rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let p = names.len();
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected {p} fields, found {}", r.len()),
                });
            }
        }
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j].unwrap_or(0.0));
        let mask = DMatrix::from_fn(n, p, |i, j| rows[i][j].is_some());
        Self::new(values, mask, names.iter().map(|s| s.to_string()).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Zero-filled values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_observed(&self, row: usize, var: usize) -> bool {
        self.mask[(row, var)]
    }

    pub fn get(&self, row: usize, var: usize) -> Option<f64> {
        self.mask[(row, var)].then(|| self.values[(row, var)])
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Missing cells ordered by variable, then row.
    pub fn missing_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for j in 0..self.n_cols() {
            for i in 0..self.n_rows() {
                if !self.mask[(i, j)] {
                    out.push(Cell::new(i, j));
                }
            }
        }
        out
    }

    pub fn missing_rows(&self, var: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| !self.mask[(i, var)]).collect()
    }

    pub fn observed_rows(&self, var: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.mask[(i, var)]).collect()
    }

    /// Rows with every listed variable observed.
    pub fn complete_rows(&self, vars: &[usize]) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| vars.iter().all(|&j| self.mask[(i, j)]))
            .collect()
    }

    pub fn observed_mean(&self, var: usize) -> Option<f64> {
        let rows = self.observed_rows(var);
        if rows.is_empty() {
            return None;
        }
        Some(rows.iter().map(|&i| self.values[(i, var)]).sum::<f64>() / rows.len() as f64)
    }

    /// New dataset made of the listed rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let p = self.n_cols();
        Dataset {
            values: DMatrix::from_fn(rows.len(), p, |i, j| self.values[(rows[i], j)]),
            mask: DMatrix::from_fn(rows.len(), p, |i, j| self.mask[(rows[i], j)]),
            names: self.names.clone(),
        }
    }

    /// New dataset made of the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let n = self.n_rows();
        Dataset {
            values: DMatrix::from_fn(n, cols.len(), |i, j| self.values[(i, cols[j])]),
            mask: DMatrix::from_fn(n, cols.len(), |i, j| self.mask[(i, cols[j])]),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }

    /// Copy with the given cells filled in and marked observed.
    pub fn completed(&self, fills: &[(Cell, f64)]) -> Dataset {
        let mut d = self.clone();
        for &(c, v) in fills {
            d.values[(c.row, c.var)] = v;
            d.mask[(c.row, c.var)] = true;
        }
        d
    }

    /// Column means over all rows, treating the current values as complete.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.n_cols())
            .map(|j| self.values.column(j).sum() / self.n_rows() as f64)
            .collect()
    }

    /// Serializes back to CSV, writing `missing_token` for unobserved cells.
    pub fn to_csv_string(&self, missing_token: &str) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names).expect("in-memory write");
        for i in 0..self.n_rows() {
            let rec: Vec<String> = (0..self.n_cols())
                .map(|j| match self.get(i, j) {
                    Some(v) => format!("{v}"),
                    None => missing_token.to_string(),
                })
                .collect();
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternClass {
    Complete,
    ResponseOnly,
    ComplementaryBivariate,
    GeneralMultivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableMissingness {
    pub name: String,
    /// 0-based row indices.
    pub missing_rows: Vec<usize>,
    pub n_observed: usize,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingnessPattern {
    pub variables: Vec<VariableMissingness>,
    pub class: PatternClass,
    pub n_observed_cells: usize,
    pub n_missing_cells: usize,
    pub n_complete_rows: usize,
}

impl MissingnessPattern {
    /// Indices of variables with at least one missing cell.
    pub fn incomplete_variables(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.n_missing > 0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Summarizes the missingness pattern; a row with no observed cell is fatal.
pub fn validate(d: &Dataset) -> Result<MissingnessPattern> {
    let (n, p) = (d.n_rows(), d.n_cols());
    for i in 0..n {
        if (0..p).all(|j| !d.is_observed(i, j)) {
            return Err(Error::AllMissingRow { row: i + 1 });
        }
    }
    let variables: Vec<VariableMissingness> = (0..p)
        .map(|j| {
            let missing_rows = d.missing_rows(j);
            VariableMissingness {
                name: d.names()[j].clone(),
                n_missing: missing_rows.len(),
                n_observed: n - missing_rows.len(),
                missing_rows,
            }
        })
        .collect();
    let n_missing_cells: usize = variables.iter().map(|v| v.n_missing).sum();
    let incomplete = variables.iter().filter(|v| v.n_missing > 0).count();
    let class = match incomplete {
        0 => PatternClass::Complete,
        1 => PatternClass::ResponseOnly,
        // all-missing rows were rejected above, so for p = 2 no row misses both
        2 if p == 2 => PatternClass::ComplementaryBivariate,
        _ => PatternClass::GeneralMultivariate,
    };
    let all: Vec<usize> = (0..p).collect();
    Ok(MissingnessPattern {
        variables,
        class,
        n_observed_cells: n * p - n_missing_cells,
        n_missing_cells,
        n_complete_rows: d.complete_rows(&all).len(),
    })
}

/// Parses CSV text with a header row.
pub fn parse_csv<R: Read>(reader: R, missing_tokens: &[&str]) -> Result<Dataset> {
    let tokens: BTreeSet<&str> = missing_tokens.iter().copied().collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 0))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty);
    }
    let names: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    let p = names.len();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        if rec.len() != p {
            return Err(Error::Parse {
                row,
                message: format!("expected {p} fields, found {}", rec.len()),
            });
        }
        let mut parsed = Vec::with_capacity(p);
        for (j, field) in rec.iter().enumerate() {
            if tokens.contains(field) {
                parsed.push(None);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("non-numeric value `{field}` in column `{}`", names[j]),
                })?;
                parsed.push(Some(v));
            }
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    Dataset::from_rows(&name_refs, &rows)
}

pub fn load_csv(path: impl AsRef<Path>, missing_tokens: &[&str]) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    parse_csv(f, missing_tokens)
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

const HALD13_NAMES: [&str; 5] = ["X1", "X2", "X3", "X4", "X5"];

#[rustfmt::skip]
const HALD13: [[Option<f64>; 5]; 13] = [
    [Some(7.0),  Some(26.0), Some(6.0),  Some(60.0), Some(78.5)],
    [Some(1.0),  Some(29.0), Some(15.0), Some(52.0), Some(74.3)],
    [Some(11.0), Some(56.0), Some(8.0),  Some(20.0), Some(104.3)],
    [Some(11.0), Some(31.0), Some(8.0),  Some(47.0), Some(87.6)],
    [Some(7.0),  Some(52.0), Some(6.0),  Some(33.0), Some(95.9)],
    [Some(11.0), Some(55.0), Some(9.0),  Some(22.0), Some(109.2)],
    [Some(3.0),  Some(71.0), Some(17.0), None,       Some(102.7)],
    [Some(1.0),  Some(31.0), Some(22.0), None,       Some(72.5)],
    [Some(2.0),  Some(54.0), Some(18.0), None,       Some(93.1)],
    [None,       None,       Some(4.0),  None,       Some(115.9)],
    [None,       None,       Some(23.0), None,       Some(83.8)],
    [None,       None,       Some(9.0),  None,       Some(113.3)],
    [None,       None,       Some(8.0),  None,       Some(109.4)],
];

/// The 13×5 cement-heat dataset with 15 missing cells (X1 and X2 in rows
/// 10-13, X4 in rows 7-13); X5 is the heat response.
pub fn embedded_hald13() -> Dataset {
    let rows: Vec<Vec<Option<f64>>> = HALD13.iter().map(|r| r.to_vec()).collect();
    Dataset::from_rows(&HALD13_NAMES, &rows).expect("embedded fixture is well formed")
}
