use crate::closed_form::{impute_closed_form, ImputationSet};
use crate::dataset::{self, Cell, Dataset};
use crate::error::{Error, Result};

/// Stacks an `n × p` table row by row into one response column followed by
/// `n − 1` row indicators and `p − 1` column indicators (the first row and
/// column are the baseline).
pub fn two_way_design(tbl: &Dataset) -> Result<Dataset> {
    let (n, p) = (tbl.n_rows(), tbl.n_cols());
    if n < 2 || p < 2 {
        return Err(Error::InvalidArgument("a two-way table needs at least two rows and two columns".into()));
    }
    let mut names = vec!["value".to_string()];
    names.extend((1..n).map(|i| format!("row{}", i + 1)));
    names.extend(tbl.names()[1..].iter().map(|c| format!("col_{c}")));
    let width = names.len();
    let mut rows = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            let mut r = vec![Some(0.0); width];
            r[0] = tbl.get(i, j);
            if i > 0 {
                r[i] = Some(1.0);
            }
            if j > 0 {
                r[n - 1 + j] = Some(1.0);
            }
            rows.push(r);
        }
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Dataset::from_rows(&refs, &rows)
}

/// Additive row + column model for a table with missing cells, imputed in
/// closed form on the stacked layout.
///
/// The model treats the columns as exchangeable measurements, which is
/// rarely true for a table of distinct variables; the result carries a note
/// saying so.
pub fn two_way_impute(tbl: &Dataset) -> Result<ImputationSet> {
    dataset::validate(tbl)?;
    let p = tbl.n_cols();
    let stacked = two_way_design(tbl)?;
    let predictors: Vec<usize> = (1..stacked.n_cols()).collect();
    let mut set = impute_closed_form(&stacked, 0, &predictors).map_err(|e| match e {
        Error::Singular(m) => Error::Singular(format!("two-way effects are not estimable: {m}")),
        other => other,
    })?;
    for c in &mut set.cells {
        c.cell = Cell::new(c.cell.row / p, c.cell.row % p);
    }
    set.cells.sort_by_key(|c| (c.cell.var, c.cell.row));
    if !set.cells.is_empty() {
        log::warn!("two-way model: additive effects are likely misspecified for distinct variables");
        set.notes.push(
            "additive row/column model; likely misspecified when columns are distinct variables, \
             and its errors are treated as independent"
                .into(),
        );
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_additive_table() {
        let t = Dataset::from_rows(
            &["a", "b", "c"],
            &[
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(3.0), Some(4.0), None],
            ],
        )
        .unwrap();
        let set = two_way_impute(&t).unwrap();
        assert_eq!(set.cells.len(), 1);
        assert_eq!(set.cells[0].cell, Cell::new(1, 2));
        assert!((set.cells[0].point - 5.0).abs() < 1e-12);
    }

    #[test]
    fn complete_table_gives_empty_set() {
        let t = Dataset::from_rows(&["a", "b"], &[vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(5.0)]]).unwrap();
        assert!(two_way_impute(&t).unwrap().cells.is_empty());
    }

    #[test]
    fn empty_column_is_not_estimable() {
        let t = Dataset::from_rows(
            &["a", "b"],
            &[vec![Some(1.0), None], vec![Some(3.0), None], vec![Some(2.0), None]],
        )
        .unwrap();
        assert!(matches!(two_way_impute(&t), Err(Error::Singular(_))));
    }

    #[test]
    fn design_layout() {
        let t = Dataset::from_rows(
            &["a", "b", "c"],
            &[
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(3.0), Some(4.0), None],
            ],
        )
        .unwrap();
        let s = two_way_design(&t).unwrap();
        assert_eq!(s.names(), ["value", "row2", "col_b", "col_c"]);
        assert_eq!(s.n_rows(), 6);
        // row 2, column c
        assert_eq!(s.get(5, 0), None);
        assert_eq!((s.get(5, 1), s.get(5, 2), s.get(5, 3)), (Some(1.0), Some(0.0), Some(1.0)));
    }
}
