use nalgebra::DVector;

use crate::error::{Error, Result};

/// Response series with its design rows. Column 0 of every row is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub y: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub column_names: Vec<String>,
}

impl SeriesData {
    /// Builds a series and checks its invariants.
    pub fn new(y: Vec<f64>, x: Vec<DVector<f64>>, column_names: Vec<String>) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::Data(format!(
                "{} responses but {} design rows",
                y.len(),
                x.len()
            )));
        }
        let m = column_names.len();
        if m == 0 {
            return Err(Error::Data("design has no columns".into()));
        }
        for (t, row) in x.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Data(format!(
                    "row {t} has {} columns, expected {m}",
                    row.len()
                )));
            }
            if row[0] != 1.0 {
                return Err(Error::Data(format!("row {t}: intercept column is not 1")));
            }
            if row.iter().any(|v| !v.is_finite()) || !y[t].is_finite() {
                return Err(Error::Data(format!("row {t} contains a non-finite value")));
            }
        }
        Ok(Self { y, x, column_names })
    }

    /// Builds a series from regressor rows without the intercept, which is prepended.
    pub fn with_intercept(y: Vec<f64>, regressors: &[Vec<f64>], names: &[String]) -> Result<Self> {
        let x = regressors
            .iter()
            .map(|r| {
                let mut v = Vec::with_capacity(r.len() + 1);
                v.push(1.0);
                v.extend_from_slice(r);
                DVector::from_vec(v)
            })
            .collect();
        let mut column_names = vec!["intercept".to_string()];
        column_names.extend(names.iter().cloned());
        Self::new(y, x, column_names)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of design columns including the intercept.
    pub fn dim(&self) -> usize {
        self.column_names.len()
    }

    /// Keeps the intercept and the listed regressor columns (1-based design indices).
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut cols = vec![0usize];
        cols.extend(columns.iter().copied().filter(|&c| c != 0));
        Self {
            y: self.y.clone(),
            x: self
                .x
                .iter()
                .map(|row| DVector::from_iterator(cols.len(), cols.iter().map(|&c| row[c])))
                .collect(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
        }
    }

    /// Appends `lags` lagged-response columns and drops the first `lags` rows.
    pub fn with_lags(&self, lags: usize) -> Result<Self> {
        if lags == 0 {
            return Ok(self.clone());
        }
        if self.len() < lags + 2 {
            return Err(Error::Data(format!(
                "{} rows are too few for {lags} lags",
                self.len()
            )));
        }
        let mut x = Vec::with_capacity(self.len() - lags);
        for t in lags..self.len() {
            let mut row: Vec<f64> = self.x[t].iter().copied().collect();
            row.extend((1..=lags).map(|j| self.y[t - j]));
            x.push(DVector::from_vec(row));
        }
        let mut names = self.column_names.clone();
        names.extend((1..=lags).map(|j| format!("y_lag{j}")));
        Self::new(self.y[lags..].to_vec(), x, names)
    }
}
