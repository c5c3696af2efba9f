//! Column-oriented numeric datasets.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::VariableSet;
use crate::scalar::Real;
use crate::stats::{mean, sample_variance};

/// Complete numeric data: one column per variable, no missing values.
#[derive(Clone, PartialEq)]
pub struct Dataset<T = f64> {
    vars: Arc<VariableSet>,
    columns: Vec<Vec<T>>,
    n: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(vars: Arc<VariableSet>, columns: Vec<Vec<T>>) -> Result<Self> {
        if columns.len() != vars.len() {
            return Err(Error::InvalidConfig {
                field: "columns".into(),
                message: format!("{} columns for {} variables", columns.len(), vars.len()),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::InvalidConfig {
                    field: format!("columns[{j}]"),
                    message: format!("length {} differs from {}", c.len(), n),
                });
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-finite value in {}", vars.name(j)),
                });
            }
        }
        Ok(Dataset { vars, columns, n })
    }

    pub fn from_named_columns(named: Vec<(&str, Vec<T>)>) -> Result<Self> {
        let vars = VariableSet::new(named.iter().map(|(n, _)| n.to_string()))?;
        Dataset::new(Arc::new(vars), named.into_iter().map(|(_, c)| c).collect())
    }

    pub fn variables(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[T]> {
        Ok(&self.columns[self.vars.require(name)?])
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows picked by index (repeats allowed), e.g. a bootstrap resample.
    pub fn take_rows(&self, rows: &[usize]) -> Dataset<T> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        Dataset {
            vars: Arc::clone(&self.vars),
            columns,
            n: rows.len(),
        }
    }

    pub fn select(&self, cols: &[usize]) -> Dataset<T> {
        Dataset {
            vars: Arc::new(self.vars.select(cols)),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n: self.n,
        }
    }

    /// Columns centered and scaled to unit sample standard deviation.
    /// Constant columns are centered only.
    pub fn standardized(&self) -> Dataset<T> {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let m = mean(c);
                let sd = if c.len() > 1 {
                    sample_variance(c).sqrt()
                } else {
                    T::zero()
                };
                let s = if sd > T::zero() { sd } else { T::one() };
                c.iter().map(|&v| (v - m) / s).collect()
            })
            .collect();
        Dataset {
            vars: Arc::clone(&self.vars),
            columns,
            n: self.n,
        }
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            vars: Arc::clone(&self.vars),
            columns: self
                .columns
                .iter()
                .map(|c| c.iter().map(|v| U::of(v.to_f64_lossy())).collect())
                .collect(),
            n: self.n,
        }
    }

    /// Header row of variable names, then one line per observation.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let vars = Arc::new(VariableSet::new(names)?);
        let mut columns: Vec<Vec<T>> = vec![Vec::new(); vars.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != vars.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", vars.len(), rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse {:?} in column {}", field, vars.name(j)),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value in column {}", vars.name(j)),
                    });
                }
                columns[j].push(T::of(v));
            }
        }
        Dataset::new(vars, columns)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.vars.names())?;
        for i in 0..self.n {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<T: Real> std::fmt::Debug for Dataset<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Dataset({:?}, n = {})", self.vars, self.n)
    }
}
