//! Right-censored survival datasets and their CSV form.
//!
//! A dataset holds rows of `(T, Delta, Z, X)`: the observed time, event
//! indicator, linear covariates, and deep covariates. The CSV schema is
//! `time,status,z1..zp,x1..xd`; rows with missing or malformed entries are
//! rejected at ingestion with their line number.

use crate::error::{Error, Result};
use crate::num::Scalar;
use ndarray::{s, Array2, ArrayView1};
use std::io::{Read, Write};
use std::path::Path;

/// Which split a dataset belongs to, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitTag {
    #[default]
    Unsplit,
    Train,
    Validation,
    Test,
}

/// Rows of `(time, status, Z, X)` with consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset<T> {
    times: Vec<T>,
    status: Vec<u8>,
    z: Array2<T>,
    x: Array2<T>,
    z_names: Vec<String>,
    x_names: Vec<String>,
    split: SplitTag,
}

/// Borrowed view of one record.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a, T> {
    pub time: T,
    pub event: bool,
    pub z: ArrayView1<'a, T>,
    pub x: ArrayView1<'a, T>,
}

impl<T: Scalar> SurvivalDataset<T> {
    /// Assemble a dataset, validating `T > 0`, `Delta in {0,1}`, finiteness,
    /// and dimension consistency.
    pub fn new(times: Vec<T>, status: Vec<u8>, z: Array2<T>, x: Array2<T>) -> Result<Self> {
        let n = times.len();
        if status.len() != n || z.nrows() != n || x.nrows() != n {
            return Err(Error::Dimension(format!(
                "row counts disagree: {} times, {} status, {} z rows, {} x rows",
                n,
                status.len(),
                z.nrows(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Dimension("need at least one deep covariate".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > T::zero()) || !t.is_finite() {
                return Err(Error::Domain(format!(
                    "row {i}: observed time must be positive and finite, got {t}"
                )));
            }
        }
        if let Some(i) = status.iter().position(|&d| d > 1) {
            return Err(Error::Domain(format!(
                "row {i}: event indicator must be 0 or 1, got {}",
                status[i]
            )));
        }
        if z.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("covariates must be finite".into()));
        }
        let z_names = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            times,
            status,
            z,
            x,
            z_names,
            x_names,
            split: SplitTag::Unsplit,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear covariate dimension `p` (may be zero).
    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// Deep covariate dimension `d`.
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn status(&self) -> &[u8] {
        &self.status
    }

    pub fn z(&self) -> &Array2<T> {
        &self.z
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split
    }

    pub fn set_split_tag(&mut self, tag: SplitTag) {
        self.split = tag;
    }

    pub fn record(&self, i: usize) -> Record<'_, T> {
        Record {
            time: self.times[i],
            event: self.status[i] == 1,
            z: self.z.row(i),
            x: self.x.row(i),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_, T>> {
        (0..self.len()).map(move |i| self.record(i))
    }

    /// Fraction of censored rows (`Delta = 0`).
    pub fn censoring_rate(&self) -> T {
        let censored = self.status.iter().filter(|&&d| d == 0).count();
        T::from_usize(censored).unwrap() / T::from_usize(self.len().max(1)).unwrap()
    }

    /// Smallest and largest observed times.
    pub fn time_range(&self) -> Result<(T, T)> {
        if self.is_empty() {
            return Err(Error::Domain("empty dataset has no time range".into()));
        }
        let mut lo = self.times[0];
        let mut hi = self.times[0];
        for &t in &self.times[1..] {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        Ok((lo, hi))
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let times = rows.iter().map(|&i| self.times[i]).collect();
        let status = rows.iter().map(|&i| self.status[i]).collect();
        let mut z = Array2::zeros((rows.len(), self.p()));
        let mut x = Array2::zeros((rows.len(), self.d()));
        for (out, &i) in rows.iter().enumerate() {
            z.row_mut(out).assign(&self.z.row(i));
            x.row_mut(out).assign(&self.x.row(i));
        }
        Self {
            times,
            status,
            z,
            x,
            z_names: self.z_names.clone(),
            x_names: self.x_names.clone(),
            split: self.split,
        }
    }

    /// Read a dataset from CSV (`time,status,z1..zp,x1..xd`).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[0] != "time" || cols[1] != "status" {
            return Err(Error::Csv {
                line: 1,
                message: format!(
                    "header must start with time,status and carry z*/x* columns, got {cols:?}"
                ),
            });
        }
        let p = cols.iter().filter(|c| c.starts_with('z')).count();
        let d = cols.iter().filter(|c| c.starts_with('x')).count();
        if 2 + p + d != cols.len() {
            return Err(Error::Csv {
                line: 1,
                message: format!("unrecognized columns in {cols:?}"),
            });
        }
        let expected: Vec<String> = std::iter::once("time".to_string())
            .chain(std::iter::once("status".to_string()))
            .chain((1..=p).map(|j| format!("z{j}")))
            .chain((1..=d).map(|j| format!("x{j}")))
            .collect();
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Csv {
                line: 1,
                message: format!("columns must be ordered {expected:?}, got {cols:?}"),
            });
        }

        let mut times = Vec::new();
        let mut status = Vec::new();
        let mut flat = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2; // header is line 1
            let rec = rec.map_err(|e| Error::Csv {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != cols.len() {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {} fields, got {}", cols.len(), rec.len()),
                });
            }
            let parse = |field: &str, name: &str| -> Result<f64> {
                let trimmed = field.trim();
                if trimmed.is_empty() {
                    return Err(Error::Csv {
                        line,
                        message: format!("missing value in column {name}"),
                    });
                }
                trimmed.parse::<f64>().map_err(|_| Error::Csv {
                    line,
                    message: format!("cannot parse {name}={trimmed:?} as a number"),
                })
            };
            let t = parse(&rec[0], "time")?;
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Csv {
                    line,
                    message: format!("time must be positive and finite, got {t}"),
                });
            }
            let s = parse(&rec[1], "status")?;
            if s != 0.0 && s != 1.0 {
                return Err(Error::Csv {
                    line,
                    message: format!("status must be 0 or 1, got {s}"),
                });
            }
            times.push(T::of(t));
            status.push(s as u8);
            for (k, col) in cols.iter().enumerate().skip(2) {
                let v = parse(&rec[k], col)?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        line,
                        message: format!("covariate {col} must be finite, got {v}"),
                    });
                }
                flat.push(T::of(v));
            }
        }
        let n = times.len();
        let all = Array2::from_shape_vec((n, p + d), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let z = all.slice(s![.., 0..p]).to_owned();
        let x = all.slice(s![.., p..p + d]).to_owned();
        Self::new(times, status, z, x)
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Write the dataset in the same CSV schema `read_csv` accepts.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain(std::iter::once("status".to_string()))
            .chain(self.z_names.iter().cloned())
            .chain(self.x_names.iter().cloned())
            .collect();
        w.write_record(&header).map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(2 + self.p() + self.d());
            row.push(format!("{}", self.times[i].as_f64()));
            row.push(format!("{}", self.status[i]));
            for j in 0..self.p() {
                row.push(format!("{}", self.z[[i, j]].as_f64()));
            }
            for j in 0..self.d() {
                row.push(format!("{}", self.x[[i, j]].as_f64()));
            }
            w.write_record(&row).map_err(|e| Error::Csv {
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
