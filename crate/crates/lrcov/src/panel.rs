//! Time-series panels and their CSV round-trip.
//!
//! A panel holds n observations of a p-dimensional series as an n x p array:
//! rows are time points in order, columns are coordinates. All estimators
//! consume the centered view, so centering lives here too.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Observed panel: `data[(t, i)]` is coordinate i at time t.
#[derive(Debug, Clone)]
pub struct TimeSeriesPanel {
    data: Array2<f64>,
}

impl TimeSeriesPanel {
    /// Validates shape (n >= 2, p >= 1) and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, p) = data.dim();
        if n < 2 {
            return Err(Error::Config(format!(
                "panel needs at least 2 observations, got {n}"
            )));
        }
        if p < 1 {
            return Err(Error::Config("panel needs at least 1 column".into()));
        }
        for ((t, i), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "non-finite value {v} at observation {t}, column {i}"
                )));
            }
        }
        Ok(TimeSeriesPanel { data })
    }

    pub fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Column means.
    pub fn means(&self) -> Array1<f64> {
        let n = self.n_obs() as f64;
        self.data.sum_axis(ndarray::Axis(0)) / n
    }

    /// Subtract each column's mean.
    pub fn center(&self) -> CenteredPanel {
        let means = self.means();
        let mut centered = self.data.clone();
        for mut row in centered.rows_mut() {
            row -= &means;
        }
        CenteredPanel {
            data: centered,
            means,
        }
    }

    /// Panel restricted to a subset of time points, kept in time order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<TimeSeriesPanel> {
        if rows.len() < 2 {
            return Err(Error::Config(format!(
                "row selection needs at least 2 observations, got {}",
                rows.len()
            )));
        }
        let p = self.n_series();
        let mut out = Array2::zeros((rows.len(), p));
        for (k, &t) in rows.iter().enumerate() {
            if t >= self.n_obs() {
                return Err(Error::Config(format!(
                    "row index {t} out of range for {} observations",
                    self.n_obs()
                )));
            }
            out.row_mut(k).assign(&self.data.row(t));
        }
        TimeSeriesPanel::new(out)
    }
}

/// Centered panel: columns have exact-arithmetic mean zero.
#[derive(Debug, Clone)]
pub struct CenteredPanel {
    data: Array2<f64>,
    means: Array1<f64>,
}

impl CenteredPanel {
    pub fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn means(&self) -> &Array1<f64> {
        &self.means
    }

    /// Centered column as a slice-backed vector.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.data.column(i).to_vec()
    }
}

/// Read a numeric CSV into a panel. Comma separator, '.' decimal point,
/// no quoting. A first line with any unparseable field is treated as a
/// header; parse errors after that are reported with 1-based (row, column)
/// positions counted over data rows.
pub fn load_csv(path: &Path) -> Result<TimeSeriesPanel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_first_line = false;

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();

        if !saw_first_line {
            saw_first_line = true;
            // Header detection: skip the first line when any field fails to
            // parse as a number.
            if fields.iter().any(|f| f.trim().parse::<f64>().is_err()) {
                width = Some(fields.len());
                continue;
            }
        }

        let data_row = rows.len() + 1;
        match width {
            None => width = Some(fields.len()),
            Some(w) => {
                if fields.len() != w {
                    return Err(Error::Parse {
                        row: data_row,
                        col: fields.len().min(w) + 1,
                        message: format!(
                            "expected {w} fields, found {} (line {})",
                            fields.len(),
                            line_no + 1
                        ),
                    });
                }
            }
        }

        let mut parsed = Vec::with_capacity(fields.len());
        for (j, field) in fields.iter().enumerate() {
            let t = field.trim();
            if t.is_empty() {
                return Err(Error::Parse {
                    row: data_row,
                    col: j + 1,
                    message: "missing value".into(),
                });
            }
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                row: data_row,
                col: j + 1,
                message: format!("cannot parse {t:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: data_row,
                    col: j + 1,
                    message: format!("non-finite value {t:?}"),
                });
            }
            parsed.push(v);
        }
        rows.push(parsed);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "no data rows".into(),
        });
    }
    let n = rows.len();
    let p = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((n, p), flat)
        .expect("row width already validated");
    TimeSeriesPanel::new(data)
}

/// Write a numeric matrix as CSV with enough digits to round-trip f64
/// exactly (17 significant digits).
pub fn write_csv(path: &Path, data: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if let Some(names) = header {
        writeln!(w, "{}", names.join(",")).map_err(|e| Error::io(path, e))?;
    }
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// 17 significant digits: lossless for every finite f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
