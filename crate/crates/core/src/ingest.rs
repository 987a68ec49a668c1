//! CSV loading, per-channel normalization and sliding-window extraction.

use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations below this are treated as a constant channel.
const DEGENERATE_STD: f64 = 1e-12;

/// Multivariate series, rows are time steps and columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: Array2<f64>,
    channel_names: Vec<String>,
}

impl SeriesMatrix {
    /// Wrap a `T × d` matrix. Channel names default to `ch0..ch{d-1}`.
    pub fn new(values: Array2<f64>, channel_names: Option<Vec<String>>) -> Result<Self> {
        let (t, d) = values.dim();
        if t == 0 || d == 0 {
            return Err(Error::Empty);
        }
        if let Some(((row, column), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: row + 1,
                column: column + 1,
            });
        }
        let channel_names =
            channel_names.unwrap_or_else(|| (0..d).map(|c| format!("ch{c}")).collect());
        if channel_names.len() != d {
            return Err(Error::shape("channel names", d, channel_names.len()));
        }
        Ok(Self {
            values,
            channel_names,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of channels `d`.
    pub fn channels(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    ZscorePerChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
    pub normalize: Normalization,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 20,
            stride: 10,
            normalize: Normalization::ZscorePerChannel,
        }
    }
}

/// Window segments stacked as columns of an `m × n` matrix, `m = window_len · d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    data: Array2<f64>,
    window_starts: Vec<usize>,
    window_len: usize,
}

impl WindowMatrix {
    /// Build directly from a matrix whose columns are already-flattened windows.
    pub fn from_columns(data: Array2<f64>, window_starts: Vec<usize>, window_len: usize) -> Result<Self> {
        if window_starts.len() != data.ncols() {
            return Err(Error::shape("window starts", data.ncols(), window_starts.len()));
        }
        Ok(Self {
            data,
            window_starts,
            window_len,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn window_starts(&self) -> &[usize] {
        &self.window_starts
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Flattened window size `m`.
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// Number of windows `n`.
    pub fn count(&self) -> usize {
        self.data.ncols()
    }
}

/// Read a comma-separated file whose rows are time steps.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<SeriesMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let names = if has_header {
        let header = reader.headers().map_err(csv_err)?;
        Some(header.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut width = names.as_ref().map(Vec::len);
    let mut flat = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged {
                row,
                found: record.len(),
                expected,
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: c + 1,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: c + 1 });
            }
            flat.push(v);
        }
        rows += 1;
    }

    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        return Err(Error::Empty);
    }
    let values = Array2::from_shape_vec((rows, d), flat).expect("row widths checked above");
    SeriesMatrix::new(values, names)
}

/// Write a series in the format [`load_csv`] reads (with header).
pub fn write_csv(series: &SeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    out.push_str(&series.channel_names.join(","));
    out.push('\n');
    for row in series.values.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err)
}

pub fn normalize(series: &SeriesMatrix, mode: Normalization) -> SeriesMatrix {
    match mode {
        Normalization::None => series.clone(),
        Normalization::ZscorePerChannel => {
            let mut values = series.values.clone();
            let t = values.nrows() as f64;
            for mut col in values.columns_mut() {
                let mean = col.sum() / t;
                col.mapv_inplace(|v| v - mean);
                // sample std (n - 1); a single observation has no spread
                let std = if col.len() > 1 {
                    (col.iter().map(|v| v * v).sum::<f64>() / (t - 1.0)).sqrt()
                } else {
                    0.0
                };
                if std >= DEGENERATE_STD {
                    col.mapv_inplace(|v| v / std);
                } else {
                    // what is left after centering is rounding noise
                    col.fill(0.0);
                }
            }
            SeriesMatrix {
                values,
                channel_names: series.channel_names.clone(),
            }
        }
    }
}

/// Number of windows for the given lengths.
pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    (len - window_len) / stride + 1
}

/// Cut the series into windows. Normalization is not applied here.
///
/// Column `j` is `S[start_j .. start_j + window_len, :]` flattened time-major,
/// so entry `τ·d + c` holds channel `c` at offset `τ`. Trailing samples that do
/// not fill a whole window are dropped.
pub fn make_windows(series: &SeriesMatrix, cfg: &WindowConfig) -> Result<WindowMatrix> {
    let len = series.len();
    let d = series.channels();
    if cfg.window_len == 0 || cfg.stride == 0 {
        return Err(Error::InvalidConfig(
            "window length and stride must be positive".into(),
        ));
    }
    if cfg.window_len > len {
        return Err(Error::WindowTooLong {
            window_len: cfg.window_len,
            len,
        });
    }
    let n = window_count(len, cfg.window_len, cfg.stride);
    let m = cfg.window_len * d;
    let window_starts: Vec<usize> = (0..n).map(|j| j * cfg.stride).collect();
    let mut data = Array2::zeros((m, n));
    for (j, &start) in window_starts.iter().enumerate() {
        let slice = series.values.slice(s![start..start + cfg.window_len, ..]);
        // standard layout iterates row-major, i.e. time-major / channel-minor
        for (dst, src) in data.column_mut(j).iter_mut().zip(slice.iter()) {
            *dst = *src;
        }
    }
    Ok(WindowMatrix {
        data,
        window_starts,
        window_len: cfg.window_len,
    })
}

/// Normalize according to `cfg.normalize`, then window.
pub fn prepare(series: &SeriesMatrix, cfg: &WindowConfig) -> Result<WindowMatrix> {
    make_windows(&normalize(series, cfg.normalize), cfg)
}
