//! Loading, normalising, windowing and splitting multivariate series.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Array;

/// Standard deviations below this are raised to it.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}, column `{column}`: missing value")]
    Missing { line: usize, column: String },
    #[error("invalid window request: {0}")]
    Window(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid normalisation request: {0}")]
    Normalization(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    ForwardFill,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Skip the first column (a timestamp) of every row.
    pub skip_first_column: bool,
    pub missing: MissingPolicy,
    pub sample_interval: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            skip_first_column: false,
            missing: MissingPolicy::Reject,
            sample_interval: None,
        }
    }
}

/// Per-variate z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits mean and population standard deviation on columns `0..upto`
    /// of an `[N, T]` matrix. Returns the stats and the indices of variates
    /// whose deviation had to be floored.
    pub fn fit(values: &Array, upto: usize) -> Result<(Self, Vec<usize>)> {
        let t = values.shape()[1];
        if upto == 0 || upto > t {
            return Err(DataError::Normalization(format!(
                "fit range {upto} outside 1..={t}"
            )));
        }
        let n = values.shape()[0];
        let mut mean = Vec::with_capacity(n);
        let mut std = Vec::with_capacity(n);
        let mut floored = Vec::new();
        for i in 0..n {
            let row = &values.row(i)[..upto];
            let m = row.iter().sum::<f64>() / upto as f64;
            let var = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / upto as f64;
            let mut s = var.sqrt();
            if s < STD_FLOOR {
                s = STD_FLOOR;
                floored.push(i);
            }
            mean.push(m);
            std.push(s);
        }
        Ok((Self { mean, std }, floored))
    }

    /// Normalises an `[N, k]` matrix.
    pub fn apply(&self, values: &Array) -> Array {
        self.rowwise(values, |x, m, s| (x - m) / s)
    }

    /// Inverse of [`NormStats::apply`].
    pub fn invert(&self, values: &Array) -> Array {
        self.rowwise(values, |x, m, s| x * s + m)
    }

    fn rowwise(&self, values: &Array, f: impl Fn(f64, f64, f64) -> f64) -> Array {
        let k = values.shape()[1];
        let mut out = values.clone();
        for (i, row) in out.data_mut().chunks_mut(k).enumerate() {
            for x in row {
                *x = f(*x, self.mean[i], self.std[i]);
            }
        }
        out
    }
}

/// Multivariate series stored variates-as-rows: `values` is `[N, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsFrame {
    values: Array,
    pub variate_names: Vec<String>,
    pub sample_interval: Option<String>,
    pub norm_stats: Option<NormStats>,
    pub warnings: Vec<String>,
}

impl MtsFrame {
    pub fn new(values: Array, variate_names: Vec<String>) -> Result<Self> {
        if values.ndim() != 2 || values.shape()[0] != variate_names.len() {
            return Err(DataError::Empty(format!(
                "values of shape {:?} do not match {} names",
                values.shape(),
                variate_names.len()
            )));
        }
        if !values.is_finite() {
            return Err(DataError::Empty("non-finite values".into()));
        }
        Ok(Self {
            values,
            variate_names,
            sample_interval: None,
            norm_stats: None,
            warnings: Vec::new(),
        })
    }

    /// Frame with generated names `v0, v1, ...`.
    pub fn from_array(values: Array) -> Result<Self> {
        let n = values.shape().first().copied().unwrap_or(0);
        Self::new(values, (0..n).map(|i| format!("v{i}")).collect())
    }

    pub fn values(&self) -> &Array {
        &self.values
    }

    pub fn num_variates(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns `start..end` as a new frame with the same metadata.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: slice_columns(&self.values, start, end),
            variate_names: self.variate_names.clone(),
            sample_interval: self.sample_interval.clone(),
            norm_stats: self.norm_stats.clone(),
            warnings: Vec::new(),
        }
    }

    /// Replaces the values with their z-scores under `stats`.
    pub fn normalized_with(&self, stats: &NormStats) -> Self {
        Self {
            values: stats.apply(&self.values),
            norm_stats: Some(stats.clone()),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.variate_names)?;
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.num_variates())
                .map(|i| self.values.at2(i, t).to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn slice_columns(values: &Array, start: usize, end: usize) -> Array {
    let (n, t) = (values.shape()[0], values.shape()[1]);
    debug_assert!(start <= end && end <= t);
    let mut data = Vec::with_capacity(n * (end - start));
    for i in 0..n {
        data.extend_from_slice(&values.row(i)[start..end]);
    }
    Array::new(vec![n, end - start], data).expect("slice shape")
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<MtsFrame> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

/// Parses a header-bearing delimited table whose columns are variates.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<MtsFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DataError::Empty("no header row".into()));
    }
    let skip = usize::from(options.skip_first_column);
    if header.len() <= skip {
        return Err(DataError::Empty("no variate columns".into()));
    }
    let names: Vec<String> = header[skip..].to_vec();
    let n = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = row_idx + 2;
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (i, field) in record.iter().skip(skip).enumerate() {
            let field = field.trim();
            let missing = field.is_empty()
                || field.eq_ignore_ascii_case("nan")
                || field.eq_ignore_ascii_case("na")
                || field.eq_ignore_ascii_case("null");
            let value = if missing {
                match (options.missing, columns[i].last()) {
                    (MissingPolicy::ForwardFill, Some(&prev)) => prev,
                    _ => {
                        return Err(DataError::Missing {
                            line,
                            column: names[i].clone(),
                        })
                    }
                }
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(DataError::NonNumeric {
                            line,
                            column: names[i].clone(),
                            value: field.to_string(),
                        })
                    }
                }
            };
            columns[i].push(value);
        }
    }
    let t = columns[0].len();
    if t == 0 {
        return Err(DataError::Empty("no data rows".into()));
    }
    let values = Array::new(vec![n, t], columns.concat()).expect("column-major fill");
    let mut frame = MtsFrame::new(values, names)?;
    frame.sample_interval = options.sample_interval.clone();
    Ok(frame)
}

/// Fits z-score statistics on the first `train_fraction` of the series and
/// applies them to the whole series.
pub fn zscore_fit_apply(frame: &MtsFrame, train_fraction: f64) -> Result<MtsFrame> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(DataError::Normalization(format!(
            "train fraction {train_fraction} outside (0, 1]"
        )));
    }
    let upto = ((frame.len() as f64 * train_fraction + 1e-9).floor() as usize).max(1);
    let (stats, floored) = NormStats::fit(frame.values(), upto)?;
    let mut out = frame.normalized_with(&stats);
    out.warnings = floored
        .iter()
        .map(|&i| {
            format!(
                "variate `{}` is constant on the training range; std floored at {STD_FLOOR:e}",
                frame.variate_names[i]
            )
        })
        .collect();
    Ok(out)
}

/// Input/target pair cut from a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// `[N, L]`
    pub input: Array,
    /// `[N, H]`
    pub target: Array,
    pub origin_index: usize,
}

pub fn window_count(len: usize, input_len: usize, horizon: usize, stride: usize) -> usize {
    if input_len + horizon > len || stride == 0 {
        0
    } else {
        (len - input_len - horizon) / stride + 1
    }
}

/// Sliding windows at origins `0, stride, 2*stride, ...`.
pub fn make_windows(
    frame: &MtsFrame,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    if stride == 0 {
        return Err(DataError::Window("stride must be at least 1".into()));
    }
    if input_len == 0 {
        return Err(DataError::Window("input length must be at least 1".into()));
    }
    if input_len + horizon > frame.len() {
        return Err(DataError::Window(format!(
            "L + H = {} exceeds series length {}",
            input_len + horizon,
            frame.len()
        )));
    }
    let count = window_count(frame.len(), input_len, horizon, stride);
    Ok((0..count)
        .map(|k| {
            let origin = k * stride;
            WindowPair {
                input: slice_columns(frame.values(), origin, origin + input_len),
                target: slice_columns(
                    frame.values(),
                    origin + input_len,
                    origin + input_len + horizon,
                ),
                origin_index: origin,
            }
        })
        .collect())
}

/// How the series is cut into train / validation / test segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Train and test lengths are `floor(T * ratio)`; validation takes the rest.
    Ratios { train: f64, val: f64, test: f64 },
    /// Fixed 12 / 4 / 4 month segments of 30-day months used by the ETT
    /// benchmarks, for a series sampled `steps_per_hour` times an hour.
    Ett { steps_per_hour: usize },
}

impl Default for SplitScheme {
    fn default() -> Self {
        Self::Ratios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Contiguous chronological segments of one frame.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: MtsFrame,
    pub val: MtsFrame,
    pub test: MtsFrame,
    /// Start offset of each segment (before any lookback) in the source frame.
    pub offsets: [usize; 3],
    /// Steps of the previous segment prepended to val and test.
    pub lookback: usize,
}

impl Split {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    /// Rejects splits in which some segment cannot hold one window.
    pub fn check_trainable(&self, input_len: usize, horizon: usize) -> Result<()> {
        for (name, seg) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if seg.len() < input_len + horizon {
                return Err(DataError::Split(format!(
                    "{name} segment has {} steps, fewer than L + H = {}",
                    seg.len(),
                    input_len + horizon
                )));
            }
        }
        Ok(())
    }
}

/// Partitions the series in order, without overlap.
pub fn chrono_split(frame: &MtsFrame, ratios: [f64; 3]) -> Result<Split> {
    split_with(
        frame,
        SplitScheme::Ratios {
            train: ratios[0],
            val: ratios[1],
            test: ratios[2],
        },
        0,
    )
}

/// Splits by `scheme`; the validation and test frames additionally carry the
/// last `lookback` steps of the preceding segment as input context.
pub fn split_with(frame: &MtsFrame, scheme: SplitScheme, lookback: usize) -> Result<Split> {
    let t = frame.len();
    let (train, val, test) = match scheme {
        SplitScheme::Ratios { train, val, test } => {
            if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r))
                || ((train + val + test) - 1.0).abs() > 1e-9
            {
                return Err(DataError::Split(format!(
                    "ratios ({train}, {val}, {test}) must be non-negative and sum to 1"
                )));
            }
            let n_train = (t as f64 * train + 1e-9).floor() as usize;
            let n_test = (t as f64 * test + 1e-9).floor() as usize;
            (n_train, t - n_train - n_test, n_test)
        }
        SplitScheme::Ett { steps_per_hour } => {
            let month = 30 * 24 * steps_per_hour;
            if 20 * month > t {
                return Err(DataError::Split(format!(
                    "ETT split needs {} steps, series has {t}",
                    20 * month
                )));
            }
            (12 * month, 4 * month, 4 * month)
        }
    };
    if train == 0 {
        return Err(DataError::Split("training segment is empty".into()));
    }
    if lookback > train {
        return Err(DataError::Split(format!(
            "lookback {lookback} exceeds the training segment"
        )));
    }
    let back = |start: usize| start.saturating_sub(lookback);
    let (s_val, s_test) = (train, train + val);
    Ok(Split {
        train: frame.slice(0, train),
        val: frame.slice(if val == 0 { s_val } else { back(s_val) }, s_val + val),
        test: frame.slice(if test == 0 { s_test } else { back(s_test) }, s_test + test),
        offsets: [0, s_val, s_test],
        lookback,
    })
}

/// Writes forecasts as CSV: `origin_index, step, <variates...>`, one row per
/// forecast step.
pub fn write_predictions<W: Write>(
    writer: W,
    variate_names: &[String],
    forecasts: &[(usize, Array)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["origin_index".to_string(), "step".to_string()];
    header.extend(variate_names.iter().cloned());
    w.write_record(&header)?;
    for (origin, pred) in forecasts {
        let (n, h) = (pred.shape()[0], pred.shape()[1]);
        for step in 0..h {
            let mut row = vec![origin.to_string(), step.to_string()];
            row.extend((0..n).map(|i| pred.at2(i, step).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
