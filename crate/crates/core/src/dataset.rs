//! CSV ingestion, chronological splits, and sliding-window batching.

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Fractions of the series assigned to train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatio {
    /// 6:2:2, used for the ETT family.
    pub const ETT: SplitRatio = SplitRatio { train: 0.6, val: 0.2, test: 0.2 };
    /// 7:1:2, used for Weather, Electricity and Traffic.
    pub const CUSTOM: SplitRatio = SplitRatio { train: 0.7, val: 0.1, test: 0.2 };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ratio = SplitRatio { train, val, test };
        ratio.validate()?;
        Ok(ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "split ratio components must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadSplitRatio(sum));
        }
        Ok(())
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::ETT
    }
}

/// A raw multivariate series, `values` is time x features.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    /// Contents of the `date` column when the file has one.
    pub timestamps: Option<Vec<String>>,
    pub split_ratio: SplitRatio,
}

impl SeriesDataset {
    pub fn new(values: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        if values.ncols() == 0 || values.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} feature names",
                values.ncols(),
                feature_names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("series contains non-finite values".into()));
        }
        Ok(SeriesDataset {
            values,
            feature_names,
            timestamps: None,
            split_ratio: SplitRatio::default(),
        })
    }

    pub fn with_split_ratio(mut self, ratio: SplitRatio) -> Result<Self> {
        ratio.validate()?;
        self.split_ratio = ratio;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Split boundaries for this dataset's ratio.
    pub fn split(&self, lookback: usize, horizon: usize) -> Result<SplitRanges> {
        split(self.len(), self.split_ratio, lookback, horizon)
    }
}

/// Reads a headered CSV. A first column named `date` is kept as provenance
/// and excluded from the numeric matrix; every other cell must parse as f64.
pub fn load_csv(path: impl AsRef<Path>, date_column: Option<&str>) -> Result<SeriesDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Csv(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let date_name = date_column.unwrap_or("date");
    let date_idx = match headers.first() {
        Some(first) if first.eq_ignore_ascii_case(date_name) => Some(0),
        _ => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != date_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Csv("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut timestamps = date_idx.map(|_| Vec::new());
    let mut rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == date_idx {
                if let Some(ts) = timestamps.as_mut() {
                    ts.push(cell.to_string());
                }
                continue;
            }
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or(Error::NonNumericCell { row, col })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let values = Array2::from_shape_vec((rows, feature_names.len()), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(SeriesDataset {
        values,
        feature_names,
        timestamps,
        split_ratio: SplitRatio::default(),
    })
}

/// Index ranges of the three chronological splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Cumulative `floor(ratio * total)` boundaries. Validation and test start
/// `lookback` points early so their first window forecasts from the boundary.
pub fn split(total: usize, ratio: SplitRatio, lookback: usize, horizon: usize) -> Result<SplitRanges> {
    ratio.validate()?;
    // The small offset keeps e.g. (0.7 + 0.1) * 10 from flooring to 7.
    let boundary = |frac: f64| ((frac * total as f64) + 1e-9).floor() as usize;
    let b1 = boundary(ratio.train).min(total);
    let b2 = boundary(ratio.train + ratio.val).min(total);
    let ranges = SplitRanges {
        train: 0..b1,
        val: b1.saturating_sub(lookback)..b2,
        test: b2.saturating_sub(lookback)..total,
    };
    let needed = lookback + horizon;
    for (name, r) in [("train", &ranges.train), ("val", &ranges.val), ("test", &ranges.test)] {
        if r.len() < needed {
            return Err(Error::SplitTooShort { split: name, len: r.len(), needed });
        }
    }
    Ok(ranges)
}

/// Start offsets of every full (lookback, horizon) window inside a range of
/// `range_len` points.
pub fn make_windows(range_len: usize, lookback: usize, horizon: usize, stride: usize) -> Vec<usize> {
    assert!(stride >= 1, "stride must be at least 1");
    let span = lookback + horizon;
    if range_len < span {
        return Vec::new();
    }
    (0..=range_len - span).step_by(stride).collect()
}

/// Lookback/horizon tensors for B windows over all D features.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// B x D x L
    pub x: Array3<f64>,
    /// B x D x H
    pub y: Array3<f64>,
    /// (offset within the split, feature) for every instance, batch-major.
    pub origin: Vec<(usize, usize)>,
}

impl WindowBatch {
    pub fn n_windows(&self) -> usize {
        self.x.len_of(Axis(0))
    }

    /// Flattens to B*D univariate instances, row `b*D + d`.
    pub fn flatten(&self) -> InstanceBatch {
        let (b, d, l) = self.x.dim();
        let h = self.y.len_of(Axis(2));
        let x = self
            .x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * d, l))
            .expect("contiguous");
        let y = self
            .y
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * d, h))
            .expect("contiguous");
        let feature = (0..b * d).map(|i| i % d).collect();
        InstanceBatch { x, y, feature }
    }
}

/// Univariate instances: row i of `x` is a lookback, row i of `y` its horizon,
/// `feature[i]` the originating series column (used for per-feature affine).
#[derive(Debug, Clone)]
pub struct InstanceBatch {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub feature: Vec<usize>,
}

impl InstanceBatch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> InstanceBatch {
        InstanceBatch {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            feature: rows.iter().map(|&r| self.feature[r]).collect(),
        }
    }
}

/// Sliding windows over one contiguous range of a series.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    values: ArrayView2<'a, f64>,
    lookback: usize,
    horizon: usize,
    offsets: Vec<usize>,
}

impl<'a> WindowSet<'a> {
    pub fn new(values: ArrayView2<'a, f64>, range: Range<usize>, lookback: usize, horizon: usize, stride: usize) -> Self {
        let values = values.slice_move(s![range, ..]);
        let offsets = make_windows(values.nrows(), lookback, horizon, stride);
        WindowSet { values, lookback, horizon, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Builds the batch for the given window offsets.
    pub fn gather(&self, offsets: &[usize]) -> WindowBatch {
        let (l, h, d) = (self.lookback, self.horizon, self.values.ncols());
        let mut x = Array3::zeros((offsets.len(), d, l));
        let mut y = Array3::zeros((offsets.len(), d, h));
        let mut origin = Vec::with_capacity(offsets.len() * d);
        for (b, &o) in offsets.iter().enumerate() {
            let past = self.values.slice(s![o..o + l, ..]);
            let future = self.values.slice(s![o + l..o + l + h, ..]);
            x.slice_mut(s![b, .., ..]).assign(&past.t());
            y.slice_mut(s![b, .., ..]).assign(&future.t());
            origin.extend((0..d).map(|f| (o, f)));
        }
        WindowBatch { x, y, origin }
    }

    /// Batches of `batch_size` windows; deterministic for a given (shuffle, seed).
    pub fn batches(&self, batch_size: usize, shuffle: bool, seed: u64) -> impl Iterator<Item = WindowBatch> + use<'_, 'a> {
        batch_order(self.offsets.clone(), batch_size, shuffle, seed)
            .into_iter()
            .map(move |chunk| self.gather(&chunk))
    }

    /// All windows flattened into one instance set.
    pub fn instances(&self) -> InstanceBatch {
        self.gather(&self.offsets).flatten()
    }
}

/// Partitions `items` into consecutive chunks of `batch_size`, optionally
/// after a seeded shuffle. The final chunk may be short.
pub fn batch_order<T>(mut items: Vec<T>, batch_size: usize, shuffle: bool, seed: u64) -> Vec<Vec<T>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    if shuffle {
        items.shuffle(&mut stream_rng(seed, 0));
    }
    let mut out = Vec::with_capacity(items.len().div_ceil(batch_size));
    let mut iter = items.into_iter().peekable();
    while iter.peek().is_some() {
        out.push(iter.by_ref().take(batch_size).collect());
    }
    out
}

/// Per-feature z-scoring with statistics from a fitting range (the train
/// split), the usual preprocessing for the long-horizon benchmarks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(values: ArrayView2<f64>) -> Self {
        let n = values.nrows().max(1) as f64;
        let mean: Vec<f64> = values.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let std = values
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }
}
