//! Multichannel recordings, epoch extraction and lagged design matrices.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATE_HZ: f64 = 160.0;

/// A T×n recording: one equal-length column per labelled channel.
///
/// Samples are indexed by integer position; `rate_hz` is carried along for
/// reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
    rate_hz: f64,
}

impl ChannelMatrix {
    pub fn new(labels: Vec<String>, columns: Vec<Vec<f64>>, rate_hz: f64) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::InvalidMatrix(format!(
                "{} labels for {} columns",
                labels.len(),
                columns.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::InvalidMatrix("no channels".into()));
        }
        let len = columns[0].len();
        if len == 0 {
            return Err(Error::InvalidMatrix("zero-length channels".into()));
        }
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidMatrix("channels differ in length".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(Error::InvalidMatrix("empty channel label".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidMatrix(format!("duplicate label `{l}`")));
            }
        }
        for (j, c) in columns.iter().enumerate() {
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericCell { row: i + 1, col: j });
            }
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidMatrix(format!("invalid rate {rate_hz}")));
        }
        Ok(Self {
            columns,
            labels,
            rate_hz,
        })
    }

    /// Number of samples T.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_channels(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn channel_by_label(&self, label: &str) -> Option<&[f64]> {
        self.index_of(label).map(|i| self.channel(i))
    }

    /// Copy of rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::OutOfRange {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(Self {
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
            labels: self.labels.clone(),
            rate_hz: self.rate_hz,
        })
    }

    /// New matrix holding every channel except those at `exclude`.
    pub fn without(&self, exclude: &[usize]) -> Option<Self> {
        let keep: Vec<usize> = (0..self.n_channels())
            .filter(|i| !exclude.contains(i))
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(Self {
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            rate_hz: self.rate_hz,
        })
    }
}

/// Which CSV columns to keep, and in what order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Columns to select; `None` keeps every column in file order.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            columns: None,
            rate_hz: DEFAULT_RATE_HZ,
        }
    }
}

impl CsvSchema {
    pub fn select<S: Into<String>>(cols: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: Some(cols.into_iter().map(Into::into).collect()),
            rate_hz: DEFAULT_RATE_HZ,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ChannelMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| e.in_file(path))
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<ChannelMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let selected: Vec<(usize, String)> = match &schema.columns {
        Some(cols) => cols
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h == c)
                    .map(|i| (i, c.clone()))
                    .ok_or_else(|| Error::MissingColumn(c.clone()))
            })
            .collect::<Result<_>>()?,
        None => header.iter().cloned().enumerate().collect(),
    };
    let mut columns = vec![Vec::new(); selected.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, (col, _)) in selected.iter().enumerate() {
            let cell = rec.get(*col).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::NonNumericCell { row: row + 1, col: *col })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell { row: row + 1, col: *col });
            }
            columns[k].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyFile);
    }
    let labels = selected.into_iter().map(|(_, l)| l).collect();
    ChannelMatrix::new(labels, columns, schema.rate_hz)
}

/// Writes `m` with a header row; values use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_csv(path: impl AsRef<Path>, m: &ChannelMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_csv_to(&mut f, m).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(w: &mut W, m: &ChannelMatrix) -> std::io::Result<()> {
    writeln!(w, "{}", m.labels().join(","))?;
    let mut line = String::new();
    for t in 0..m.len() {
        line.clear();
        for (j, c) in m.channels().iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&c[t].to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// One annotated segment `[start, end)` of a recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochMark {
    pub start: usize,
    pub end: usize,
    pub task: String,
    pub gesture: String,
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<EpochMark>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| Error::from(e).in_file(path))?);
    }
    Ok(out)
}

pub fn write_annotations(path: impl AsRef<Path>, marks: &[EpochMark]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for m in marks {
        w.serialize(m)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub data: ChannelMatrix,
    pub start: usize,
    pub task: String,
    pub gesture: String,
}

/// Ordered epochs cut from one recording; all share labels and rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epochs whose labels match; `None` matches anything.
    pub fn filter(&self, task: Option<&str>, gesture: Option<&str>) -> EpochSet {
        EpochSet {
            epochs: self
                .epochs
                .iter()
                .filter(|e| task.is_none_or(|t| e.task == t))
                .filter(|e| gesture.is_none_or(|g| e.gesture == g))
                .cloned()
                .collect(),
        }
    }
}

/// Shortest epoch the TAR grid search can use: `max_lag + max_delay + 30`.
pub fn min_usable_len(max_lag: usize, max_delay: usize) -> usize {
    max_lag + max_delay + 30
}

pub fn slice_epochs(m: &ChannelMatrix, marks: &[EpochMark], min_len: usize) -> Result<EpochSet> {
    let mut epochs = Vec::with_capacity(marks.len());
    for mark in marks {
        if mark.start >= mark.end || mark.end > m.len() {
            return Err(Error::OutOfRange {
                start: mark.start,
                end: mark.end,
                len: m.len(),
            });
        }
        let len = mark.end - mark.start;
        if len < min_len {
            return Err(Error::EpochTooShort { len, min: min_len });
        }
        epochs.push(Epoch {
            data: m.slice(mark.start, mark.end)?,
            start: mark.start,
            task: mark.task.clone(),
            gesture: mark.gesture.clone(),
        });
    }
    Ok(EpochSet { epochs })
}

/// Responses `Y_t` and rows `(1, Y_{t-1..t-p}, X_{t-1..t-q})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub responses: Vec<f64>,
    pub rows: DMatrix<f64>,
}

/// Lagged design for t = max(p,q) .. T-1 (0-based), i.e. T − max(p,q) rows of
/// width p + q + 1.
pub fn build_design(y: &[f64], x: &[f64], p: usize, q: usize) -> Result<Design> {
    let start = p.max(q);
    design_from(y, x, p, q, start)
}

pub(crate) fn design_from(y: &[f64], x: &[f64], p: usize, q: usize, start: usize) -> Result<Design> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} samples, x has {}",
            y.len(),
            x.len()
        )));
    }
    let t = y.len();
    if t <= start || start < p.max(q) {
        return Err(Error::SeriesTooShort { len: t, need: start });
    }
    let n = t - start;
    let m = 1 + p + q;
    let rows = DMatrix::from_fn(n, m, |i, j| {
        let t = start + i;
        if j == 0 {
            1.0
        } else if j <= p {
            y[t - j]
        } else {
            x[t - (j - p)]
        }
    });
    Ok(Design {
        responses: y[start..].to_vec(),
        rows,
    })
}

/// Sample mean.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divides by n).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
}
