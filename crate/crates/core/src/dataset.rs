//! Labeled observations with a scalar index variable, CSV ingestion,
//! index normalization, t-statistic screening and stratified splitting.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DspcaError, Result};

/// Binary class label. Externally `1` or `2`; internally slot `0` or `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    One,
    Two,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::One, Label::Two];

    pub fn slot(self) -> usize {
        match self {
            Label::One => 0,
            Label::Two => 1,
        }
    }

    pub fn from_slot(slot: usize) -> Label {
        if slot == 0 {
            Label::One
        } else {
            Label::Two
        }
    }

    pub fn value(self) -> u8 {
        self.slot() as u8 + 1
    }

    pub fn other(self) -> Label {
        match self {
            Label::One => Label::Two,
            Label::Two => Label::One,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::One),
            2 => Ok(Label::Two),
            _ => Err(format!("label must be 1 or 2, got {v}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.value()
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub index: f64,
    pub label: Label,
}

/// An immutable collection of observations sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    feature_names: Vec<String>,
    p: usize,
    counts: [usize; 2],
    index_range: (f64, f64),
}

impl Dataset {
    /// Builds a dataset, checking that all observations share one dimension
    /// and carry finite indices. Feature names default to `x1..xp`.
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let p = observations.first().map_or(0, |o| o.features.len());
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::with_names(observations, names)
    }

    pub fn with_names(observations: Vec<Observation>, feature_names: Vec<String>) -> Result<Self> {
        if observations.is_empty() {
            return Err(DspcaError::Format("no observations".into()));
        }
        let p = feature_names.len();
        let mut counts = [0usize; 2];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, o) in observations.iter().enumerate() {
            if o.features.len() != p {
                return Err(DspcaError::DimensionMismatch {
                    expected: p,
                    found: o.features.len(),
                });
            }
            if !o.index.is_finite() {
                return Err(DspcaError::InvalidArgument(format!(
                    "observation {i} has non-finite index {}",
                    o.index
                )));
            }
            counts[o.label.slot()] += 1;
            lo = lo.min(o.index);
            hi = hi.max(o.index);
        }
        Ok(Dataset {
            observations,
            feature_names,
            p,
            counts,
            index_range: (lo, hi),
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n1(&self) -> usize {
        self.counts[0]
    }

    pub fn n2(&self) -> usize {
        self.counts[1]
    }

    pub fn count(&self, label: Label) -> usize {
        self.counts[label.slot()]
    }

    pub fn index_range(&self) -> (f64, f64) {
        self.index_range
    }

    /// Empirical class proportion `n_c / n`.
    pub fn prior(&self, label: Label) -> f64 {
        self.count(label) as f64 / self.len() as f64
    }

    /// Errors unless both classes have at least `min` observations.
    pub fn require_per_class(&self, min: usize) -> Result<()> {
        for c in Label::BOTH {
            if self.count(c) < min {
                return Err(DspcaError::InvalidArgument(format!(
                    "class {c} has {} observations, need at least {min}",
                    self.count(c)
                )));
            }
        }
        Ok(())
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let obs = rows.iter().map(|&i| self.observations[i].clone()).collect();
        Dataset::with_names(obs, self.feature_names.clone())
    }

    /// New dataset restricted to the given feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.p) {
            return Err(DspcaError::InvalidArgument(format!(
                "feature index {bad} out of range for p = {}",
                self.p
            )));
        }
        let obs = self
            .observations
            .iter()
            .map(|o| Observation {
                features: columns.iter().map(|&j| o.features[j]).collect(),
                index: o.index,
                label: o.label,
            })
            .collect();
        let names = columns.iter().map(|&j| self.feature_names[j].clone()).collect();
        Dataset::with_names(obs, names)
    }

    /// Applies `f` to every index value.
    pub fn map_index(&self, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        let obs = self
            .observations
            .iter()
            .map(|o| Observation {
                index: f(o.index),
                ..o.clone()
            })
            .collect();
        Dataset::with_names(obs, self.feature_names.clone())
    }
}

/// Column mapping for CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    pub index_column: String,
    /// Explicit feature columns; `None` means every other column.
    pub feature_columns: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            label_column: "y".into(),
            index_column: "u".into(),
            feature_columns: None,
        }
    }
}

/// Rows read from CSV where the label column may be absent (prediction input).
#[derive(Debug, Clone)]
pub struct QueryTable {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub index: Vec<f64>,
    pub labels: Option<Vec<Label>>,
}

impl QueryTable {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| DspcaError::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(DspcaError::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(value)
}

fn parse_label(raw: &str, row: usize, column: &str) -> Result<Label> {
    let v = parse_number(raw, row, column)?;
    if v == 1.0 {
        Ok(Label::One)
    } else if v == 2.0 {
        Ok(Label::Two)
    } else {
        Err(DspcaError::Schema(format!(
            "row {row}: label `{raw}` in column `{column}` is not 1 or 2"
        )))
    }
}

/// Reads a CSV table. Labels are required when `require_labels` is set and
/// otherwise read only if the label column is present. Row numbers in errors
/// are 1-based data rows (the header is row 0).
pub fn load_table<R: Read>(source: R, schema: &Schema, require_labels: bool) -> Result<QueryTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let index_col = find(&schema.index_column).ok_or_else(|| {
        DspcaError::Schema(format!("index column `{}` not found", schema.index_column))
    })?;
    let label_col = find(&schema.label_column);
    if require_labels && label_col.is_none() {
        return Err(DspcaError::Schema(format!(
            "label column `{}` not found",
            schema.label_column
        )));
    }
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| find(n).ok_or_else(|| DspcaError::Schema(format!("feature column `{n}` not found"))))
            .collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&j| j != index_col && Some(j) != label_col)
            .collect(),
    };
    let feature_names = feature_cols.iter().map(|&j| headers[j].clone()).collect();

    let mut features = Vec::new();
    let mut index = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let x = feature_cols
            .iter()
            .map(|&j| parse_number(&record[j], row, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        index.push(parse_number(&record[index_col], row, &headers[index_col])?);
        if let (Some(col), Some(ls)) = (label_col, labels.as_mut()) {
            ls.push(parse_label(&record[col], row, &headers[col])?);
        }
        features.push(x);
    }
    if index.is_empty() {
        return Err(DspcaError::Format("no observations".into()));
    }
    Ok(QueryTable {
        feature_names,
        features,
        index,
        labels,
    })
}

/// Reads a labeled dataset from CSV.
pub fn load_csv<R: Read>(source: R, schema: &Schema) -> Result<Dataset> {
    let table = load_table(source, schema, true)?;
    let labels = table.labels.expect("labels required");
    let obs = table
        .features
        .into_iter()
        .zip(table.index)
        .zip(labels)
        .map(|((features, index), label)| Observation {
            features,
            index,
            label,
        })
        .collect();
    Dataset::with_names(obs, table.feature_names)
}

/// Writes `u,y,<features>` using shortest round-trip float formatting.
pub fn write_csv<W: Write>(ds: &Dataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["u".to_string(), "y".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    w.write_record(&header)?;
    for o in ds.observations() {
        let mut rec = Vec::with_capacity(ds.p() + 2);
        rec.push(o.index.to_string());
        rec.push(o.label.to_string());
        rec.extend(o.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Affine map of the observed index range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub min: f64,
    pub max: f64,
}

impl IndexMap {
    pub fn identity() -> Self {
        IndexMap { min: 0.0, max: 1.0 }
    }

    pub fn apply(&self, u: f64) -> f64 {
        (u - self.min) / (self.max - self.min)
    }
}

/// Rescales indices to `[0, 1]` and returns the map for reuse on test data.
pub fn normalize_index(ds: &Dataset) -> Result<(Dataset, IndexMap)> {
    let (min, max) = ds.index_range();
    if max <= min {
        return Err(DspcaError::DegenerateIndex(min));
    }
    let map = IndexMap { min, max };
    Ok((ds.map_index(|u| map.apply(u))?, map))
}

fn sorted_mean_var(mut values: Vec<f64>) -> (f64, f64) {
    // Sorting first makes the sums independent of row order.
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, dev.iter().sum::<f64>() / (n - 1.0))
}

/// Welch two-sample t-statistic per feature (class 1 minus class 2).
/// Zero standard error gives `±∞` when the means differ and `0` otherwise.
pub fn welch_t_statistics(ds: &Dataset) -> Result<Vec<f64>> {
    ds.require_per_class(2)?;
    let (n1, n2) = (ds.n1() as f64, ds.n2() as f64);
    let stats = (0..ds.p())
        .map(|j| {
            let column = |c: Label| -> Vec<f64> {
                ds.observations()
                    .iter()
                    .filter(|o| o.label == c)
                    .map(|o| o.features[j])
                    .collect()
            };
            let (m1, v1) = sorted_mean_var(column(Label::One));
            let (m2, v2) = sorted_mean_var(column(Label::Two));
            let se2 = v1 / n1 + v2 / n2;
            let diff = m1 - m2;
            if se2 > 0.0 {
                diff / se2.sqrt()
            } else if diff != 0.0 {
                f64::INFINITY.copysign(diff)
            } else {
                0.0
            }
        })
        .collect();
    Ok(stats)
}

/// Indices of the `p_keep` features with the largest `|t|`, descending;
/// equal statistics keep the lower feature index first.
pub fn t_test_screen(train: &Dataset, p_keep: usize) -> Result<Vec<usize>> {
    if p_keep == 0 || p_keep > train.p() {
        return Err(DspcaError::InvalidArgument(format!(
            "p_keep must be in 1..={}, got {p_keep}",
            train.p()
        )));
    }
    let t = welch_t_statistics(train)?;
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    order.truncate(p_keep);
    Ok(order)
}

/// Reproducibility record for a screening run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenManifest {
    pub p_keep: usize,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub statistics: Vec<f64>,
}

pub fn screen_manifest(train: &Dataset, p_keep: usize) -> Result<ScreenManifest> {
    let selected = t_test_screen(train, p_keep)?;
    let t = welch_t_statistics(train)?;
    Ok(ScreenManifest {
        p_keep,
        selected_names: selected.iter().map(|&j| train.feature_names()[j].clone()).collect(),
        statistics: selected.iter().map(|&j| t[j]).collect(),
        selected,
    })
}

/// Reproducibility record for a stratified split. Row lists refer to the
/// original dataset and are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction_bits: u64,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

impl SplitManifest {
    pub fn test_fraction(&self) -> f64 {
        f64::from_bits(self.test_fraction_bits)
    }
}

/// Per-class sampling without replacement of `round(fraction · n_c)` test rows.
pub fn split_rows(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DspcaError::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for c in Label::BOTH {
        let mut rows: Vec<usize> = ds
            .observations()
            .iter()
            .enumerate()
            .filter(|(_, o)| o.label == c)
            .map(|(i, _)| i)
            .collect();
        let n_test = (test_fraction * rows.len() as f64).round() as usize;
        if rows.len() - n_test.min(rows.len()) < 2 {
            return Err(DspcaError::Split(format!(
                "test fraction {test_fraction} leaves class {c} with {} training observations (need 2)",
                rows.len().saturating_sub(n_test)
            )));
        }
        rows.shuffle(&mut rng);
        test_rows.extend_from_slice(&rows[..n_test]);
        train_rows.extend_from_slice(&rows[n_test..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitManifest {
        seed,
        test_fraction_bits: test_fraction.to_bits(),
        train_rows,
        test_rows,
    })
}

pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let m = split_rows(ds, test_fraction, seed)?;
    let train = ds.subset(&m.train_rows)?;
    let test = ds.subset(&m.test_rows)?;
    Ok((train, test))
}
