//! KPI series ingestion, chronological splitting, min-max scaling and
//! sliding-window construction.
//!
//! Splitting happens on the raw series and each split is windowed on its
//! own, so no window ever straddles a split boundary.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 4;
pub const DEFAULT_INTERVAL_S: u64 = 300;
pub const CSV_HEADER: [&str; 5] = ["timestamp", "internet", "downstream", "sessions", "vpn"];

/// One of the four KPI channels, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Internet,
    Downstream,
    Sessions,
    Vpn,
}

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::Internet,
        Feature::Downstream,
        Feature::Sessions,
        Feature::Vpn,
    ];

    pub fn index(self) -> usize {
        match self {
            Feature::Internet => 0,
            Feature::Downstream => 1,
            Feature::Sessions => 2,
            Feature::Vpn => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Feature> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        CSV_HEADER[self.index() + 1]
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub timestamp: u64,
    pub internet: f64,
    pub downstream: f64,
    pub sessions: f64,
    pub vpn: f64,
}

impl KpiRecord {
    pub fn values(&self) -> [f64; NUM_FEATURES] {
        [self.internet, self.downstream, self.sessions, self.vpn]
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.values()[feature.index()]
    }
}

/// A validated, evenly sampled KPI series. May be empty (an unused split).
#[derive(Debug, Clone, PartialEq)]
pub struct KpiSeries {
    records: Vec<KpiRecord>,
    interval_s: u64,
}

impl KpiSeries {
    /// Validates ordering, spacing and value ranges. Row indices in errors
    /// are zero-based positions in `records`.
    pub fn new(records: Vec<KpiRecord>, interval_s: u64) -> Result<Self> {
        if interval_s == 0 {
            return Err(Error::Domain("sampling interval must be positive".into()));
        }
        for (row, rec) in records.iter().enumerate() {
            check_values(rec, row)?;
        }
        for (row, pair) in records.windows(2).enumerate() {
            let (prev, next) = (pair[0].timestamp, pair[1].timestamp);
            if next <= prev {
                return Err(Error::Ordering {
                    row: row + 1,
                    message: format!("timestamp {next} does not increase past {prev}"),
                });
            }
            if next - prev != interval_s {
                return Err(Error::Ordering {
                    row: row + 1,
                    message: format!(
                        "gap of {} s between timestamps {prev} and {next}, expected {interval_s} s",
                        next - prev
                    ),
                });
            }
        }
        Ok(Self {
            records,
            interval_s,
        })
    }

    pub fn records(&self) -> &[KpiRecord] {
        &self.records
    }

    pub fn interval_s(&self) -> u64 {
        self.interval_s
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_values(&self, feature: Feature) -> Vec<f64> {
        self.records.iter().map(|r| r.get(feature)).collect()
    }

    fn slice(&self, start: usize, end: usize) -> KpiSeries {
        KpiSeries {
            records: self.records[start..end].to_vec(),
            interval_s: self.interval_s,
        }
    }
}

fn check_values(rec: &KpiRecord, row: usize) -> Result<()> {
    for (feature, value) in Feature::ALL.iter().zip(rec.values()) {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Parse {
                row,
                message: format!("{feature} value {value} must be finite and non-negative"),
            });
        }
    }
    Ok(())
}

/// Reads the five-column KPI CSV. Columns are matched by name; timestamps
/// are shifted so the first record sits at 0. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>) -> Result<KpiSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<KpiSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let mut columns = [usize::MAX; 5];
    for (pos, name) in headers.iter().enumerate() {
        match CSV_HEADER.iter().position(|h| *h == name) {
            Some(slot) if columns[slot] != usize::MAX => {
                return Err(Error::Schema(format!("duplicate column `{name}`")))
            }
            Some(slot) => columns[slot] = pos,
            None => return Err(Error::Schema(format!("unexpected column `{name}`"))),
        }
    }
    if let Some(slot) = columns.iter().position(|c| *c == usize::MAX) {
        return Err(Error::Schema(format!("missing column `{}`", CSV_HEADER[slot])));
    }

    let mut raw = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |slot: usize| rec.get(columns[slot]).unwrap_or("");
        let timestamp: u64 = cell(0).parse().map_err(|_| Error::Parse {
            row,
            message: format!("timestamp `{}` is not a non-negative integer", cell(0)),
        })?;
        let mut vals = [0.0; NUM_FEATURES];
        for (k, v) in vals.iter_mut().enumerate() {
            let text = cell(k + 1);
            *v = text.parse().map_err(|_| Error::Parse {
                row,
                message: format!("{} value `{text}` is not a number", CSV_HEADER[k + 1]),
            })?;
        }
        raw.push(KpiRecord {
            timestamp,
            internet: vals[0],
            downstream: vals[1],
            sessions: vals[2],
            vpn: vals[3],
        });
    }

    for (idx, rec) in raw.iter().enumerate() {
        check_values(rec, idx + 1)?;
    }
    for (idx, pair) in raw.windows(2).enumerate() {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(Error::Ordering {
                row: idx + 2,
                message: format!(
                    "timestamp {} does not increase past {}",
                    pair[1].timestamp, pair[0].timestamp
                ),
            });
        }
    }

    let interval = match raw.as_slice() {
        [a, b, ..] => b.timestamp - a.timestamp,
        _ => DEFAULT_INTERVAL_S,
    };
    let origin = raw.first().map_or(0, |r| r.timestamp);
    for rec in &mut raw {
        rec.timestamp -= origin;
    }
    KpiSeries::new(raw, interval).map_err(|e| match e {
        // shift zero-based record positions to 1-based data rows
        Error::Ordering { row, message } => Error::Ordering {
            row: row + 1,
            message,
        },
        other => other,
    })
}

pub fn write_csv<W: std::io::Write>(series: &KpiSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Domain(format!("csv write failed: {e}"));
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in series.records() {
        wtr.write_record([
            r.timestamp.to_string(),
            r.internet.to_string(),
            r.downstream.to_string(),
            r.sessions.to_string(),
            r.vpn.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()
        .map_err(|e| Error::Domain(format!("csv flush failed: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction_of_train: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Domain(format!(
                "train_fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        if !(self.val_fraction_of_train >= 0.0 && self.val_fraction_of_train < 1.0) {
            return Err(Error::Domain(format!(
                "val_fraction_of_train {} outside [0, 1)",
                self.val_fraction_of_train
            )));
        }
        Ok(())
    }

    /// Row counts (train, val, test) for a series of `len` rows.
    pub fn sizes(&self, len: usize) -> (usize, usize, usize) {
        let head = ((len as f64) * self.train_fraction).round() as usize;
        let head = head.min(len);
        let val = ((head as f64) * self.val_fraction_of_train).round() as usize;
        (head - val, val, len - head)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: KpiSeries,
    pub val: KpiSeries,
    pub test: KpiSeries,
}

/// Chronological train/val/test split. Every non-empty split must hold at
/// least `window + 1` rows; train must be non-empty.
pub fn chrono_split(series: &KpiSeries, spec: &SplitSpec, window: usize) -> Result<Splits> {
    spec.validate()?;
    let (n_train, n_val, n_test) = spec.sizes(series.len());
    let need = window + 1;
    for (name, size) in [("train", n_train), ("validation", n_val), ("test", n_test)] {
        let required = name == "train";
        if (required || size > 0) && size < need {
            let min_total = minimum_length(spec, window);
            return Err(Error::Size(format!(
                "{name} split would hold {size} rows but window {window} needs at least {need}; \
                 series has {} rows, minimum for this split spec is {min_total}",
                series.len()
            )));
        }
    }
    Ok(Splits {
        train: series.slice(0, n_train),
        val: series.slice(n_train, n_train + n_val),
        test: series.slice(n_train + n_val, series.len()),
    })
}

fn minimum_length(spec: &SplitSpec, window: usize) -> usize {
    let need = window + 1;
    (need..)
        .take(1_000_000)
        .find(|&len| {
            let (a, b, c) = spec.sizes(len);
            a >= need && (b == 0 || b >= need) && (c == 0 || c >= need)
        })
        .unwrap_or(usize::MAX)
}

/// Per-feature min-max scaler onto [0, 1]. A constant feature maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: [f64; NUM_FEATURES],
    pub max: [f64; NUM_FEATURES],
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self {
            min: [0.0; NUM_FEATURES],
            max: [1.0; NUM_FEATURES],
        }
    }

    pub fn transform(&self, feature: usize, value: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        if span > 0.0 {
            (value - self.min[feature]) / span
        } else {
            0.0
        }
    }

    pub fn inverse_transform(&self, feature: usize, scaled: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        if span > 0.0 {
            scaled * span + self.min[feature]
        } else {
            self.min[feature]
        }
    }
}

pub fn fit_scaler(train: &KpiSeries) -> Result<FeatureScaler> {
    if train.is_empty() {
        return Err(Error::Fit("cannot fit scaler on an empty series".into()));
    }
    let mut min = [f64::INFINITY; NUM_FEATURES];
    let mut max = [f64::NEG_INFINITY; NUM_FEATURES];
    for rec in train.records() {
        for (k, v) in rec.values().into_iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    Ok(FeatureScaler { min, max })
}

/// Supervised windows: `inputs[i, j, k]` is scaled feature `k` at step
/// `i + j`, `targets[i]` the scaled target feature at step `i + window`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Array3<f64>,
    pub targets: Array1<f64>,
    pub target_feature_index: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// An empty dataset with the given window layout.
    pub fn empty(window: usize, target_feature_index: usize) -> Self {
        Self {
            inputs: Array3::zeros((0, window, NUM_FEATURES)),
            targets: Array1::zeros(0),
            target_feature_index,
        }
    }
}

pub fn make_windows(
    series: &KpiSeries,
    scaler: &FeatureScaler,
    window: usize,
    target_index: usize,
) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(Error::Domain("window must be positive".into()));
    }
    if target_index >= NUM_FEATURES {
        return Err(Error::Domain(format!(
            "target feature index {target_index} outside 0..{NUM_FEATURES}"
        )));
    }
    if series.len() < window + 1 {
        return Err(Error::Size(format!(
            "series of {} rows is shorter than window + 1 = {}",
            series.len(),
            window + 1
        )));
    }
    let scaled: Vec<[f64; NUM_FEATURES]> = series
        .records()
        .iter()
        .map(|r| {
            let v = r.values();
            std::array::from_fn(|k| scaler.transform(k, v[k]))
        })
        .collect();
    let n = series.len() - window;
    let inputs = Array3::from_shape_fn((n, window, NUM_FEATURES), |(i, j, k)| scaled[i + j][k]);
    let targets = Array1::from_shape_fn(n, |i| scaled[i + window][target_index]);
    Ok(WindowedDataset {
        inputs,
        targets,
        target_feature_index: target_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize) -> KpiSeries {
        let records = (0..len)
            .map(|i| {
                let v = i as f64;
                KpiRecord {
                    timestamp: i as u64 * 300,
                    internet: v,
                    downstream: 2.0 * v,
                    sessions: 3.0 * v,
                    vpn: 100.0 - v,
                }
            })
            .collect();
        KpiSeries::new(records, 300).unwrap()
    }

    const GOOD: &str = "timestamp,internet,downstream,sessions,vpn\n\
                        600,1.5,1.0,10,0.1\n\
                        900,2.5,2.0,11,0.2\n\
                        1200,3.5,3.0,12,0.3\n";

    #[test]
    fn csv_three_rows() {
        let s = read_csv(GOOD.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.interval_s(), 300);
        assert_eq!(s.records()[0].timestamp, 0);
        assert_eq!(s.records()[2].timestamp, 600);
        assert_eq!(s.records()[1].sessions, 11.0);
    }

    #[test]
    fn csv_columns_matched_by_name() {
        let text = "vpn,internet,timestamp,sessions,downstream\n0.5,7,0,3,6\n";
        let s = read_csv(text.as_bytes()).unwrap();
        let r = s.records()[0];
        assert_eq!((r.internet, r.downstream, r.sessions, r.vpn), (7.0, 6.0, 3.0, 0.5));
    }

    #[test]
    fn csv_missing_column_is_named() {
        let text = "timestamp,downstream,sessions,vpn\n0,1,1,1\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("internet")), "{err}");
    }

    #[test]
    fn csv_extra_column_rejected() {
        let text = "timestamp,internet,downstream,sessions,vpn,cpu\n0,1,1,1,1,1\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("cpu")), "{err}");
    }

    #[test]
    fn csv_non_numeric_cell_reports_row() {
        let text = "timestamp,internet,downstream,sessions,vpn\n0,1,1,1,1\n300,abc,1,1,1\n";
        match read_csv(text.as_bytes()).unwrap_err() {
            Error::Parse { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("internet"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_decreasing_timestamp_reports_row() {
        let text = "timestamp,internet,downstream,sessions,vpn\n0,1,1,1,1\n300,1,1,1,1\n200,1,1,1,1\n";
        match read_csv(text.as_bytes()).unwrap_err() {
            Error::Ordering { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_gap_is_an_error() {
        let text = "timestamp,internet,downstream,sessions,vpn\n0,1,1,1,1\n300,1,1,1,1\n900,1,1,1,1\n";
        match read_csv(text.as_bytes()).unwrap_err() {
            Error::Ordering { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("gap"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_negative_value_rejected() {
        let text = "timestamp,internet,downstream,sessions,vpn\n0,1,-1,1,1\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn csv_roundtrip_through_writer() {
        let s = ramp(5);
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn split_defaults_on_100_rows() {
        let s = chrono_split(&ramp(100), &SplitSpec::default(), 10).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (64, 16, 20));
        assert_eq!(s.val.records()[0].internet, 64.0);
        assert_eq!(s.test.records()[0].internet, 80.0);
    }

    #[test]
    fn split_identity() {
        let spec = SplitSpec {
            train_fraction: 1.0,
            val_fraction_of_train: 0.0,
        };
        let s = chrono_split(&ramp(10), &spec, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 0, 0));
    }

    #[test]
    fn split_too_short() {
        let err = chrono_split(&ramp(5), &SplitSpec::default(), 10).unwrap_err();
        assert!(matches!(&err, Error::Size(m) if m.contains("minimum")), "{err}");
    }

    #[test]
    fn scaler_basic_and_constant() {
        let records = [0.0, 10.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| KpiRecord {
                timestamp: i as u64 * 300,
                internet: v,
                downstream: 5.0,
                sessions: v * 2.0,
                vpn: 1.0,
            })
            .collect();
        let s = KpiSeries::new(records, 300).unwrap();
        let sc = fit_scaler(&s).unwrap();
        assert_eq!((sc.min[0], sc.max[0]), (0.0, 10.0));
        assert_eq!((sc.min[1], sc.max[1]), (5.0, 5.0));
        assert_eq!(sc.transform(1, 5.0), 0.0);
        assert_eq!(sc.inverse_transform(1, 0.0), 5.0);
        // columns scale independently
        assert_eq!(sc.transform(0, 5.0), 0.5);
        assert_eq!(sc.transform(2, 5.0), 0.25);
    }

    #[test]
    fn scaler_empty_series() {
        let s = KpiSeries::new(vec![], 300).unwrap();
        assert!(matches!(fit_scaler(&s), Err(Error::Fit(_))));
    }

    #[test]
    fn windows_count_and_targets() {
        let s = ramp(12);
        let ds = make_windows(&s, &FeatureScaler::identity(), 10, 0).unwrap();
        assert_eq!(ds.len(), 2);

        let s = ramp(13);
        let sc = fit_scaler(&s).unwrap();
        let ds = make_windows(&s, &sc, 10, 0).unwrap();
        let expected: Vec<f64> = [10.0, 11.0, 12.0].iter().map(|v| sc.transform(0, *v)).collect();
        assert_eq!(ds.targets.to_vec(), expected);
    }

    #[test]
    fn windows_layout_matches_hand_enumeration() {
        // ramp 0..12 under the identity scaler: window i covers steps i..i+9,
        // so inputs[1, 0, 0] is step 1 -> 1.0 and inputs[1, 9, 0] is step 10.
        let ds = make_windows(&ramp(13), &FeatureScaler::identity(), 10, 0).unwrap();
        assert_eq!(ds.inputs[[1, 0, 0]], 1.0);
        assert_eq!(ds.inputs[[1, 9, 0]], 10.0);
        assert_eq!(ds.inputs[[2, 3, 1]], 10.0);
        assert_eq!(ds.inputs[[0, 4, 3]], 96.0);
        assert_eq!(ds.targets[1], 11.0);
    }

    #[test]
    fn windows_too_short() {
        let err = make_windows(&ramp(10), &FeatureScaler::identity(), 10, 0).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
    }

    #[test]
    fn feature_names_roundtrip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
        assert!("cpu".parse::<Feature>().is_err());
    }
}
