//! WDBC (Wisconsin Diagnostic Breast Cancer) ingestion and seeded splitting.
//!
//! Expected layout: one sample per line, `id,diagnosis,f1,...,f30` with
//! diagnosis `M` (malignant, class 1) or `B` (benign, class 0). No header.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, SeedStreams};

pub const WDBC_FEATURES: usize = 30;
pub const WDBC_SAMPLES: usize = 569;
pub const WDBC_BENIGN: usize = 357;
pub const WDBC_MALIGNANT: usize = 212;

pub const BENIGN: usize = 0;
pub const MALIGNANT: usize = 1;
pub const WDBC_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// `(benign, malignant)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let m = self.labels.iter().filter(|&&l| l == MALIGNANT).count();
        (self.len() - m, m)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn load_wdbc(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_wdbc(&text)
}

pub fn parse_wdbc(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::data(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != WDBC_FEATURES + 2 {
            return Err(Error::data(
                line,
                format!(
                    "expected {} fields, found {}",
                    WDBC_FEATURES + 2,
                    record.len()
                ),
            ));
        }
        let label = match &record[1] {
            "M" => MALIGNANT,
            "B" => BENIGN,
            other => {
                return Err(Error::data(
                    line,
                    format!("unknown diagnosis code {other:?}"),
                ))
            }
        };
        let row = record
            .iter()
            .skip(2)
            .enumerate()
            .map(|(f, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::data(line, format!("feature {} is not a number: {s:?}", f + 1))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::data(0, "no samples"));
    }
    let ds = Dataset { features, labels };
    if ds.len() == WDBC_SAMPLES && ds.class_counts() != (WDBC_BENIGN, WDBC_MALIGNANT) {
        let (b, m) = ds.class_counts();
        return Err(Error::data(
            0,
            format!("{WDBC_SAMPLES}-sample file has {b} benign / {m} malignant, expected {WDBC_BENIGN} / {WDBC_MALIGNANT}"),
        ));
    }
    Ok(ds)
}

/// Seeded shuffle, then the first `floor(fraction × n)` samples train.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    split_with(ds, fraction, &SeedStreams::new(seed))
}

pub fn split_with(
    ds: &Dataset,
    fraction: f64,
    streams: &SeedStreams,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_train = (fraction * ds.len() as f64).floor() as usize;
    if n_train == 0 || n_train == ds.len() {
        return Err(Error::param(format!(
            "split of {} samples at {fraction} leaves an empty side",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut streams.stream(rng::SPLIT));
    Ok((ds.subset(&idx[..n_train]), ds.subset(&idx[n_train..])))
}
