//! Dataset ingestion, cleaning, splitting, and synthetic data generation.
//!
//! The on-disk format is a comma-separated file with the exact header
//! `soup,main_dish,side_dish,side_helper,beverage,weekday,holiday,season,demand`.
//! The eight label columns are free text matched against codebooks at
//! cleaning/encoding time; `demand` must be a nonnegative integer.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::distributions::{Bernoulli, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::encoding::{build_codebooks, Codebook, FEATURE_COUNT};
use crate::error::{Error, Result};

/// Column names of the eight input features, in file order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "soup",
    "main_dish",
    "side_dish",
    "side_helper",
    "beverage",
    "weekday",
    "holiday",
    "season",
];

/// One service day: the five menu slots, the calendar features, and the
/// observed number of meals served.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub soup: String,
    pub main_dish: String,
    pub side_dish: String,
    pub side_helper: String,
    pub beverage: String,
    pub weekday: String,
    pub holiday: String,
    pub season: String,
    pub demand: u32,
}

impl RawRow {
    /// Feature field by column index (see [`FEATURE_NAMES`]).
    pub fn feature(&self, idx: usize) -> &str {
        match idx {
            0 => &self.soup,
            1 => &self.main_dish,
            2 => &self.side_dish,
            3 => &self.side_helper,
            4 => &self.beverage,
            5 => &self.weekday,
            6 => &self.holiday,
            7 => &self.season,
            _ => panic!("feature index {idx} out of range"),
        }
    }
}

/// An ordered collection of raw rows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    rows: Vec<RawRow>,
}

impl Dataset {
    pub fn new(rows: Vec<RawRow>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[RawRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a dataset, enforcing the exact header and collecting every
/// malformed row (wrong field count, non-integer demand) into one error.
/// Row numbers in errors are 1-based data rows, not counting the header.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => Error::Csv(e),
        })?;

    let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["demand"]).collect();
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(Error::HeaderMismatch {
            expected: expected.join(","),
            found: found.join(","),
        });
    }

    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rowno = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                bad.push((rowno, e.to_string()));
                continue;
            }
        };
        if record.len() != FEATURE_COUNT + 1 {
            bad.push((rowno, format!("expected 9 fields, got {}", record.len())));
            continue;
        }
        let demand = match record[FEATURE_COUNT].parse::<u32>() {
            Ok(d) => d,
            Err(_) => {
                bad.push((
                    rowno,
                    format!("demand `{}` is not a nonnegative integer", &record[FEATURE_COUNT]),
                ));
                continue;
            }
        };
        rows.push(RawRow {
            soup: record[0].to_string(),
            main_dish: record[1].to_string(),
            side_dish: record[2].to_string(),
            side_helper: record[3].to_string(),
            beverage: record[4].to_string(),
            weekday: record[5].to_string(),
            holiday: record[6].to_string(),
            season: record[7].to_string(),
            demand,
        });
    }
    if !bad.is_empty() {
        return Err(Error::RowParse(bad));
    }
    Ok(Dataset::new(rows))
}

/// Writes a dataset in the format accepted by [`read_csv`].
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
    })?;
    let header: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["demand"]).collect();
    writer.write_record(&header)?;
    for row in ds.rows() {
        let demand = row.demand.to_string();
        let mut record: Vec<&str> = (0..FEATURE_COUNT).map(|i| row.feature(i)).collect();
        record.push(&demand);
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Why a row was removed by [`clean`].
#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    MissingField { feature: String },
    UnknownLabel { feature: String, label: String },
    Outlier { z: f64 },
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::MissingField { feature } => write!(f, "empty `{feature}` field"),
            DropReason::UnknownLabel { feature, label } => {
                write!(f, "unknown `{feature}` label `{label}`")
            }
            DropReason::Outlier { z } => write!(f, "demand outlier (|z| = {z:.2})"),
        }
    }
}

/// Outcome of a [`clean`] pass. Dropped entries carry the 1-based data row
/// number in the input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    pub input_rows: usize,
    pub kept_rows: usize,
    pub dropped: Vec<(usize, DropReason)>,
}

impl CleanReport {
    pub fn summary(&self) -> String {
        let malformed = self
            .dropped
            .iter()
            .filter(|(_, r)| !matches!(r, DropReason::Outlier { .. }))
            .count();
        let outliers = self.dropped.len() - malformed;
        format!(
            "kept {} of {} rows; dropped {} malformed, {} demand outliers",
            self.kept_rows, self.input_rows, malformed, outliers
        )
    }
}

/// Removes defective rows, then demand outliers.
///
/// A row is defective when a feature field is empty or its label is absent
/// from the matching codebook. Surviving rows are grouped by the
/// (weekday, holiday) label pair and a row is an outlier when its demand
/// sits more than `k` population standard deviations from its group mean.
/// Groups with fewer than 3 rows or with near-zero spread are left alone,
/// so e.g. all-zero holiday groups survive intact.
pub fn clean(ds: &Dataset, codebooks: &[Codebook], k: f64) -> Result<(Dataset, CleanReport)> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParam(format!(
            "outlier threshold must be positive and finite, got {k}"
        )));
    }
    if codebooks.len() != FEATURE_COUNT {
        return Err(Error::ShapeMismatch(format!(
            "expected {FEATURE_COUNT} codebooks, got {}",
            codebooks.len()
        )));
    }

    let mut dropped: Vec<(usize, DropReason)> = Vec::new();
    let mut survivors: Vec<usize> = Vec::new();
    'rows: for (i, row) in ds.rows().iter().enumerate() {
        for (f, cb) in codebooks.iter().enumerate() {
            let value = row.feature(f);
            if value.trim().is_empty() {
                dropped.push((
                    i + 1,
                    DropReason::MissingField {
                        feature: cb.feature().to_string(),
                    },
                ));
                continue 'rows;
            }
            if !cb.contains(value) {
                dropped.push((
                    i + 1,
                    DropReason::UnknownLabel {
                        feature: cb.feature().to_string(),
                        label: value.to_string(),
                    },
                ));
                continue 'rows;
            }
        }
        survivors.push(i);
    }

    let mut groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for &i in &survivors {
        let row = &ds.rows()[i];
        groups
            .entry((row.weekday.as_str(), row.holiday.as_str()))
            .or_default()
            .push(i);
    }

    let mut outliers: Vec<(usize, DropReason)> = Vec::new();
    for members in groups.values() {
        if members.len() < 3 {
            continue;
        }
        let n = members.len() as f64;
        let mean = members
            .iter()
            .map(|&i| f64::from(ds.rows()[i].demand))
            .sum::<f64>()
            / n;
        let var = members
            .iter()
            .map(|&i| {
                let d = f64::from(ds.rows()[i].demand) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let sigma = var.sqrt();
        if sigma <= 1e-9 {
            continue;
        }
        for &i in members {
            let z = (f64::from(ds.rows()[i].demand) - mean).abs() / sigma;
            if z > k {
                outliers.push((i + 1, DropReason::Outlier { z }));
            }
        }
    }

    let outlier_rows: Vec<usize> = outliers.iter().map(|(r, _)| *r - 1).collect();
    let kept: Vec<RawRow> = survivors
        .iter()
        .filter(|i| !outlier_rows.contains(i))
        .map(|&i| ds.rows()[i].clone())
        .collect();

    dropped.extend(outliers);
    dropped.sort_by_key(|(rowno, _)| *rowno);

    if kept.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    let report = CleanReport {
        input_rows: ds.len(),
        kept_rows: kept.len(),
        dropped,
    };
    Ok((Dataset::new(kept), report))
}

/// Splits into (train, test) with `round(fraction * n)` training rows.
/// Membership is decided by a seeded shuffle; each partition then keeps the
/// original row order. The same `(fraction, seed)` always yields the same
/// partition.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = ds.len();
    let train_size = (fraction * n as f64).round() as usize;
    if train_size == 0 || train_size == n {
        return Err(Error::InvalidParam(format!(
            "split of {n} rows at fraction {fraction} leaves an empty partition"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut train_idx = indices[..train_size].to_vec();
    let mut test_idx = indices[train_size..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize]| Dataset::new(idx.iter().map(|&i| ds.rows()[i].clone()).collect());
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Knobs for [`synthesize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthProfile {
    /// Largest number of meals the refectory can serve on one day.
    pub capacity: u32,
    /// Probability that a generated day is a holiday (demand 0).
    pub holiday_rate: f64,
    /// Standard deviation of the Gaussian noise added to the demand score.
    pub noise_std: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            capacity: 110,
            holiday_rate: 0.08,
            noise_std: 0.03,
        }
    }
}

/// Latent demand score in `[0, 1]` driving the synthetic generator.
///
/// Takes the encoded (normalized) feature vector of a row. The shape mixes
/// smooth single-feature effects with a main-dish/beverage interaction and
/// a weekend drop so that the mapping is learnable but not linear.
fn demand_score(x: &[f64; FEATURE_COUNT]) -> f64 {
    use std::f64::consts::PI;
    let (soup, main, side, helper, bev, weekday, season) =
        (x[0], x[1], x[2], x[3], x[4], x[5], x[7]);
    let weekend = 1.0 / (1.0 + (-8.0 * (weekday - 0.7)).exp());
    let score = 0.45 + 0.18 * (PI * main).sin() * (0.5 + 0.5 * bev)
        + 0.10 * (PI * soup).cos()
        + 0.08 * side * (1.0 - helper)
        - 0.20 * weekend
        + 0.06 * (2.0 * PI * season).sin();
    score.clamp(0.0, 1.0)
}

/// Generates `n` service days with seeded randomness. Weekdays cycle in
/// calendar order and seasons change in four contiguous blocks; menu slots
/// are drawn uniformly. Holiday rows always have demand 0.
pub fn synthesize(profile: &SynthProfile, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParam("cannot synthesize 0 rows".into()));
    }
    if profile.capacity == 0 {
        return Err(Error::InvalidParam("capacity must be positive".into()));
    }
    if !(profile.holiday_rate >= 0.0 && profile.holiday_rate < 1.0) {
        return Err(Error::InvalidParam(format!(
            "holiday rate must be in [0, 1), got {}",
            profile.holiday_rate
        )));
    }
    if !(profile.noise_std >= 0.0) || !profile.noise_std.is_finite() {
        return Err(Error::InvalidParam(format!(
            "noise std must be nonnegative, got {}",
            profile.noise_std
        )));
    }

    let codebooks = build_codebooks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holiday = Bernoulli::new(profile.holiday_rate)
        .map_err(|e| Error::InvalidParam(format!("holiday rate: {e}")))?;
    let noise = Normal::new(0.0, profile.noise_std)
        .map_err(|e| Error::InvalidParam(format!("noise std: {e}")))?;
    let season_block = n.div_ceil(4);

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let pick = |rng: &mut ChaCha8Rng, cb: &Codebook| -> String {
            cb.labels()[rng.gen_range(0..cb.len())].clone()
        };
        let soup = pick(&mut rng, &codebooks[0]);
        let main_dish = pick(&mut rng, &codebooks[1]);
        let side_dish = pick(&mut rng, &codebooks[2]);
        let side_helper = pick(&mut rng, &codebooks[3]);
        let beverage = pick(&mut rng, &codebooks[4]);
        let weekday = codebooks[5].labels()[i % 7].clone();
        let is_holiday = holiday.sample(&mut rng);
        let season = codebooks[7].labels()[(i / season_block).min(3)].clone();

        let mut x = [0.0; FEATURE_COUNT];
        let labels = [
            soup.as_str(),
            main_dish.as_str(),
            side_dish.as_str(),
            side_helper.as_str(),
            beverage.as_str(),
            weekday.as_str(),
            if is_holiday { "Var" } else { "Yok" },
            season.as_str(),
        ];
        for (f, label) in labels.iter().enumerate() {
            x[f] = codebooks[f].normalized_of(label).expect("generated label");
        }

        let demand = if is_holiday {
            0
        } else {
            let score = (demand_score(&x) + noise.sample(&mut rng)).clamp(0.0, 1.0);
            (score * f64::from(profile.capacity)).round() as u32
        };
        rows.push(RawRow {
            soup,
            main_dish,
            side_dish,
            side_helper,
            beverage,
            weekday,
            holiday: if is_holiday { "Var" } else { "Yok" }.to_string(),
            season,
            demand,
        });
    }
    Ok(Dataset::new(rows))
}
