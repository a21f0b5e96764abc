//! Ordinal encoding of the menu/calendar features and min-max normalization.
//!
//! Every categorical feature carries a [`Codebook`]: an ordered label list
//! whose positions are the ordinal codes 1..K. A code normalizes to
//! `(code - 1) / (K - 1)`, i.e. min-max over the code range, so the set of
//! normalized values for a K-label feature is exactly
//! `{0, 1/(K-1), ..., 1}`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::dataio::{Dataset, RawRow};
use crate::error::{Error, Result};

/// Number of input features (five menu slots plus weekday, holiday, season).
pub const FEATURE_COUNT: usize = 8;

/// Ordered label list for one categorical feature. Codes are implicit:
/// the label at position `i` has code `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    feature: String,
    labels: Vec<String>,
}

impl Codebook {
    /// Requires at least two unique labels; a single-label feature has no
    /// defined normalization.
    pub fn new(feature: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let feature = feature.into();
        if labels.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "codebook `{feature}` needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(Error::InvalidParam(format!(
                    "codebook `{feature}` has an empty label at position {i}"
                )));
            }
            if labels[..i].contains(a) {
                return Err(Error::InvalidParam(format!(
                    "codebook `{feature}` has duplicate label `{a}`"
                )));
            }
        }
        Ok(Self { feature, labels })
    }

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.code_of(label).is_some()
    }

    /// 1-based ordinal code of a label.
    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label).map(|i| i + 1)
    }

    pub fn label_of(&self, code: usize) -> Option<&str> {
        if code >= 1 {
            self.labels.get(code - 1).map(String::as_str)
        } else {
            None
        }
    }

    /// Normalized value of a 1-based code: `(code - 1) / (K - 1)`.
    pub fn normalized(&self, code: usize) -> Option<f64> {
        if code >= 1 && code <= self.labels.len() {
            Some((code - 1) as f64 / (self.labels.len() - 1) as f64)
        } else {
            None
        }
    }

    /// Normalized value of a label, erroring on unknown labels.
    pub fn normalized_of(&self, label: &str) -> Result<f64> {
        self.code_of(label)
            .and_then(|c| self.normalized(c))
            .ok_or_else(|| Error::UnknownLabel {
                feature: self.feature.clone(),
                label: label.to_string(),
            })
    }

    /// All normalized values in code order: `{0, 1/(K-1), ..., 1}`.
    pub fn normalized_values(&self) -> Vec<f64> {
        (1..=self.labels.len())
            .map(|c| self.normalized(c).expect("code in range"))
            .collect()
    }
}

/// Min-max bounds used to map a value into `[0, 1]` and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    min: f64,
    max: f64,
}

impl NormBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateBounds { min, max });
        }
        Ok(Self { min, max })
    }

    /// Bounds from the observed min/max of a value sequence.
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        Self::new(min, max)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `(v - min) / (max - min)`; lands in `[0, 1]` for `v` inside the bounds.
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    /// Inverse of [`NormBounds::normalize`].
    pub fn denormalize(&self, v_n: f64) -> f64 {
        v_n * (self.max - self.min) + self.min
    }
}

/// Encoded dataset: row-major input matrix plus normalized targets.
///
/// Matrices produced by [`encode_dataset`] have width [`FEATURE_COUNT`] with
/// the fixed column order soup, main dish, side dish, side helper, beverage,
/// weekday, holiday, season, and every input entry in `[0, 1]`. Hand-built
/// matrices (see [`FeatureMatrix::from_rows`]) may carry arbitrary
/// regression data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    width: usize,
    bounds: NormBounds,
    codebooks: Vec<Codebook>,
}

impl FeatureMatrix {
    /// Builds a matrix from explicit rows; used for non-refectory training
    /// sets (fixtures, benchmarks). `bounds` describes the target scale.
    pub fn from_rows(inputs: &[Vec<f64>], targets: &[f64], bounds: NormBounds) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::InvalidParam("feature matrix has no rows".into()));
        }
        let width = inputs[0].len();
        if width == 0 {
            return Err(Error::InvalidParam("feature matrix has zero width".into()));
        }
        let mut flat = Vec::with_capacity(inputs.len() * width);
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != width {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParam(format!("row {i} has a non-finite input")));
            }
            flat.extend_from_slice(row);
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite target".into()));
        }
        Ok(Self {
            inputs: flat,
            targets: targets.to_vec(),
            width,
            bounds,
            codebooks: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.width..(i + 1) * self.width]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn bounds(&self) -> NormBounds {
        self.bounds
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }
}

/// The eight declared codebooks in fixed column order. Label lists follow
/// the business menu (9 soups, 14 mains, 4 sides, 4 side helpers,
/// 4 beverages) plus the calendar features (7 weekdays, holiday present or
/// absent, 4 seasons).
pub fn build_codebooks() -> Vec<Codebook> {
    let sets: [(&str, &[&str]); FEATURE_COUNT] = [
        (
            "soup",
            &[
                "Mercimek Çorbası",
                "Ezogelin Çorbası",
                "Domates Çorbası",
                "Yayla Çorbası",
                "Şehriye Çorbası",
                "Tarhana Çorbası",
                "Erişte Çorbası",
                "Ayran Aşı Çorbası",
                "Brokoli Çorbası",
            ],
        ),
        (
            "main_dish",
            &[
                "Kuru Fasulye",
                "Bamya",
                "Sulu Köfte",
                "Sebze Dolması",
                "Mantı",
                "Türlü",
                "Patlıcan Musakka",
                "Tavuk Pirzola",
                "Çiftlik Kebabı",
                "Kadın Budu Köfte Patates",
                "Pürelü Dana Rostu",
                "Güveç",
                "Ispanak",
                "Balık",
            ],
        ),
        (
            "side_dish",
            &["Pirinç Pilavı", "Bulgur Pilavı", "Makarna", "Su Böreği"],
        ),
        ("side_helper", &["Salata", "Tatlı", "Turşu", "Meyve"]),
        ("beverage", &["Su", "Ayran", "Kola", "Soda"]),
        (
            "weekday",
            &[
                "Pazartesi",
                "Salı",
                "Çarşamba",
                "Perşembe",
                "Cuma",
                "Cumartesi",
                "Pazar",
            ],
        ),
        // Holiday present ("Var") is code 1 and normalizes to 0, which is why
        // zero-demand holiday rows carry 0 in the holiday column.
        ("holiday", &["Var", "Yok"]),
        ("season", &["Sonbahar", "Kış", "İlkbahar", "Yaz"]),
    ];
    sets.iter()
        .map(|(name, labels)| {
            Codebook::new(*name, labels.iter().map(|s| s.to_string()).collect())
                .expect("declared codebooks are valid")
        })
        .collect()
}

fn expect_codebooks(codebooks: &[Codebook]) -> Result<()> {
    if codebooks.len() != FEATURE_COUNT {
        return Err(Error::ShapeMismatch(format!(
            "expected {FEATURE_COUNT} codebooks, got {}",
            codebooks.len()
        )));
    }
    Ok(())
}

/// Encodes one raw row into the 8-entry normalized input vector plus the
/// normalized demand target.
pub fn encode_row(
    row: &RawRow,
    codebooks: &[Codebook],
    target_bounds: NormBounds,
) -> Result<([f64; FEATURE_COUNT], f64)> {
    expect_codebooks(codebooks)?;
    let mut inputs = [0.0; FEATURE_COUNT];
    for (i, cb) in codebooks.iter().enumerate() {
        inputs[i] = cb.normalized_of(row.feature(i))?;
    }
    Ok((inputs, target_bounds.normalize(f64::from(row.demand))))
}

/// Encodes a cleaned dataset into a [`FeatureMatrix`], preserving row order.
pub fn encode_dataset(
    ds: &Dataset,
    codebooks: &[Codebook],
    target_bounds: NormBounds,
) -> Result<FeatureMatrix> {
    expect_codebooks(codebooks)?;
    let mut inputs = Vec::with_capacity(ds.rows().len() * FEATURE_COUNT);
    let mut targets = Vec::with_capacity(ds.rows().len());
    for (i, row) in ds.rows().iter().enumerate() {
        let (vec, target) = encode_row(row, codebooks, target_bounds).map_err(|e| match e {
            Error::UnknownLabel { feature, label } => Error::RowParse(vec![(
                i,
                format!("unknown label `{label}` for feature `{feature}`"),
            )]),
            other => other,
        })?;
        inputs.extend_from_slice(&vec);
        targets.push(target);
    }
    if targets.is_empty() {
        return Err(Error::InvalidParam("cannot encode an empty dataset".into()));
    }
    Ok(FeatureMatrix {
        inputs,
        targets,
        width: FEATURE_COUNT,
        bounds: target_bounds,
        codebooks: codebooks.to_vec(),
    })
}

/// Writes codebooks as one line per feature: `name,label,label,...`.
pub fn save_codebooks(codebooks: &[Codebook], path: &Path) -> Result<()> {
    let mut out = String::new();
    for cb in codebooks {
        let _ = write!(out, "{}", cb.feature());
        for label in cb.labels() {
            let _ = write!(out, ",{label}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads codebooks written by [`save_codebooks`].
pub fn load_codebooks(path: &Path) -> Result<Vec<Codebook>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut books = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let name = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Config(format!("codebook line {} has no name", lineno + 1)))?;
        let labels: Vec<String> = parts.map(str::to_string).collect();
        books.push(Codebook::new(name, labels)?);
    }
    if books.is_empty() {
        return Err(Error::Config("codebook file is empty".into()));
    }
    Ok(books)
}
