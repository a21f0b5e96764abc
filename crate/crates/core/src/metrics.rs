//! Forecast quality measures and per-row evaluation reports.
//!
//! Two details deserve attention. First, MAPE comes in two flavors: the
//! plain percentage error, undefined when an actual value is 0, and a
//! shifted variant that adds a constant to the denominator so zero-demand
//! days (holidays) stay in the evaluation. Second, [`r2_prediction_normalized`] normalizes
//! the residual sum by the sum of squared *predictions*, not by the
//! centered variance of the actuals; [`r2_centered`] is the conventional
//! coefficient of determination, kept alongside for comparison.

use std::fmt;

use crate::error::{Error, Result};

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InvalidParam("metrics need at least one value".into()));
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("metrics input has a non-finite value".into()));
    }
    Ok(())
}

/// Mean absolute percentage error, `100/n * sum |y - p| / |y|`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let mut sum = 0.0;
    for (i, (y, p)) in actual.iter().zip(predicted).enumerate() {
        if *y == 0.0 {
            return Err(Error::ZeroActual { index: i });
        }
        sum += ((y - p) / y).abs();
    }
    Ok(100.0 * sum / actual.len() as f64)
}

/// MAPE with a shifted denominator, `100/n * sum |y - p| / (y + shift)`.
/// With `shift = 0` and no zero actuals this reduces to [`mape`] for
/// nonnegative data.
pub fn mape_shifted(actual: &[f64], predicted: &[f64], shift: f64) -> Result<f64> {
    check_pair(actual, predicted)?;
    if !shift.is_finite() {
        return Err(Error::InvalidParam(format!("shift must be finite, got {shift}")));
    }
    let mut sum = 0.0;
    for (i, (y, p)) in actual.iter().zip(predicted).enumerate() {
        let denom = y + shift;
        if denom == 0.0 {
            return Err(Error::ZeroShiftedDenominator { index: i });
        }
        sum += ((y - p) / denom).abs();
    }
    Ok(100.0 * sum / actual.len() as f64)
}

/// Mean squared error.
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(sum / actual.len() as f64)
}

/// `1 - sum (y - p)^2 / sum p^2`: the residual sum normalized by the
/// squared predictions. Not the conventional coefficient of determination;
/// see [`r2_centered`] for that.
pub fn r2_prediction_normalized(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let denom: f64 = predicted.iter().map(|p| p * p).sum();
    if denom == 0.0 {
        return Err(Error::AllZeroPredictions);
    }
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - num / denom)
}

/// Conventional coefficient of determination,
/// `1 - sum (y - p)^2 / sum (y - mean(y))^2`.
pub fn r2_centered(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let denom: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance("actual values"));
    }
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - num / denom)
}

/// Pearson correlation coefficient between actuals and predictions.
pub fn pearson(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    let my = actual.iter().sum::<f64>() / n;
    let mp = predicted.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vy = 0.0;
    let mut vp = 0.0;
    for (y, p) in actual.iter().zip(predicted) {
        cov += (y - my) * (p - mp);
        vy += (y - my) * (y - my);
        vp += (p - mp) * (p - mp);
    }
    if vy == 0.0 {
        return Err(Error::ZeroVariance("actual values"));
    }
    if vp == 0.0 {
        return Err(Error::ZeroVariance("predictions"));
    }
    Ok(cov / (vy.sqrt() * vp.sqrt()))
}

/// How per-row percentage errors are computed in a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapeMode {
    Plain,
    Shifted { shift: f64 },
}

impl Default for MapeMode {
    fn default() -> Self {
        MapeMode::Shifted { shift: 1.0 }
    }
}

/// One evaluated pair. `r2_percent` is the complement of the row's
/// percentage error: `100 - mape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub actual: f64,
    pub predicted: f64,
    pub mape: f64,
    pub mse: f64,
    pub r2_percent: f64,
}

/// Per-row metrics plus their averages and whole-vector summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: MapeMode,
    pub rows: Vec<ReportRow>,
    /// Mean of the per-row percentage errors.
    pub mape: f64,
    /// Mean of the per-row squared errors.
    pub mse: f64,
    /// Mean of the per-row `r2_percent`, i.e. `100 - mape`.
    pub r2_percent: f64,
    /// Pearson correlation; `None` when either side is constant.
    pub pearson: Option<f64>,
    /// Prediction-normalized R^2; `None` when all predictions are zero.
    pub r2_pred_norm: Option<f64>,
}

/// Builds the per-row evaluation table used by the `evaluate` command.
pub fn build_report(actual: &[f64], predicted: &[f64], mode: MapeMode) -> Result<EvalReport> {
    check_pair(actual, predicted)?;
    let mut rows = Vec::with_capacity(actual.len());
    for (i, (y, p)) in actual.iter().zip(predicted).enumerate() {
        let row_mape = match mode {
            MapeMode::Plain => {
                if *y == 0.0 {
                    return Err(Error::ZeroActual { index: i });
                }
                100.0 * ((y - p) / y).abs()
            }
            MapeMode::Shifted { shift } => {
                let denom = y + shift;
                if denom == 0.0 {
                    return Err(Error::ZeroShiftedDenominator { index: i });
                }
                100.0 * ((y - p) / denom).abs()
            }
        };
        rows.push(ReportRow {
            actual: *y,
            predicted: *p,
            mape: row_mape,
            mse: (y - p) * (y - p),
            r2_percent: 100.0 - row_mape,
        });
    }
    let n = rows.len() as f64;
    let avg_mape = rows.iter().map(|r| r.mape).sum::<f64>() / n;
    let avg_mse = rows.iter().map(|r| r.mse).sum::<f64>() / n;
    let avg_r2 = rows.iter().map(|r| r.r2_percent).sum::<f64>() / n;
    Ok(EvalReport {
        mode,
        rows,
        mape: avg_mape,
        mse: avg_mse,
        r2_percent: avg_r2,
        pearson: pearson(actual, predicted).ok(),
        r2_pred_norm: r2_prediction_normalized(actual, predicted).ok(),
    })
}

impl EvalReport {
    /// CSV rendering with six decimal places and a trailing average row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,actual,predicted,mape,mse,r2_percent\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                i + 1,
                r.actual,
                r.predicted,
                r.mape,
                r.mse,
                r.r2_percent
            ));
        }
        out.push_str(&format!(
            "average,,,{:.6},{:.6},{:.6}\n",
            self.mape, self.mse, self.r2_percent
        ));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows:       {}", self.rows.len())?;
        match self.mode {
            MapeMode::Plain => writeln!(f, "mape:       {:.6}", self.mape)?,
            MapeMode::Shifted { shift } => {
                writeln!(f, "mape:       {:.6} (shift {shift})", self.mape)?
            }
        }
        writeln!(f, "mse:        {:.6}", self.mse)?;
        writeln!(f, "r2 percent: {:.6}", self.r2_percent)?;
        match self.pearson {
            Some(r) => writeln!(f, "pearson r:  {r:.6}")?,
            None => writeln!(f, "pearson r:  undefined")?,
        }
        match self.r2_pred_norm {
            Some(r) => write!(f, "r2 (pred-normalized): {r:.6}")?,
            None => write!(f, "r2 (pred-normalized): undefined")?,
        }
        Ok(())
    }
}
