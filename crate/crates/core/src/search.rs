//! Architecture grid search: train every candidate several times and pick
//! the one whose best repeat correlates most with the held-out test set.
//!
//! Selection never looks at training metrics: candidates are ranked by test
//! Pearson correlation, with test MSE and grid position as tie-breakers.
//! Repeat `i` of every candidate initializes its network (and, for gdm, its
//! pattern shuffle) from `seed_base + i`, so a grid run is reproducible and
//! independent of how tasks are scheduled across threads.

use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::encoding::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::network::{parse_activations, Activation, Mlp, Topology};
use crate::training::{dataset_mse, train, StopReason, TrainConfig};

/// One architecture to try: a topology plus its activation chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub topology: Topology,
    pub activations: Vec<Activation>,
}

impl Candidate {
    pub fn new(topology: Topology, activations: Vec<Activation>) -> Result<Self> {
        if activations.len() != topology.layer_count() {
            return Err(Error::ShapeMismatch(format!(
                "candidate {topology} needs {} activations, got {}",
                topology.layer_count(),
                activations.len()
            )));
        }
        Ok(Self {
            topology,
            activations,
        })
    }

    pub fn activation_names(&self) -> String {
        let names: Vec<&str> = self.activations.iter().map(|a| a.name()).collect();
        names.join("-")
    }
}

impl FromStr for Candidate {
    type Err = Error;

    /// Parses `topology:activations`, e.g. `8-10-10-1:logsig-logsig-tansig`.
    fn from_str(s: &str) -> Result<Self> {
        let (topo, acts) = s.split_once(':').ok_or_else(|| {
            Error::InvalidParam(format!(
                "bad candidate `{s}`: expected `topology:activations` like 8-5-1:logsig-tansig"
            ))
        })?;
        Candidate::new(topo.trim().parse()?, parse_activations(acts.trim())?)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.topology, self.activation_names())
    }
}

/// The ten stock candidates explored for the 8-feature demand problem:
/// one and two hidden layers in several widths, with sigmoid hidden units
/// and a tansig output.
pub fn default_grid() -> Vec<Candidate> {
    [
        "8-5-1:logsig-tansig",
        "8-5-1:tansig-tansig",
        "8-5-5-1:logsig-logsig-tansig",
        "8-5-5-1:logsig-tansig-tansig",
        "8-10-5-1:logsig-logsig-tansig",
        "8-10-5-1:logsig-tansig-tansig",
        "8-10-10-1:logsig-logsig-tansig",
        "8-10-10-1:logsig-tansig-tansig",
        "8-10-15-1:logsig-logsig-tansig",
        "8-10-15-1:logsig-tansig-tansig",
    ]
    .iter()
    .map(|s| s.parse().expect("stock grid is valid"))
    .collect()
}

/// Grid-search knobs. `train.seed` is ignored; each repeat derives its seed
/// from `seed_base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Independent restarts per candidate.
    pub repeats: usize,
    /// Repeat `i` uses seed `seed_base + i`.
    pub seed_base: u64,
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            repeats: 3,
            seed_base: 42,
            train: TrainConfig::default(),
        }
    }
}

/// Best repeat of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOutcome {
    pub seed: u64,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Pearson correlation on the test set; the selection criterion.
    pub test_r: f64,
    pub epochs: usize,
    pub stop: StopReason,
    pub model: Mlp,
}

/// Result line for one candidate. `outcome` is `None` when every repeat
/// failed (e.g. evaluation was undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub candidate: Candidate,
    pub outcome: Option<RepeatOutcome>,
    pub failed_repeats: usize,
    pub first_failure: Option<String>,
}

/// Full grid outcome; `best` indexes into `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<CandidateRow>,
    pub best: usize,
}

impl GridResult {
    pub fn best_row(&self) -> &CandidateRow {
        &self.rows[self.best]
    }

    /// CSV table with six-decimal metrics, one line per candidate.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("position,topology,activations,status,seed,epochs,stop,train_mse,test_mse,test_r,selected\n");
        for (i, row) in self.rows.iter().enumerate() {
            let selected = if i == self.best { "yes" } else { "" };
            match &row.outcome {
                Some(o) => out.push_str(&format!(
                    "{},{},{},ok,{},{},{},{:.6},{:.6},{:.6},{}\n",
                    i + 1,
                    row.candidate.topology,
                    row.candidate.activation_names(),
                    o.seed,
                    o.epochs,
                    o.stop,
                    o.train_mse,
                    o.test_mse,
                    o.test_r,
                    selected
                )),
                None => out.push_str(&format!(
                    "{},{},{},failed,,,,,,,{}\n",
                    i + 1,
                    row.candidate.topology,
                    row.candidate.activation_names(),
                    selected
                )),
            }
        }
        out
    }
}

impl fmt::Display for GridResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<4} {:<12} {:<24} {:>10} {:>10} {:>8}  {}",
            "no", "topology", "activations", "train_mse", "test_mse", "test_r", "note"
        )?;
        for (i, row) in self.rows.iter().enumerate() {
            let mark = if i == self.best { "<- selected" } else { "" };
            match &row.outcome {
                Some(o) => writeln!(
                    f,
                    "{:<4} {:<12} {:<24} {:>10.6} {:>10.6} {:>8.4}  {}",
                    i + 1,
                    row.candidate.topology.to_string(),
                    row.candidate.activation_names(),
                    o.train_mse,
                    o.test_mse,
                    o.test_r,
                    mark
                )?,
                None => writeln!(
                    f,
                    "{:<4} {:<12} {:<24} {:>10} {:>10} {:>8}  failed ({}) {}",
                    i + 1,
                    row.candidate.topology.to_string(),
                    row.candidate.activation_names(),
                    "-",
                    "-",
                    "-",
                    row.first_failure.as_deref().unwrap_or("unknown"),
                    mark
                )?,
            }
        }
        Ok(())
    }
}

fn run_one(
    candidate: &Candidate,
    train_data: &FeatureMatrix,
    test_data: &FeatureMatrix,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<RepeatOutcome> {
    let mut mlp = Mlp::new(&candidate.topology, &candidate.activations, seed)?;
    let record = train(&mut mlp, train_data, &TrainConfig { seed, ..*cfg })?;
    let predictions = mlp.predict_matrix(test_data)?;
    let test_r = pearson(test_data.targets(), &predictions)?;
    let test_mse = dataset_mse(&mlp, test_data)?;
    Ok(RepeatOutcome {
        seed,
        train_mse: record.final_mse(),
        test_mse,
        test_r,
        epochs: record.epochs_run(),
        stop: record.stop,
        model: mlp,
    })
}

/// Prefer higher test correlation, then lower test MSE, then the earlier
/// entry. Returns `None` when `rows` is empty or nothing succeeded.
pub fn select_best(rows: &[CandidateRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(o) = &row.outcome else { continue };
        match best {
            None => best = Some(i),
            Some(b) => {
                let cur = rows[b].outcome.as_ref().unwrap();
                if o.test_r > cur.test_r
                    || (o.test_r == cur.test_r && o.test_mse < cur.test_mse)
                {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Trains every candidate `cfg.repeats` times on `train_data` only and
/// scores each trained network on `test_data`. Per candidate, the repeat
/// with the highest test correlation wins (ties: lower test MSE, then the
/// earlier seed).
pub fn run_grid(
    train_data: &FeatureMatrix,
    test_data: &FeatureMatrix,
    candidates: &[Candidate],
    cfg: &SearchConfig,
) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidParam("candidate grid is empty".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidParam("repeats must be at least 1".into()));
    }
    if train_data.width() != test_data.width() {
        return Err(Error::ShapeMismatch(format!(
            "train width {} vs test width {}",
            train_data.width(),
            test_data.width()
        )));
    }
    cfg.train.validate()?;

    let tasks: Vec<(usize, u64)> = (0..candidates.len())
        .flat_map(|ci| (0..cfg.repeats).map(move |r| (ci, cfg.seed_base + r as u64)))
        .collect();

    let run = |&(ci, seed): &(usize, u64)| {
        run_one(&candidates[ci], train_data, test_data, seed, &cfg.train)
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<RepeatOutcome>> = tasks.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<RepeatOutcome>> = tasks.iter().map(run).collect();

    let mut rows: Vec<CandidateRow> = candidates
        .iter()
        .map(|c| CandidateRow {
            candidate: c.clone(),
            outcome: None,
            failed_repeats: 0,
            first_failure: None,
        })
        .collect();

    for ((ci, _), outcome) in tasks.iter().zip(outcomes) {
        let row = &mut rows[*ci];
        match outcome {
            Ok(o) => {
                let better = match &row.outcome {
                    None => true,
                    Some(cur) => {
                        o.test_r > cur.test_r
                            || (o.test_r == cur.test_r && o.test_mse < cur.test_mse)
                    }
                };
                if better {
                    row.outcome = Some(o);
                }
            }
            Err(e) => {
                row.failed_repeats += 1;
                row.first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }

    match select_best(&rows) {
        Some(best) => Ok(GridResult { rows, best }),
        None => {
            let first = rows
                .iter()
                .find_map(|r| r.first_failure.clone())
                .unwrap_or_else(|| "unknown failure".into());
            Err(Error::NoUsableCandidate(format!(
                "all {} candidates failed; first failure: {first}",
                rows.len()
            )))
        }
    }
}
