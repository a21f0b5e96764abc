//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! single PASS line when its criterion holds; an assertion failure marks
//! the criterion as failed.

use std::time::Instant;

use mealcast::dataio::{clean, split, synthesize, SynthProfile};
use mealcast::encoding::{build_codebooks, encode_dataset, FeatureMatrix, NormBounds};
use mealcast::metrics::{build_report, r2_centered, r2_prediction_normalized, MapeMode};
use mealcast::network::{parse_activations, save_model, Mlp, ModelBundle, Topology};
use mealcast::search::{default_grid, run_grid, GridResult, SearchConfig};
use mealcast::training::{gradient, jacobian, train_lm, StopReason, TrainConfig};

fn pass(n: usize, what: &str) {
    println!("criterion {n} ({what}): PASS");
}

fn net(topology: &str, acts: &str, seed: u64) -> Mlp {
    let t: Topology = topology.parse().unwrap();
    Mlp::new(&t, &parse_activations(acts).unwrap(), seed).unwrap()
}

fn unit_bounds() -> NormBounds {
    NormBounds::new(0.0, 1.0).unwrap()
}

/// The published normalization table for the five menu features: each
/// label's six-decimal normalized value, in code order.
#[test]
fn criterion_1_codebook_normalization() {
    let printed: [(&str, &[f64]); 5] = [
        (
            "soup",
            &[0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0],
        ),
        (
            "main_dish",
            &[
                0.0, 0.076923, 0.153846, 0.230769, 0.307692, 0.384615, 0.461538, 0.538462,
                0.615385, 0.692308, 0.769231, 0.846154, 0.923077, 1.0,
            ],
        ),
        ("side_dish", &[0.0, 0.333333, 0.666667, 1.0]),
        ("side_helper", &[0.0, 0.333333, 0.666667, 1.0]),
        ("beverage", &[0.0, 0.333333, 0.666667, 1.0]),
    ];

    let codebooks = build_codebooks();
    let mut checked = 0;
    for (feature, expected) in printed {
        let cb = codebooks
            .iter()
            .find(|c| c.feature() == feature)
            .unwrap_or_else(|| panic!("no codebook named {feature}"));
        let values = cb.normalized_values();
        assert_eq!(values.len(), expected.len(), "{feature}: cardinality");
        for (code0, (got, want)) in values.iter().zip(expected).enumerate() {
            let diff = (got - want).abs();
            assert!(
                diff <= 5e-7,
                "{feature} code {}: {got} vs printed {want} (diff {diff:e})",
                code0 + 1
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 35);
    pass(1, "menu normalization table, 35 values to 6 decimals");
}

/// The published 31-day evaluation: shifted MAPE (shift 1), squared error,
/// and the 100-minus-MAPE column, row by row plus the averages.
#[test]
fn criterion_2_evaluation_table_reproduction() {
    #[rustfmt::skip]
    let rows: [(f64, f64, f64, f64, f64); 31] = [
        (0.81481, 0.80399, 0.59647, 0.00012, 99.40353),
        (0.77778, 0.78001, 0.12556, 0.00000, 99.87444),
        (0.73148, 0.72856, 0.16873, 0.00001, 99.83127),
        (1.00000, 1.00420, 0.21000, 0.00002, 99.79000),
        (0.64815, 0.63916, 0.54535, 0.00008, 99.45465),
        (0.75000, 0.75560, 0.32000, 0.00003, 99.68000),
        (0.86111, 0.89687, 1.92137, 0.00128, 98.07863),
        (0.69444, 0.71025, 0.93279, 0.00025, 99.06721),
        (0.77778, 0.77580, 0.11125, 0.00000, 99.88875),
        (0.88889, 0.83520, 2.84235, 0.00288, 97.15765),
        (0.70370, 0.74510, 2.42978, 0.00171, 97.57022),
        (0.99074, 0.96580, 1.25284, 0.00062, 98.74716),
        (0.78704, 0.78450, 0.14197, 0.00001, 99.85803),
        (0.67593, 0.66890, 0.41923, 0.00005, 99.58077),
        (0.75000, 0.74890, 0.06286, 0.00000, 99.93714),
        (0.85185, 0.86540, 0.73160, 0.00018, 99.26840),
        (0.71296, 0.70010, 0.75092, 0.00017, 99.24908),
        (0.75926, 0.74590, 0.75937, 0.00018, 99.24063),
        (0.88889, 0.88000, 0.47059, 0.00008, 99.52941),
        (0.70370, 0.71200, 0.48696, 0.00007, 99.51304),
        (0.87037, 0.87630, 0.31703, 0.00004, 99.68297),
        (0.78704, 0.79540, 0.46798, 0.00007, 99.53202),
        (0.00000, 0.00500, 0.50000, 0.00002, 99.50000),
        (0.96296, 0.95986, 0.15808, 0.00001, 99.84192),
        (0.71296, 0.68750, 1.48649, 0.00065, 98.51351),
        (0.76852, 0.75841, 0.57158, 0.00010, 99.42842),
        (0.84259, 0.83950, 0.16784, 0.00001, 99.83216),
        (0.78704, 0.78100, 0.33782, 0.00004, 99.66218),
        (0.73148, 0.73155, 0.00396, 0.00000, 99.99604),
        (0.78704, 0.75200, 1.96062, 0.00123, 98.03938),
        (0.87037, 0.87950, 0.48812, 0.00008, 99.51188),
    ];
    let (avg_mape, avg_mse, avg_r2) = (0.701275, 0.000322, 99.29);

    let actual: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let predicted: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let report = build_report(&actual, &predicted, MapeMode::Shifted { shift: 1.0 }).unwrap();
    assert_eq!(report.rows.len(), 31);

    for (i, ((_, _, mape, mse, r2), got)) in rows.iter().zip(&report.rows).enumerate() {
        assert!(
            (got.mape - mape).abs() <= 5e-4,
            "row {}: mape {} vs printed {mape}",
            i + 1,
            got.mape
        );
        assert!(
            (got.mse - mse).abs() <= 5e-4,
            "row {}: mse {} vs printed {mse}",
            i + 1,
            got.mse
        );
        assert!(
            (got.r2_percent - r2).abs() <= 5e-4,
            "row {}: r2 {} vs printed {r2}",
            i + 1,
            got.r2_percent
        );
    }
    assert!((report.mape - avg_mape).abs() <= 0.01, "avg mape {}", report.mape);
    assert!((report.mse - avg_mse).abs() <= 0.01, "avg mse {}", report.mse);
    assert!(
        (report.r2_percent - avg_r2).abs() <= 0.01,
        "avg r2 {}",
        report.r2_percent
    );
    pass(2, "31-row evaluation table and averages");
}

/// Independent central-difference oracles for the analytic gradient and
/// Jacobian across every studied topology/activation pairing.
#[test]
fn criterion_3_derivatives_match_finite_differences() {
    fn scaled_max_err(got: &[f64], oracle: &[f64]) -> f64 {
        let norm = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        got.iter()
            .zip(oracle)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / norm
    }

    // Deterministic pseudo-inputs in [0, 1].
    fn input(seed: u64, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|i| {
                let k = (seed + 1) * 37 + i as u64 * 11;
                (k % 97) as f64 / 96.0
            })
            .collect()
    }

    let started = Instant::now();
    let h = 1e-5;
    let cases: [(&str, [&str; 2]); 3] = [
        ("8-5-1", ["logsig-tansig", "tansig-tansig"]),
        ("8-5-5-1", ["logsig-logsig-tansig", "logsig-tansig-tansig"]),
        ("8-10-10-1", ["logsig-logsig-tansig", "logsig-tansig-tansig"]),
    ];

    let mut models = 0;
    for (topo, mixes) in &cases {
        for acts in mixes {
            for seed in [1u64, 2] {
                let mlp = net(topo, acts, seed);
                let n = mlp.num_params();
                let base = mlp.params();
                let mut probe = mlp.clone();

                // Gradient of the one-pattern squared error.
                let x = input(seed, mlp.input_dim());
                let target = 0.63;
                let got = gradient(&mlp, &x, target).unwrap();
                let mut oracle = Vec::with_capacity(n);
                for t in 0..n {
                    let eval = |delta: f64, probe: &mut Mlp| {
                        let mut p = base.clone();
                        p[t] += delta;
                        probe.set_params(&p).unwrap();
                        let e = target - probe.predict_scalar(&x).unwrap();
                        0.5 * e * e
                    };
                    let ep = eval(h, &mut probe);
                    let em = eval(-h, &mut probe);
                    oracle.push((ep - em) / (2.0 * h));
                }
                let gerr = scaled_max_err(&got, &oracle);
                assert!(gerr < 1e-6, "{topo} {acts} seed {seed}: gradient error {gerr:e}");

                // Jacobian of the outputs over a small batch.
                let inputs: Vec<Vec<f64>> = (0..6)
                    .map(|r| input(seed * 100 + r as u64, mlp.input_dim()))
                    .collect();
                let targets = vec![0.5; 6];
                let data = FeatureMatrix::from_rows(&inputs, &targets, unit_bounds()).unwrap();
                let jac = jacobian(&mlp, &data).unwrap();
                for p in 0..data.n_rows() {
                    let mut row_oracle = Vec::with_capacity(n);
                    for t in 0..n {
                        let eval = |delta: f64, probe: &mut Mlp| {
                            let mut par = base.clone();
                            par[t] += delta;
                            probe.set_params(&par).unwrap();
                            probe.predict_scalar(data.input_row(p)).unwrap()
                        };
                        let op = eval(h, &mut probe);
                        let om = eval(-h, &mut probe);
                        row_oracle.push((op - om) / (2.0 * h));
                    }
                    let jerr = scaled_max_err(jac.row(p), &row_oracle);
                    assert!(
                        jerr < 1e-6,
                        "{topo} {acts} seed {seed} row {p}: jacobian error {jerr:e}"
                    );
                }
                models += 1;
            }
        }
    }
    assert!(models >= 10, "only {models} models checked");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass(3, "gradient and jacobian vs central differences");
}

fn sine_data() -> FeatureMatrix {
    let inputs: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![i as f64 * std::f64::consts::PI / 19.0])
        .collect();
    let targets: Vec<f64> = inputs.iter().map(|x| x[0].sin()).collect();
    FeatureMatrix::from_rows(&inputs, &targets, unit_bounds()).unwrap()
}

fn sine_cfg() -> TrainConfig {
    TrainConfig {
        max_epochs: 200,
        goal_mse: 1e-3,
        ..Default::default()
    }
}

/// Levenberg-Marquardt must fit sin(x) on [0, pi] reliably and fast, and
/// accepted steps must never increase the training error.
#[test]
fn criterion_4_lm_sine_convergence() {
    let started = Instant::now();
    let data = sine_data();
    let cfg = sine_cfg();

    let mut converged = 0;
    for seed in 0..10u64 {
        let mut mlp = net("1-8-1", "tansig-linear", seed);
        let record = train_lm(&mut mlp, &data, &cfg).unwrap();

        let mut last = record.history[0].mse;
        for r in &record.history[1..] {
            if r.accepted == Some(true) {
                assert!(
                    r.mse < last,
                    "seed {seed} epoch {}: accepted step raised mse {} -> {}",
                    r.epoch,
                    last,
                    r.mse
                );
                last = r.mse;
            }
        }

        if record.stop == StopReason::GoalReached
            && record.final_mse() <= 1e-3
            && record.epochs_run() <= 200
        {
            converged += 1;
        }
    }
    assert!(converged >= 8, "only {converged}/10 seeds converged");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(4, "lm sine fit, 8+/10 seeds to mse 1e-3 within 200 iterations");
}

/// Full synthetic pipeline: generate, clean, split, grid-search. The
/// two-hidden-layer candidates must not lose to the single-hidden ones and
/// the selected model must correlate strongly with the test set.
fn run_demand_grid() -> (GridResult, ModelBundle) {
    let ds = synthesize(&SynthProfile::default(), 550, 42).unwrap();
    let codebooks = build_codebooks();
    let (cleaned, _) = clean(&ds, &codebooks, 3.0).unwrap();
    let (train_raw, test_raw) = split(&cleaned, 0.7, 42).unwrap();
    let bounds =
        NormBounds::from_values(train_raw.rows().iter().map(|r| f64::from(r.demand))).unwrap();
    let train = encode_dataset(&train_raw, &codebooks, bounds).unwrap();
    let test = encode_dataset(&test_raw, &codebooks, bounds).unwrap();
    let result = run_grid(&train, &test, &default_grid(), &SearchConfig::default()).unwrap();
    let best = result.best_row().outcome.as_ref().unwrap().model.clone();
    (
        result,
        ModelBundle {
            mlp: best,
            codebooks,
            target_bounds: bounds,
        },
    )
}

#[test]
fn criterion_5_grid_search_pipeline() {
    let started = Instant::now();
    let (result, _) = run_demand_grid();

    assert_eq!(result.rows.len(), 10);
    assert!(
        result.rows.iter().all(|r| r.outcome.is_some()),
        "a candidate failed: {:?}",
        result
            .rows
            .iter()
            .find(|r| r.outcome.is_none())
            .map(|r| (&r.candidate, &r.first_failure))
    );

    let best_r = |range: std::ops::Range<usize>| {
        result.rows[range]
            .iter()
            .filter_map(|r| r.outcome.as_ref().map(|o| o.test_r))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // The stock grid lists the two single-hidden-layer candidates first.
    let one_hidden = best_r(0..2);
    let two_hidden = best_r(2..10);
    assert!(
        two_hidden >= one_hidden,
        "two-hidden best {two_hidden} lost to one-hidden best {one_hidden}"
    );

    let selected = result.best_row().outcome.as_ref().unwrap();
    assert!(selected.test_r >= 0.95, "selected test r {}", selected.test_r);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    pass(5, "synthetic grid search, depth ordering and test correlation");
}

/// The prediction-normalized R^2 and the centered R^2 must each match
/// their defining formulas exactly, and they are genuinely different
/// statistics.
#[test]
fn criterion_6_r2_variants_are_distinct() {
    let y = [0.81481, 0.77778, 0.73148, 1.0, 0.64815, 0.75, 0.86111, 0.0];
    let p = [0.80399, 0.78001, 0.72856, 1.0042, 0.63916, 0.7556, 0.89687, 0.005];

    let rss: f64 = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
    let pred_sq: f64 = p.iter().map(|b| b * b).sum();
    let literal = 1.0 - rss / pred_sq;
    assert!((r2_prediction_normalized(&y, &p).unwrap() - literal).abs() < 1e-12);

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let centered_den: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    let centered = 1.0 - rss / centered_den;
    assert!((r2_centered(&y, &p).unwrap() - centered).abs() < 1e-12);

    assert!(
        (literal - centered).abs() > 1e-3,
        "variants coincide on data where they should not: {literal} vs {centered}"
    );
    pass(6, "r2 variants match their formulas and differ from each other");
}

/// Re-running the sine fit and the grid search from scratch must reproduce
/// every artifact bit for bit.
#[test]
fn criterion_7_bitwise_reproducibility() {
    let sine_artifacts = || {
        let data = sine_data();
        let mut mlp = net("1-8-1", "tansig-linear", 3);
        let record = train_lm(&mut mlp, &data, &sine_cfg()).unwrap();
        let history: String = record
            .history
            .iter()
            .map(|r| format!("{},{},{:?},{:?}\n", r.epoch, r.mse.to_bits(), r.mu, r.accepted))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine-model.json");
        let bundle = ModelBundle {
            mlp,
            codebooks: build_codebooks(),
            target_bounds: unit_bounds(),
        };
        save_model(&bundle, &path).unwrap();
        (history, std::fs::read(&path).unwrap())
    };
    let (hist_a, model_a) = sine_artifacts();
    let (hist_b, model_b) = sine_artifacts();
    assert_eq!(hist_a, hist_b, "sine training history differs between runs");
    assert_eq!(model_a, model_b, "sine model file differs between runs");

    let grid_artifacts = || {
        let (result, bundle) = run_demand_grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best-model.json");
        save_model(&bundle, &path).unwrap();
        (result.to_csv(), std::fs::read(&path).unwrap())
    };
    let (csv_a, best_a) = grid_artifacts();
    let (csv_b, best_b) = grid_artifacts();
    assert_eq!(csv_a, csv_b, "grid result table differs between runs");
    assert_eq!(best_a, best_b, "best model file differs between runs");

    pass(7, "rerun artifacts are bitwise identical");
}
