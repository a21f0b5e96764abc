//! Network training: momentum gradient descent and Levenberg-Marquardt.
//!
//! Both trainers minimize the squared error of a single-output network over
//! an encoded dataset. Gradients and Jacobians are flattened in the frozen
//! parameter order defined by [`crate::network`], which is what makes the
//! finite-difference checks in the test suite meaningful.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::FeatureMatrix;
use crate::error::{Error, Result};
use crate::network::{ForwardCache, Mlp};

/// Smallest damping value; keeps a long run of accepted steps from driving
/// mu to exactly zero, which could make the normal equations singular.
const MU_FLOOR: f64 = 1e-20;

/// Which algorithm [`train`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainer {
    /// Incremental gradient descent with momentum.
    Gdm,
    /// Levenberg-Marquardt.
    Lm,
}

impl Trainer {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gdm" | "momentum" => Ok(Trainer::Gdm),
            "lm" | "levenberg-marquardt" => Ok(Trainer::Lm),
            other => Err(Error::InvalidParam(format!(
                "unknown trainer `{other}` (expected gdm or lm)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trainer::Gdm => "gdm",
            Trainer::Lm => "lm",
        }
    }
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All training knobs. `eta`/`alpha` only matter for [`Trainer::Gdm`];
/// the `lm_*` fields only for [`Trainer::Lm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub trainer: Trainer,
    /// Learning rate.
    pub eta: f64,
    /// Momentum coefficient.
    pub alpha: f64,
    pub max_epochs: usize,
    /// Training stops once the dataset MSE drops to this value or below.
    pub goal_mse: f64,
    /// Initial damping.
    pub lm_mu0: f64,
    /// Damping multiplier after a rejected step (> 1).
    pub lm_mu_inc: f64,
    /// Damping multiplier after an accepted step (in (0, 1)).
    pub lm_mu_dec: f64,
    /// Training stops once damping exceeds this value.
    pub lm_mu_max: f64,
    /// Seed for the per-epoch pattern shuffle (gdm only).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            trainer: Trainer::Lm,
            eta: 0.1,
            alpha: 0.9,
            max_epochs: 1000,
            goal_mse: 1e-3,
            lm_mu0: 1e-3,
            lm_mu_inc: 10.0,
            lm_mu_dec: 0.1,
            lm_mu_max: 1e10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1), got {}", self.alpha));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.goal_mse >= 0.0) {
            return bad(format!("goal_mse must be nonnegative, got {}", self.goal_mse));
        }
        if !(self.lm_mu0 > 0.0) || !self.lm_mu0.is_finite() {
            return bad(format!("lm_mu0 must be positive, got {}", self.lm_mu0));
        }
        if !(self.lm_mu_inc > 1.0) || !self.lm_mu_inc.is_finite() {
            return bad(format!("lm_mu_inc must exceed 1, got {}", self.lm_mu_inc));
        }
        if !(self.lm_mu_dec > 0.0 && self.lm_mu_dec < 1.0) {
            return bad(format!("lm_mu_dec must be in (0, 1), got {}", self.lm_mu_dec));
        }
        if !(self.lm_mu_max > self.lm_mu0) {
            return bad(format!(
                "lm_mu_max must exceed lm_mu0, got {} <= {}",
                self.lm_mu_max, self.lm_mu0
            ));
        }
        Ok(())
    }
}

/// Why training ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Dataset MSE reached `goal_mse`.
    GoalReached,
    /// `max_epochs` iterations were run.
    MaxEpochs,
    /// Damping exceeded `lm_mu_max` (lm only).
    MuExceeded,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GoalReached => "goal reached",
            StopReason::MaxEpochs => "max epochs",
            StopReason::MuExceeded => "mu limit exceeded",
        })
    }
}

/// One line of the training history. Epoch 0 is the untrained network.
/// For lm, `mu` is the damping used by that iteration's solve and
/// `accepted` tells whether the step was taken; both are `None` for gdm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub mu: Option<f64>,
    pub accepted: Option<bool>,
}

/// Full outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainRecord {
    pub fn final_mse(&self) -> f64 {
        self.history.last().expect("history is never empty").mse
    }

    /// Iterations actually run, not counting the epoch-0 baseline.
    pub fn epochs_run(&self) -> usize {
        self.history.last().expect("history is never empty").epoch
    }

    pub fn accepted_steps(&self) -> usize {
        self.history
            .iter()
            .filter(|r| r.accepted == Some(true))
            .count()
    }
}

fn check_single_output(mlp: &Mlp, data: &FeatureMatrix) -> Result<()> {
    if mlp.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "training needs a single-output network, got {} outputs",
            mlp.output_dim()
        )));
    }
    if data.width() != mlp.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "data width {} does not match network input {}",
            data.width(),
            mlp.input_dim()
        )));
    }
    Ok(())
}

/// Mean squared error of the network over a dataset.
pub fn dataset_mse(mlp: &Mlp, data: &FeatureMatrix) -> Result<f64> {
    check_single_output(mlp, data)?;
    let mut sum = 0.0;
    for i in 0..data.n_rows() {
        let e = data.target(i) - mlp.predict_scalar(data.input_row(i))?;
        sum += e * e;
    }
    Ok(sum / data.n_rows() as f64)
}

/// Propagates a sensitivity vector (derivative of some scalar with respect
/// to the output-layer pre-activations) back through the network and
/// accumulates `scale` times the parameter derivatives into `grad`.
fn backpropagate(mlp: &Mlp, cache: &ForwardCache, out_sens: Vec<f64>, grad: &mut [f64], scale: f64) {
    debug_assert_eq!(grad.len(), mlp.num_params());
    let layers = mlp.layers();

    // Flat offset of each layer's parameter block.
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for layer in layers {
        offsets.push(off);
        off += layer.weights().len() + layer.biases().len();
    }

    let mut sens = out_sens;
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
        let y_prev: &[f64] = if l == 0 { &cache.input } else { &cache.post[l - 1] };

        let base = offsets[l];
        for j in 0..out_dim {
            let s = sens[j] * scale;
            let row = base + j * in_dim;
            for i in 0..in_dim {
                grad[row + i] += s * y_prev[i];
            }
            grad[base + out_dim * in_dim + j] += s;
        }

        if l > 0 {
            let prev = &layers[l - 1];
            let mut prev_sens = vec![0.0; in_dim];
            for (i, ps) in prev_sens.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, s) in sens.iter().enumerate() {
                    acc += layer.weights()[j * in_dim + i] * s;
                }
                *ps = prev.activation().derivative_from_output(y_prev[i]) * acc;
            }
            sens = prev_sens;
        }
    }
}

/// Gradient of the single-pattern error `E = (d - o)^2 / 2` with respect to
/// all parameters, in the frozen flat order.
pub fn gradient(mlp: &Mlp, x: &[f64], target: f64) -> Result<Vec<f64>> {
    if mlp.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "gradient needs a single-output network, got {} outputs",
            mlp.output_dim()
        )));
    }
    let cache = mlp.forward_cached(x)?;
    let out = cache.output()[0];
    let act = mlp.layers().last().unwrap().activation();
    // dE/dv = f'(v) * (o - d)
    let sens = vec![act.derivative_from_output(out) * (out - target)];
    let mut grad = vec![0.0; mlp.num_params()];
    backpropagate(mlp, &cache, sens, &mut grad, 1.0);
    Ok(grad)
}

/// Sum of the per-pattern gradients over a whole dataset.
pub fn batch_gradient(mlp: &Mlp, data: &FeatureMatrix) -> Result<Vec<f64>> {
    check_single_output(mlp, data)?;
    let mut total = vec![0.0; mlp.num_params()];
    for i in 0..data.n_rows() {
        let cache = mlp.forward_cached(data.input_row(i))?;
        let out = cache.output()[0];
        let act = mlp.layers().last().unwrap().activation();
        let sens = vec![act.derivative_from_output(out) * (out - data.target(i))];
        backpropagate(mlp, &cache, sens, &mut total, 1.0);
    }
    Ok(total)
}

/// Dense row-major Jacobian of network outputs with respect to parameters:
/// one row per dataset row, one column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Jacobian `J[p][t] = d o_p / d theta_t` of the scalar output for every
/// pattern, computed by backpropagating output (not error) sensitivities.
pub fn jacobian(mlp: &Mlp, data: &FeatureMatrix) -> Result<Jacobian> {
    check_single_output(mlp, data)?;
    let cols = mlp.num_params();
    let mut out = vec![0.0; data.n_rows() * cols];
    let act = mlp.layers().last().unwrap().activation();
    for p in 0..data.n_rows() {
        let cache = mlp.forward_cached(data.input_row(p))?;
        let sens = vec![act.derivative_from_output(cache.output()[0])];
        backpropagate(mlp, &cache, sens, &mut out[p * cols..(p + 1) * cols], 1.0);
    }
    Ok(Jacobian {
        rows: data.n_rows(),
        cols,
        data: out,
    })
}

/// Residual vector `e_p = d_p - o_p` in row order.
fn residuals(mlp: &Mlp, data: &FeatureMatrix) -> Result<Vec<f64>> {
    (0..data.n_rows())
        .map(|i| Ok(data.target(i) - mlp.predict_scalar(data.input_row(i))?))
        .collect()
}

fn sse(res: &[f64]) -> f64 {
    res.iter().map(|e| e * e).sum()
}

/// One damped Gauss-Newton step `(J^T J + mu I) delta = J^T e` computed from
/// scratch; exposed for diagnostics.
pub fn lm_step(mlp: &Mlp, data: &FeatureMatrix, mu: f64) -> Result<Vec<f64>> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParam(format!("mu must be nonnegative, got {mu}")));
    }
    let jac = jacobian(mlp, data)?.to_dmatrix();
    let res = DVector::from_vec(residuals(mlp, data)?);
    let mut a = jac.tr_mul(&jac);
    for i in 0..a.nrows() {
        a[(i, i)] += mu;
    }
    let rhs = jac.tr_mul(&res);
    let delta = a
        .cholesky()
        .ok_or_else(|| Error::InvalidParam(format!("normal equations are singular at mu {mu}")))?
        .solve(&rhs);
    Ok(delta.iter().copied().collect())
}

/// Dispatches on `cfg.trainer`.
pub fn train(mlp: &mut Mlp, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainRecord> {
    match cfg.trainer {
        Trainer::Gdm => train_gdm(mlp, data, cfg),
        Trainer::Lm => train_lm(mlp, data, cfg),
    }
}

/// Incremental gradient descent with momentum.
///
/// Every epoch visits each pattern once in a freshly shuffled order (seeded
/// by `cfg.seed`) and updates all parameters after every pattern:
/// `v <- alpha * v - eta * grad`, `theta <- theta + v`. The momentum buffer
/// carries across patterns and epochs. History entries hold the full-dataset
/// MSE evaluated after the epoch's updates.
pub fn train_gdm(mlp: &mut Mlp, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate()?;
    check_single_output(mlp, data)?;

    let n_params = mlp.num_params();
    let mut params = mlp.params();
    let mut velocity = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut history = Vec::with_capacity(cfg.max_epochs + 1);
    let mut mse = dataset_mse(mlp, data)?;
    if !mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    history.push(EpochRecord {
        epoch: 0,
        mse,
        mu: None,
        accepted: None,
    });
    if mse <= cfg.goal_mse {
        return Ok(TrainRecord {
            history,
            stop: StopReason::GoalReached,
        });
    }

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let grad = gradient(mlp, data.input_row(p), data.target(p))?;
            for ((theta, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.alpha * *v - cfg.eta * g;
                *theta += *v;
            }
            mlp.set_params(&params)?;
        }
        mse = dataset_mse(mlp, data)?;
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochRecord {
            epoch,
            mse,
            mu: None,
            accepted: None,
        });
        if mse <= cfg.goal_mse {
            return Ok(TrainRecord {
                history,
                stop: StopReason::GoalReached,
            });
        }
    }
    Ok(TrainRecord {
        history,
        stop: StopReason::MaxEpochs,
    })
}

/// Levenberg-Marquardt.
///
/// Each iteration solves `(J^T J + mu I) delta = J^T e` and tries
/// `theta + delta`. A step is accepted only if it strictly lowers the sum of
/// squared errors; acceptance divides the damping by `1/lm_mu_dec`,
/// rejection restores the parameters and multiplies it by `lm_mu_inc`. A
/// rejected iteration reuses the Jacobian, since the parameters did not
/// move. A solver failure or a non-finite trial error counts as a
/// rejection. Training stops at the MSE goal, the iteration cap, or when
/// the damping passes `lm_mu_max`.
pub fn train_lm(mlp: &mut Mlp, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate()?;
    check_single_output(mlp, data)?;

    let n = data.n_rows() as f64;
    let n_params = mlp.num_params();
    let mut params = mlp.params();
    let mut res = residuals(mlp, data)?;
    let mut cur_sse = sse(&res);
    if !cur_sse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut mu = cfg.lm_mu0;

    let mut history = Vec::with_capacity(cfg.max_epochs + 1);
    history.push(EpochRecord {
        epoch: 0,
        mse: cur_sse / n,
        mu: None,
        accepted: None,
    });
    if cur_sse / n <= cfg.goal_mse {
        return Ok(TrainRecord {
            history,
            stop: StopReason::GoalReached,
        });
    }

    // Normal-equation pieces for the current parameters; rebuilt only after
    // an accepted step.
    let mut jtj: Option<(DMatrix<f64>, DVector<f64>)> = None;

    for epoch in 1..=cfg.max_epochs {
        if jtj.is_none() {
            let jac = jacobian(mlp, data)?.to_dmatrix();
            let r = DVector::from_column_slice(&res);
            jtj = Some((jac.tr_mul(&jac), jac.tr_mul(&r)));
        }
        let (ref a0, ref rhs) = *jtj.as_ref().unwrap();

        let mut a = a0.clone();
        for i in 0..n_params {
            a[(i, i)] += mu;
        }

        let mut accepted = false;
        if let Some(chol) = a.cholesky() {
            let delta = chol.solve(rhs);
            let trial: Vec<f64> = params.iter().zip(delta.iter()).map(|(p, d)| p + d).collect();
            mlp.set_params(&trial)?;
            if let Ok(trial_res) = residuals(mlp, data) {
                let trial_sse = sse(&trial_res);
                if trial_sse.is_finite() && trial_sse < cur_sse {
                    params = trial;
                    res = trial_res;
                    cur_sse = trial_sse;
                    accepted = true;
                }
            }
        }

        let mu_used = mu;
        if accepted {
            jtj = None;
            mu = (mu * cfg.lm_mu_dec).max(MU_FLOOR);
        } else {
            mlp.set_params(&params)?;
            mu *= cfg.lm_mu_inc;
        }

        history.push(EpochRecord {
            epoch,
            mse: cur_sse / n,
            mu: Some(mu_used),
            accepted: Some(accepted),
        });

        if cur_sse / n <= cfg.goal_mse {
            return Ok(TrainRecord {
                history,
                stop: StopReason::GoalReached,
            });
        }
        if mu > cfg.lm_mu_max {
            return Ok(TrainRecord {
                history,
                stop: StopReason::MuExceeded,
            });
        }
    }
    Ok(TrainRecord {
        history,
        stop: StopReason::MaxEpochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::NormBounds;
    use crate::network::{parse_activations, Topology};

    fn matrix(inputs: &[Vec<f64>], targets: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(inputs, targets, NormBounds::new(0.0, 1.0).unwrap()).unwrap()
    }

    fn net(topology: &str, acts: &str, seed: u64) -> Mlp {
        let t: Topology = topology.parse().unwrap();
        Mlp::new(&t, &parse_activations(acts).unwrap(), seed).unwrap()
    }

    fn sin_data() -> FeatureMatrix {
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 * std::f64::consts::PI / 19.0])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0].sin()).collect();
        matrix(&inputs, &targets)
    }

    fn xor_data() -> FeatureMatrix {
        matrix(
            &[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            &[0.0, 1.0, 1.0, 0.0],
        )
    }

    /// Central finite difference of the single-pattern error, the
    /// test-side oracle for [`gradient`].
    fn fd_gradient(mlp: &Mlp, x: &[f64], target: f64, h: f64) -> Vec<f64> {
        let base = mlp.params();
        let mut out = Vec::with_capacity(base.len());
        let mut probe = mlp.clone();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            probe.set_params(&plus).unwrap();
            let ep = {
                let e = target - probe.predict_scalar(x).unwrap();
                0.5 * e * e
            };
            let mut minus = base.clone();
            minus[i] -= h;
            probe.set_params(&minus).unwrap();
            let em = {
                let e = target - probe.predict_scalar(x).unwrap();
                0.5 * e * e
            };
            out.push((ep - em) / (2.0 * h));
        }
        out
    }

    /// Largest deviation between two vectors, scaled by the oracle's
    /// infinity norm so near-zero components cannot blow up the ratio.
    fn scaled_max_err(got: &[f64], oracle: &[f64]) -> f64 {
        let norm = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        got.iter()
            .zip(oracle)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / norm
    }

    #[test]
    fn single_neuron_update_matches_hand_computation() {
        // 1-1 logsig network, one pattern, one epoch, no momentum.
        let mut mlp = net("1-1", "logsig", 0);
        let (w0, b0, x, d, eta) = (0.4, -0.1, 0.7, 0.9, 0.5);
        mlp.set_params(&[w0, b0]).unwrap();
        let data = matrix(&[vec![x]], &[d]);

        let cfg = TrainConfig {
            trainer: Trainer::Gdm,
            eta,
            alpha: 0.0,
            max_epochs: 1,
            goal_mse: 0.0,
            ..Default::default()
        };
        train_gdm(&mut mlp, &data, &cfg).unwrap();

        let v: f64 = w0 * x + b0;
        let o = 1.0 / (1.0 + (-v).exp());
        let delta = (d - o) * o * (1.0 - o);
        let w1 = w0 + eta * delta * x;
        let b1 = b0 + eta * delta;
        let got = mlp.params();
        assert!((got[0] - w1).abs() < 1e-15, "{} vs {w1}", got[0]);
        assert!((got[1] - b1).abs() < 1e-15, "{} vs {b1}", got[1]);
    }

    #[test]
    fn momentum_carries_previous_update() {
        // Two epochs over one pattern; the second step must include
        // alpha times the first step.
        let (w0, b0, x, d, eta, alpha) = (0.2, 0.1, 0.5, 0.8, 0.3, 0.9);
        let mut mlp = net("1-1", "logsig", 0);
        mlp.set_params(&[w0, b0]).unwrap();
        let data = matrix(&[vec![x]], &[d]);
        let cfg = TrainConfig {
            trainer: Trainer::Gdm,
            eta,
            alpha,
            max_epochs: 2,
            goal_mse: 0.0,
            ..Default::default()
        };
        train_gdm(&mut mlp, &data, &cfg).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let step = |w: f64, b: f64| {
            let o = sig(w * x + b);
            (d - o) * o * (1.0 - o)
        };
        let d1 = step(w0, b0);
        let (vw1, vb1) = (eta * d1 * x, eta * d1);
        let (w1, b1) = (w0 + vw1, b0 + vb1);
        let d2 = step(w1, b1);
        let (vw2, vb2) = (eta * d2 * x + alpha * vw1, eta * d2 + alpha * vb1);
        let (w2, b2) = (w1 + vw2, b1 + vb2);

        let got = mlp.params();
        assert!((got[0] - w2).abs() < 1e-15);
        assert!((got[1] - b2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cases = [
            ("3-4-1", "logsig-tansig"),
            ("2-3-1", "tansig-linear"),
            ("4-5-3-1", "logsig-logsig-tansig"),
            ("2-2-2-1", "tansig-tansig-logsig"),
        ];
        for (seed, (topo, acts)) in cases.iter().enumerate() {
            let mlp = net(topo, acts, seed as u64 + 10);
            let x: Vec<f64> = (0..mlp.input_dim()).map(|i| 0.1 + 0.17 * i as f64).collect();
            let target = 0.7;
            let got = gradient(&mlp, &x, target).unwrap();
            let oracle = fd_gradient(&mlp, &x, target, 1e-5);
            let err = scaled_max_err(&got, &oracle);
            assert!(err < 1e-8, "{topo} {acts}: scaled error {err}");
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_pattern_gradients() {
        let mlp = net("2-3-1", "logsig-tansig", 5);
        let data = xor_data();
        let batch = batch_gradient(&mlp, &data).unwrap();
        let mut manual = vec![0.0; mlp.num_params()];
        for p in 0..data.n_rows() {
            let g = gradient(&mlp, data.input_row(p), data.target(p)).unwrap();
            for (m, gi) in manual.iter_mut().zip(&g) {
                *m += gi;
            }
        }
        assert!(scaled_max_err(&batch, &manual) < 1e-14);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mlp = net("2-4-2-1", "logsig-tansig-linear", 8);
        let data = xor_data();
        let jac = jacobian(&mlp, &data).unwrap();
        assert_eq!(jac.rows, 4);
        assert_eq!(jac.cols, mlp.num_params());

        let h = 1e-5;
        let base = mlp.params();
        let mut probe = mlp.clone();
        for p in 0..data.n_rows() {
            let mut oracle = Vec::with_capacity(base.len());
            for t in 0..base.len() {
                let mut plus = base.clone();
                plus[t] += h;
                probe.set_params(&plus).unwrap();
                let op = probe.predict_scalar(data.input_row(p)).unwrap();
                let mut minus = base.clone();
                minus[t] -= h;
                probe.set_params(&minus).unwrap();
                let om = probe.predict_scalar(data.input_row(p)).unwrap();
                oracle.push((op - om) / (2.0 * h));
            }
            let err = scaled_max_err(jac.row(p), &oracle);
            assert!(err < 1e-8, "pattern {p}: scaled error {err}");
        }
    }

    #[test]
    fn gdm_is_deterministic_per_seed() {
        let data = xor_data();
        let cfg = TrainConfig {
            trainer: Trainer::Gdm,
            eta: 0.5,
            alpha: 0.9,
            max_epochs: 50,
            goal_mse: 0.0,
            seed: 7,
            ..Default::default()
        };
        let mut a = net("2-4-1", "tansig-logsig", 1);
        let mut b = net("2-4-1", "tansig-logsig", 1);
        let ra = train_gdm(&mut a, &data, &cfg).unwrap();
        let rb = train_gdm(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params(), b.params());

        let mut c = net("2-4-1", "tansig-logsig", 1);
        let rc = train_gdm(&mut c, &data, &TrainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(ra.history.last().unwrap().mse, rc.history.last().unwrap().mse);
    }

    #[test]
    fn gdm_learns_xor() {
        let data = xor_data();
        let cfg = TrainConfig {
            trainer: Trainer::Gdm,
            eta: 0.5,
            alpha: 0.9,
            max_epochs: 4000,
            goal_mse: 0.01,
            seed: 3,
            ..Default::default()
        };
        let mut mlp = net("2-4-1", "tansig-logsig", 2);
        let record = train(&mut mlp, &data, &cfg).unwrap();
        assert!(
            record.final_mse() <= 0.01,
            "final mse {} after {} epochs",
            record.final_mse(),
            record.epochs_run()
        );
        for p in 0..4 {
            let out = mlp.predict_scalar(data.input_row(p)).unwrap();
            assert_eq!(out.round(), data.target(p), "pattern {p}: {out}");
        }
    }

    #[test]
    fn lm_fits_sine_quickly() {
        let data = sin_data();
        let cfg = TrainConfig {
            max_epochs: 200,
            ..Default::default()
        };
        let mut mlp = net("1-8-1", "tansig-linear", 4);
        let record = train_lm(&mut mlp, &data, &cfg).unwrap();
        assert_eq!(record.stop, StopReason::GoalReached);
        assert!(record.final_mse() <= 1e-3);
        assert!(record.epochs_run() <= 200);
    }

    #[test]
    fn lm_accepted_steps_never_increase_error() {
        let data = sin_data();
        let cfg = TrainConfig {
            max_epochs: 120,
            goal_mse: 0.0,
            ..Default::default()
        };
        let mut mlp = net("1-8-1", "tansig-linear", 11);
        let record = train_lm(&mut mlp, &data, &cfg).unwrap();

        let mut last = record.history[0].mse;
        let mut accepted = 0;
        for r in &record.history[1..] {
            match r.accepted {
                Some(true) => {
                    assert!(r.mse < last, "epoch {}: {} >= {last}", r.epoch, r.mse);
                    last = r.mse;
                    accepted += 1;
                }
                Some(false) => assert_eq!(r.mse, last, "rejected step moved the error"),
                None => panic!("lm history entry without accept flag"),
            }
        }
        assert!(accepted > 0);
        assert_eq!(record.accepted_steps(), accepted);
    }

    #[test]
    fn lm_beats_gdm_on_the_sine_fit() {
        // Same budget, same start; lm should reach a far lower error.
        let data = sin_data();
        let mut lm_net = net("1-8-1", "tansig-linear", 4);
        let mut gdm_net = lm_net.clone();
        let lm_rec = train_lm(
            &mut lm_net,
            &data,
            &TrainConfig {
                max_epochs: 150,
                goal_mse: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let gdm_rec = train_gdm(
            &mut gdm_net,
            &data,
            &TrainConfig {
                trainer: Trainer::Gdm,
                eta: 0.05,
                alpha: 0.9,
                max_epochs: 150,
                goal_mse: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(lm_rec.final_mse() < gdm_rec.final_mse() / 10.0);
    }

    #[test]
    fn huge_damping_step_follows_the_gradient() {
        // For large mu, (J^T J + mu I) is mu I to first order, so the step
        // collapses to J^T e / mu, the steepest-descent direction.
        let data = sin_data();
        let mlp = net("1-8-1", "tansig-linear", 9);
        let mu = 1e12;
        let step = lm_step(&mlp, &data, mu).unwrap();
        let descent: Vec<f64> = batch_gradient(&mlp, &data)
            .unwrap()
            .iter()
            .map(|g| -g)
            .collect();

        let dot: f64 = step.iter().zip(&descent).map(|(a, b)| a * b).sum();
        let ns: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nd: f64 = descent.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = dot / (ns * nd);
        assert!(cosine > 0.99, "cosine {cosine}");

        // And the magnitude matches (1/mu) J^T e.
        for (s, d) in step.iter().zip(&descent) {
            assert!((s - d / mu).abs() < 1e-9 * d.abs().max(1e-12));
        }
    }

    #[test]
    fn goal_stop_can_happen_immediately() {
        let data = matrix(&[vec![0.2], vec![0.8]], &[0.0, 0.0]);
        let mut mlp = net("1-1", "linear", 0);
        mlp.set_params(&[0.0, 0.0]).unwrap();
        let record = train_lm(&mut mlp, &data, &TrainConfig::default()).unwrap();
        assert_eq!(record.stop, StopReason::GoalReached);
        assert_eq!(record.epochs_run(), 0);
    }

    #[test]
    fn lm_stops_on_mu_limit_at_an_unreachable_goal() {
        // Identical inputs with different targets: the best any network can
        // do is predict the mean, then every further step is rejected and
        // mu climbs past the cap.
        let data = matrix(&[vec![0.3], vec![0.3]], &[0.0, 1.0]);
        let mut mlp = net("1-1", "linear", 6);
        let cfg = TrainConfig {
            max_epochs: 500,
            goal_mse: 1e-9,
            ..Default::default()
        };
        let record = train_lm(&mut mlp, &data, &cfg).unwrap();
        assert_eq!(record.stop, StopReason::MuExceeded);
        // Residuals at the optimum are +-0.5, so the mse settles at 0.25.
        assert!((record.final_mse() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gdm_divergence_is_reported() {
        let data = matrix(&[vec![1.0], vec![2.0]], &[0.0, 5.0]);
        let mut mlp = net("1-1", "linear", 1);
        let cfg = TrainConfig {
            trainer: Trainer::Gdm,
            eta: 1e6,
            alpha: 0.0,
            max_epochs: 200,
            goal_mse: 0.0,
            ..Default::default()
        };
        match train_gdm(&mut mlp, &data, &cfg) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { eta: 0.0, ..ok }.validate().is_err());
        assert!(TrainConfig { alpha: 1.0, ..ok }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..ok }.validate().is_err());
        assert!(TrainConfig { goal_mse: -1.0, ..ok }.validate().is_err());
        assert!(TrainConfig { lm_mu0: 0.0, ..ok }.validate().is_err());
        assert!(TrainConfig { lm_mu_inc: 1.0, ..ok }.validate().is_err());
        assert!(TrainConfig { lm_mu_dec: 1.0, ..ok }.validate().is_err());
        assert!(TrainConfig { lm_mu_max: 1e-9, ..ok }.validate().is_err());
    }

    #[test]
    fn trainer_parsing() {
        assert_eq!(Trainer::parse("gdm").unwrap(), Trainer::Gdm);
        assert_eq!(Trainer::parse("momentum").unwrap(), Trainer::Gdm);
        assert_eq!(Trainer::parse("LM").unwrap(), Trainer::Lm);
        assert_eq!(Trainer::parse("levenberg-marquardt").unwrap(), Trainer::Lm);
        assert!(Trainer::parse("adam").is_err());
    }

    #[test]
    fn multi_output_networks_are_rejected() {
        let data = xor_data();
        let mut mlp = net("2-3-2", "logsig-linear", 0);
        assert!(train_gdm(&mut mlp, &data, &TrainConfig::default()).is_err());
        assert!(jacobian(&mlp, &data).is_err());
        assert!(gradient(&mlp, &[0.0, 0.0], 1.0).is_err());
    }
}
