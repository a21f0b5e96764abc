//! Multilayer perceptron: topology, activations, forward pass, persistence.
//!
//! A network is a stack of fully connected layers. Layer weights are stored
//! row-major (one row per output neuron) and every layer has a bias vector.
//! The flattened parameter order is frozen: for each layer from input to
//! output, all weights row-major, then the biases. Training, gradient
//! checks, and the model file format all rely on that order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Codebook, FeatureMatrix, NormBounds};
use crate::error::{Error, Result};

/// Neuron transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Logistic sigmoid, output in (0, 1).
    Logsig,
    /// Hyperbolic tangent, output in (-1, 1).
    Tansig,
    /// Identity.
    Linear,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Logsig => 1.0 / (1.0 + (-v).exp()),
            Activation::Tansig => v.tanh(),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activation output `y = f(v)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Logsig => y * (1.0 - y),
            Activation::Tansig => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Logsig => "logsig",
            Activation::Tansig => "tansig",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logsig" => Ok(Activation::Logsig),
            "tansig" => Ok(Activation::Tansig),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidParam(format!(
                "unknown activation `{other}` (expected logsig, tansig, or linear)"
            ))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a dash-separated activation chain such as `logsig-logsig-tansig`.
pub fn parse_activations(s: &str) -> Result<Vec<Activation>> {
    s.split('-').map(Activation::parse).collect()
}

/// Layer widths from input to output, e.g. `8-10-10-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology(Vec<usize>);

impl Topology {
    pub fn new(units: Vec<usize>) -> Result<Self> {
        if units.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "topology needs at least an input and an output layer, got {} entries",
                units.len()
            )));
        }
        if units.iter().any(|&u| u == 0) {
            return Err(Error::InvalidParam("topology has a zero-width layer".into()));
        }
        Ok(Self(units))
    }

    pub fn units(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Number of weight layers (one fewer than the unit entries).
    pub fn layer_count(&self) -> usize {
        self.0.len() - 1
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let units = s
            .split('-')
            .map(|p| {
                p.parse::<usize>().map_err(|_| {
                    Error::InvalidParam(format!("bad topology `{s}`: `{p}` is not a layer width"))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        Topology::new(units)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    /// Row-major: `weights[o * in_dim + i]` feeds output neuron `o` from input `i`.
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
    pub(crate) activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `y = f(Wx + b)`, also returning the pre-activation vector.
    fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let v: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.biases[o];
            pre.push(v);
        }
        let post = pre.iter().map(|&v| self.activation.apply(v)).collect();
        (pre, post)
    }
}

/// Per-layer intermediate values of one forward pass, kept for training.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Pre-activation vectors, one per layer.
    pub pre: Vec<Vec<f64>>,
    /// Activation outputs, one per layer; the last entry is the network output.
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("cache has at least one layer")
    }
}

/// A feed-forward network of fully connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Fresh network with weights and biases drawn uniformly from
    /// [-0.5, 0.5] by a seeded generator. Draw order follows the frozen
    /// parameter order, so a seed pins every initial parameter.
    pub fn new(topology: &Topology, activations: &[Activation], seed: u64) -> Result<Self> {
        if activations.len() != topology.layer_count() {
            return Err(Error::ShapeMismatch(format!(
                "topology {topology} has {} layers but {} activations were given",
                topology.layer_count(),
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-0.5, 0.5);
        let units = topology.units();
        let layers = (0..topology.layer_count())
            .map(|l| {
                let (in_dim, out_dim) = (units[l], units[l + 1]);
                let weights = (0..in_dim * out_dim).map(|_| dist.sample(&mut rng)).collect();
                let biases = (0..out_dim).map(|_| dist.sample(&mut rng)).collect();
                Layer {
                    in_dim,
                    out_dim,
                    weights,
                    biases,
                    activation: activations[l],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn topology(&self) -> Topology {
        let mut units = vec![self.input_dim()];
        units.extend(self.layers.iter().map(|l| l.out_dim));
        Topology::new(units).expect("layer dims are valid")
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.eval(&cur).1;
        }
        Ok(cur)
    }

    /// Forward pass that records every pre- and post-activation vector.
    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let (v, y) = layer.eval(&cur);
            cur = y.clone();
            pre.push(v);
            post.push(y);
        }
        Ok(ForwardCache {
            input: x.to_vec(),
            pre,
            post,
        })
    }

    /// Single-output convenience used throughout the demand pipeline.
    pub fn predict_scalar(&self, x: &[f64]) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "predict_scalar needs a single-output network, got {} outputs",
                self.output_dim()
            )));
        }
        Ok(self.forward(x)?[0])
    }

    /// Scalar predictions for every row of an encoded matrix.
    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..m.n_rows()).map(|i| self.predict_scalar(m.input_row(i))).collect()
    }

    /// Flattened parameters in the frozen order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Overwrites all parameters from a flat slice in the frozen order.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: self.num_params(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    topology: String,
    activations: Vec<String>,
    layers: Vec<LayerFile>,
    target_bounds: NormBounds,
    codebooks: Vec<Codebook>,
}

/// A trained network together with everything needed to score raw rows:
/// the codebooks for encoding and the bounds for denormalizing outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mlp: Mlp,
    pub codebooks: Vec<Codebook>,
    pub target_bounds: NormBounds,
}

/// Writes a model as JSON. Numbers are emitted in shortest round-trip form,
/// so a load returns bit-identical parameters.
pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let file = ModelFile {
        topology: bundle.mlp.topology().to_string(),
        activations: bundle.mlp.activations().iter().map(|a| a.name().to_string()).collect(),
        layers: bundle
            .mlp
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: l.weights.clone(),
                biases: l.biases.clone(),
            })
            .collect(),
        target_bounds: bundle.target_bounds,
        codebooks: bundle.codebooks.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a model written by [`save_model`], validating shape consistency.
pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;

    let topology: Topology = file
        .topology
        .parse()
        .map_err(|e| Error::ModelFormat(format!("{e}")))?;
    if file.activations.len() != topology.layer_count() {
        return Err(Error::ModelFormat(format!(
            "{} activations for topology {}",
            file.activations.len(),
            topology
        )));
    }
    if file.layers.len() != topology.layer_count() {
        return Err(Error::ModelFormat(format!(
            "{} layers for topology {}",
            file.layers.len(),
            topology
        )));
    }
    let activations = file
        .activations
        .iter()
        .map(|s| Activation::parse(s))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ModelFormat(format!("{e}")))?;

    let units = topology.units();
    let mut layers = Vec::with_capacity(file.layers.len());
    for (l, lf) in file.layers.into_iter().enumerate() {
        let (in_dim, out_dim) = (units[l], units[l + 1]);
        if lf.weights.len() != in_dim * out_dim || lf.biases.len() != out_dim {
            return Err(Error::ModelFormat(format!(
                "layer {l} has {} weights and {} biases, expected {} and {}",
                lf.weights.len(),
                lf.biases.len(),
                in_dim * out_dim,
                out_dim
            )));
        }
        if lf.weights.iter().chain(&lf.biases).any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat(format!("layer {l} has a non-finite parameter")));
        }
        layers.push(Layer {
            in_dim,
            out_dim,
            weights: lf.weights,
            biases: lf.biases,
            activation: activations[l],
        });
    }

    for cb in &file.codebooks {
        if cb.len() < 2 {
            return Err(Error::ModelFormat(format!(
                "codebook `{}` has fewer than 2 labels",
                cb.feature()
            )));
        }
    }
    if !(file.target_bounds.max() > file.target_bounds.min()) {
        return Err(Error::ModelFormat("degenerate target bounds".into()));
    }

    Ok(ModelBundle {
        mlp: Mlp { layers },
        codebooks: file.codebooks,
        target_bounds: file.target_bounds,
    })
}
