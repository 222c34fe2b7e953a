use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Pre-normalization norms below this are treated as the zero vector.
pub const NORM_EPSILON: f64 = 1e-12;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One affine layer, `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Layer {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

/// Parameter gradients, mirroring the layer shapes of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<Layer>,
}

impl ModelGrads {
    pub fn zeros_like(model: &EmbeddingModel) -> Self {
        ModelGrads {
            layers: model.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    /// Flattens weights then biases, layer by layer.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub(crate) fn matches(&self, model: &EmbeddingModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, p)| g.same_shape(p))
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in layers {
        out.extend(layer.weight.iter().copied());
        out.extend(layer.bias.iter().copied());
    }
    out
}

/// Normalized embeddings for a batch.
#[derive(Debug, Clone)]
pub struct Embeddings {
    /// One unit-norm row per input row.
    pub rows: Array2<f64>,
    /// Rows whose pre-normalization vector was (numerically) zero and were
    /// replaced by the first canonical basis vector.
    pub degenerate: Vec<bool>,
}

impl Embeddings {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Intermediates of a forward pass needed by backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself for layer 0).
    layer_inputs: Vec<Array2<f64>>,
    /// Affine output of each layer before activation / normalization.
    pre_activations: Vec<Array2<f64>>,
    /// Pre-normalization norm of every output row.
    norms: Array1<f64>,
    pub embeddings: Embeddings,
}

/// MLP embedding head with terminal L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    activation: Activation,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "model needs at least an input and an output dimension, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d < 1) {
        return Err(Error::Config(format!("layer dimensions must be >= 1, got {dims:?}")));
    }
    if dims[dims.len() - 1] < 2 {
        return Err(Error::Config(format!(
            "embedding dimension must be >= 2, got {}",
            dims[dims.len() - 1]
        )));
    }
    Ok(())
}

/// He-normal initialization (variance `2 / fan_in`), zero biases.
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<EmbeddingModel> {
    validate_dims(layer_dims)?;
    let mut rng = rng_from_seed(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(EmbeddingModel {
        layer_dims: layer_dims.to_vec(),
        layers,
        activation: Activation::Relu,
    })
}

impl EmbeddingModel {
    /// Builds a model from explicit layers, checking shapes and finiteness.
    pub fn from_layers(layer_dims: &[usize], layers: Vec<Layer>) -> Result<Self> {
        validate_dims(layer_dims)?;
        if layers.len() != layer_dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers given for dims {layer_dims:?}",
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let expected = (layer_dims[i + 1], layer_dims[i]);
            if layer.weight.dim() != expected || layer.bias.len() != layer_dims[i + 1] {
                return Err(Error::Shape(format!(
                    "layer {i}: weight {:?} / bias {} do not match dims {expected:?}",
                    layer.weight.dim(),
                    layer.bias.len()
                )));
            }
            if !layer.is_finite() {
                return Err(Error::NumericInput(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(EmbeddingModel {
            layer_dims: layer_dims.to_vec(),
            layers,
            activation: Activation::Relu,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Flattens weights then biases, layer by layer.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    /// Returns a copy with parameters replaced from a flat vector laid out
    /// as in [`EmbeddingModel::to_flat`].
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut it = flat.iter();
        for layer in &mut out.layers {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(out)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericInput("batch contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Embeddings> {
        Ok(self.forward_cached(batch)?.embeddings)
    }

    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&batch)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weight.t()) + &layer.bias;
            let next = if i == last {
                z.clone()
            } else {
                self.activation.apply(&z)
            };
            layer_inputs.push(current);
            pre_activations.push(z);
            current = next;
        }

        let mut norms = Array1::zeros(current.nrows());
        let mut degenerate = vec![false; current.nrows()];
        for (r, mut row) in current.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms[r] = norm;
            if norm < NORM_EPSILON {
                degenerate[r] = true;
                row.fill(0.0);
                row[0] = 1.0;
            } else {
                row.mapv_inplace(|v| v / norm);
            }
        }
        Ok(ForwardCache {
            layer_inputs,
            pre_activations,
            norms,
            embeddings: Embeddings {
                rows: current,
                degenerate,
            },
        })
    }

    /// Gradient of `sum(upstream ⊙ forward(batch))` with respect to every
    /// parameter. Recomputes the forward pass.
    pub fn backward(&self, batch: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<ModelGrads> {
        let cache = self.forward_cached(batch)?;
        self.backward_cached(&cache, upstream)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<ModelGrads> {
        let out = &cache.embeddings.rows;
        if upstream.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                out.dim()
            )));
        }

        // Through the normalization: (I - y yᵀ) g / ‖z‖; fallback rows are constant.
        let mut delta = upstream.to_owned();
        for (r, mut g) in delta.axis_iter_mut(Axis(0)).enumerate() {
            if cache.embeddings.degenerate[r] {
                g.fill(0.0);
                continue;
            }
            let y = out.row(r);
            let proj = y.dot(&g);
            let inv_norm = 1.0 / cache.norms[r];
            g.zip_mut_with(&y, |gi, &yi| *gi = (*gi - yi * proj) * inv_norm);
        }

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &cache.layer_inputs[i];
            let weight_grad = delta.t().dot(input);
            let bias_grad = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream_act = delta.dot(&self.layers[i].weight);
                let z_prev = &cache.pre_activations[i - 1];
                let act = self.activation;
                upstream_act.zip_mut_with(z_prev, |d, &z| *d *= act.derivative(z));
                delta = upstream_act;
            }
            grads.push(Layer {
                weight: weight_grad,
                bias: bias_grad,
            });
        }
        grads.reverse();
        Ok(ModelGrads { layers: grads })
    }
}
