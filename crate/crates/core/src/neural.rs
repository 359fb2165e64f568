//! Fully connected leaky-ReLU network with a scalar linear output, manual
//! backpropagation, minibatch SGD with an l1 penalty on one layer, and an
//! early-stopping training loop driven by validation accuracy.
//!
//! Everything is `f64`. Batched passes go through `ndarray` matrix products,
//! one sample per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::seed::{self, tag};

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;

/// Init weights are `U(-b, b)` with `b = INIT_GAIN / sqrt(fan_in)`.
pub const INIT_GAIN: f64 = 2.449_489_742_783_178; // sqrt(6)

/// Hidden layer width used by the detector.
pub const HIDDEN_WIDTH: usize = 512;
pub const HIDDEN_LAYERS: usize = 3;

/// `[input, 512, 512, 512, 1]`.
pub fn detector_layer_sizes(input: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
    sizes.push(1);
    sizes
}

/// One affine map; `weights` is `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
    pub negative_slope: f64,
}

/// Gradients with the same shapes as [`MlpParams::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<DenseLayer>,
}

pub fn init_params(sizes: &[usize], seed: u64) -> Result<MlpParams> {
    MlpParams::init(sizes, DEFAULT_NEGATIVE_SLOPE, seed)
}

impl MlpParams {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(sizes: &[usize], negative_slope: f64, seed: u64) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = seed::derived_rng(seed, &[tag::INIT]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = INIT_GAIN / (w[0] as f64).sqrt();
                let dist = Uniform::new(-bound, bound).expect("bound is positive");
                DenseLayer {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || dist.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(MlpParams { layers, negative_slope })
    }

    pub fn zeros(sizes: &[usize], negative_slope: f64) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(MlpParams {
            layers: sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
            negative_slope,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(DenseLayer::outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Checks that consecutive layers chain and the output is scalar.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Infeasible("network has no layers".into()));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Dimension {
                    context: "layer chain",
                    expected: w[0].outputs(),
                    got: w[1].inputs(),
                });
            }
            if self.layers[i].bias.len() != self.layers[i].outputs() {
                return Err(Error::Dimension {
                    context: "bias length",
                    expected: self.layers[i].outputs(),
                    got: self.layers[i].bias.len(),
                });
            }
        }
        let last = self.layers.last().unwrap();
        if last.outputs() != 1 || last.bias.len() != 1 {
            return Err(Error::Dimension {
                context: "output layer",
                expected: 1,
                got: last.outputs(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(())
    }

    /// Forward pass on a batch (one sample per row), keeping what the
    /// backward pass needs.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        if inputs.ncols() != self.input_size() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_size(),
                got: inputs.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        activations.push(inputs.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights.t());
            z += &layer.bias;
            if i < last {
                let slope = self.negative_slope;
                activations.push(z.mapv(|v| if v > 0.0 { v } else { slope * v }));
            }
            preacts.push(z);
        }
        Ok(ForwardCache { activations, preacts })
    }

    /// Outputs only, for evaluation.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_batch(inputs)?.output().to_owned())
    }

    /// Gradient of `sum_r upstream[r] * output[r]` with respect to every
    /// parameter. The leaky-ReLU derivative at exactly zero is taken as the
    /// negative slope.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: ArrayView1<f64>) -> Result<GradientBundle> {
        let rows = cache.activations[0].nrows();
        if upstream.len() != rows {
            return Err(Error::Dimension {
                context: "upstream gradient",
                expected: rows,
                got: upstream.len(),
            });
        }
        let mut delta = upstream.to_owned().insert_axis(Axis(1));
        let mut grads: Vec<DenseLayer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let weights = delta.t().dot(&cache.activations[i]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(DenseLayer { weights, bias });
            if i > 0 {
                let mut back = delta.dot(&layer.weights);
                let slope = self.negative_slope;
                back.zip_mut_with(&cache.preacts[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d *= slope;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok(GradientBundle { layers: grads })
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Infeasible(
            "layer size chain needs an input and an output".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::Infeasible("layer sizes must be positive".into()));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::Dimension {
            context: "output size",
            expected: 1,
            got: *sizes.last().unwrap(),
        });
    }
    Ok(())
}

pub struct ForwardCache {
    /// Layer inputs: the batch itself, then each hidden activation.
    activations: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.preacts.last().unwrap().column(0)
    }
}

/// Scalar output for one input vector.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<f64> {
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    Ok(params.forward_batch(x)?.output()[0])
}

/// Gradient of `upstream * forward(params, input)`.
pub fn backward(params: &MlpParams, input: &[f64], upstream: f64) -> Result<GradientBundle> {
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    let cache = params.forward_batch(x)?;
    params.backward_batch(&cache, ArrayView1::from(&[upstream]))
}

impl GradientBundle {
    pub fn zeros_like(params: &MlpParams) -> Self {
        GradientBundle {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn matches(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weights.dim() == p.weights.dim() && g.bias.len() == p.bias.len())
    }
}

/// `theta <- theta - lr * (grad + l1 * sign(theta))`, with the l1 term only
/// on the weights (not biases) of layer `l1_layer`. `sign(0) = 0`.
pub fn sgd_step(
    params: &mut MlpParams,
    grads: &GradientBundle,
    learning_rate: f64,
    l1_penalty: f64,
    l1_layer: usize,
) -> Result<()> {
    if !grads.matches(params) {
        return Err(Error::Dimension {
            context: "gradient bundle",
            expected: params.num_parameters(),
            got: grads.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum(),
        });
    }
    for (i, (p, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if i == l1_layer && l1_penalty != 0.0 {
            p.weights.zip_mut_with(&g.weights, |w, &dw| {
                let sign = if *w > 0.0 {
                    1.0
                } else if *w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *w -= learning_rate * (dw + l1_penalty * sign);
            });
        } else {
            p.weights.scaled_add(-learning_rate, &g.weights);
        }
        p.bias.scaled_add(-learning_rate, &g.bias);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping;
    /// `usize::MAX` disables early stopping.
    pub patience: usize,
    /// l1 coefficient on the first trainable layer's weights.
    pub l1_penalty: f64,
    pub negative_slope: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            l1_penalty: 1e-4,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if !(self.l1_penalty >= 0.0 && self.l1_penalty.is_finite()) {
            return Err(Error::config("l1_penalty", "must be non-negative"));
        }
        if !(self.negative_slope >= 0.0 && self.negative_slope.is_finite()) {
            return Err(Error::config("negative_slope", "must be non-negative"));
        }
        Ok(())
    }
}

/// A differentiable training objective over indexed examples.
pub trait Objective {
    fn num_examples(&self) -> usize;

    /// Mean loss over the examples in `batch` and its gradient.
    fn loss_and_gradient(&self, params: &MlpParams, batch: &[usize]) -> Result<(f64, GradientBundle)>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_val_accuracy(&self) -> f64 {
        self.history[self.best_epoch - 1].val_accuracy
    }
}

/// Minibatch SGD with per-epoch reshuffling. After every epoch `validate`
/// scores the current parameters; the earliest best-scoring snapshot is
/// returned once `patience` epochs pass without a strict improvement or
/// `max_epochs` is reached.
pub fn train_loop<O, V>(
    mut params: MlpParams,
    objective: &O,
    mut validate: V,
    cfg: &TrainConfig,
) -> Result<TrainOutcome>
where
    O: Objective + ?Sized,
    V: FnMut(&MlpParams) -> Result<f64>,
{
    cfg.validate()?;
    params.validate()?;
    let n = objective.num_examples();
    if n == 0 {
        return Err(Error::Infeasible("training objective has no examples".into()));
    }
    let mut rng = seed::derived_rng(cfg.seed, &[tag::SHUFFLE]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, MlpParams)> = None;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = objective.loss_and_gradient(&params, batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            sgd_step(&mut params, &grads, cfg.learning_rate, cfg.l1_penalty, 0)?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / n as f64;
        let val_accuracy = validate(&params)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });

        match &best {
            Some((acc, _, _)) if val_accuracy <= *acc => {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_accuracy, epoch, params.clone()));
                stale = 0;
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}
