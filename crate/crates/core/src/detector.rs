//! The commutative neural detector.
//!
//! Both vectors are standardized with statistics frozen from the training
//! pairs, expanded by the fixed layer `[f, f', f - f']`, and fed to the
//! network in both orders; the statistic is the mean of the two outputs and
//! is read as the log posterior odds of H1 (different locations). The
//! decision threshold is 0.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dataset::{build_pair_set, LabeledPair, LocationSplit, MeasurementSet, PairLabel, PairSet};
use crate::error::{Error, Result};
use crate::neural::{self, EpochRecord, GradientBundle, MlpParams, Objective, TrainConfig};
use crate::seed::{self, tag};

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// Same transmitter location.
    H0,
    /// Different transmitter locations.
    H1,
}

impl Hypothesis {
    pub fn matches(self, label: PairLabel) -> bool {
        matches!(
            (self, label),
            (Hypothesis::H0, PairLabel::Same) | (Hypothesis::H1, PairLabel::Diff)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    /// `P[H1 | f, f']`.
    pub posterior: f64,
}

impl Decision {
    /// H1 iff `statistic > 0`; a statistic of exactly 0 decides H0.
    pub fn from_statistic(statistic: f64) -> Self {
        Decision {
            hypothesis: if statistic > 0.0 {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            },
            statistic,
            posterior: sigmoid(statistic),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `[f, f', f - f']`.
pub fn fixed_first_layer(f: &[f64], f_prime: &[f64]) -> Result<Vec<f64>> {
    if f.len() != f_prime.len() {
        return Err(Error::Dimension {
            context: "feature pair",
            expected: f.len(),
            got: f_prime.len(),
        });
    }
    let mut out = Vec::with_capacity(3 * f.len());
    out.extend_from_slice(f);
    out.extend_from_slice(f_prime);
    out.extend(f.iter().zip(f_prime).map(|(a, b)| a - b));
    Ok(out)
}

/// Per-feature affine standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(num_features: usize) -> Self {
        Standardizer {
            mean: vec![0.0; num_features],
            std: vec![1.0; num_features],
        }
    }

    /// Mean and population standard deviation over every vector (both
    /// sides) of the pair set.
    pub fn fit(pairs: &PairSet) -> Result<Self> {
        let m = pairs.num_features();
        if pairs.is_empty() || m == 0 {
            return Err(Error::Infeasible(
                "cannot fit standardization on an empty pair set".into(),
            ));
        }
        let count = 2.0 * pairs.len() as f64;
        let vectors = || pairs.pairs.iter().flat_map(|p| [&p.first, &p.second]);
        let mut mean = vec![0.0; m];
        for v in vectors() {
            for (acc, x) in mean.iter_mut().zip(v.iter()) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|s| *s /= count);
        let mut var = vec![0.0; m];
        for v in vectors() {
            for ((acc, x), mu) in var.iter_mut().zip(v.iter()).zip(&mean) {
                *acc += (x - mu) * (x - mu);
            }
        }
        let std = var.iter().map(|s| (s / count).sqrt().max(STD_FLOOR)).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn num_features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (mu, sd))| (x - mu) / sd)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Dimension {
                context: "standardization statistics",
                expected: self.mean.len(),
                got: self.std.len(),
            });
        }
        if self.mean.iter().any(|v| !v.is_finite()) || self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::NonFinite("standardization statistics"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    pub params: MlpParams,
    pub standardizer: Standardizer,
}

impl DetectorModel {
    pub fn new(params: MlpParams, standardizer: Standardizer) -> Result<Self> {
        params.validate()?;
        standardizer.validate()?;
        if params.input_size() != 3 * standardizer.num_features() {
            return Err(Error::Dimension {
                context: "network input (3 x features)",
                expected: 3 * standardizer.num_features(),
                got: params.input_size(),
            });
        }
        Ok(DetectorModel { params, standardizer })
    }

    pub fn num_features(&self) -> usize {
        self.standardizer.num_features()
    }

    fn check_input(&self, f: &[f64], f_prime: &[f64]) -> Result<()> {
        for v in [f, f_prime] {
            if v.len() != self.num_features() {
                return Err(Error::Dimension {
                    context: "feature vector",
                    expected: self.num_features(),
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("feature vector"));
            }
        }
        Ok(())
    }

    /// `(g~(f, f') + g~(f', f)) / 2`.
    pub fn statistic(&self, f: &[f64], f_prime: &[f64]) -> Result<f64> {
        self.check_input(f, f_prime)?;
        let (a, b) = (self.standardizer.apply(f), self.standardizer.apply(f_prime));
        let forward = neural::forward(&self.params, &fixed_first_layer(&a, &b)?)?;
        let reverse = neural::forward(&self.params, &fixed_first_layer(&b, &a)?)?;
        Ok((forward + reverse) / 2.0)
    }

    pub fn decide(&self, f: &[f64], f_prime: &[f64]) -> Result<Decision> {
        Ok(Decision::from_statistic(self.statistic(f, f_prime)?))
    }

    /// Statistics for many pairs in one batched pass.
    pub fn statistics(&self, pairs: &[LabeledPair]) -> Result<Vec<f64>> {
        for p in pairs {
            self.check_input(&p.first, &p.second)?;
        }
        let inputs = network_inputs(&self.standardizer, pairs);
        let out = self.params.predict_batch(inputs.view())?;
        let n = pairs.len();
        Ok((0..n).map(|i| (out[i] + out[i + n]) / 2.0).collect())
    }

    pub fn accuracy(&self, pairs: &PairSet) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Infeasible("accuracy of an empty pair set".into()));
        }
        let stats = self.statistics(&pairs.pairs)?;
        let hits = stats
            .iter()
            .zip(&pairs.pairs)
            .filter(|(s, p)| Decision::from_statistic(**s).hypothesis.matches(p.label))
            .count();
        Ok(hits as f64 / pairs.len() as f64)
    }
}

/// Rows `0..n` hold `[f, f', f - f']`, rows `n..2n` the swapped order, both
/// after standardization.
fn network_inputs(standardizer: &Standardizer, pairs: &[LabeledPair]) -> Array2<f64> {
    let n = pairs.len();
    let m = standardizer.num_features();
    let mut x = Array2::zeros((2 * n, 3 * m));
    for (i, p) in pairs.iter().enumerate() {
        let (a, b) = (standardizer.apply(&p.first), standardizer.apply(&p.second));
        for k in 0..m {
            x[[i, k]] = a[k];
            x[[i, m + k]] = b[k];
            x[[i, 2 * m + k]] = a[k] - b[k];
            x[[n + i, k]] = b[k];
            x[[n + i, m + k]] = a[k];
            x[[n + i, 2 * m + k]] = b[k] - a[k];
        }
    }
    x
}

fn label_target(label: PairLabel) -> f64 {
    match label {
        PairLabel::Same => 0.0,
        PairLabel::Diff => 1.0,
    }
}

/// Mean negative log-likelihood of the pair labels under `sigmoid(g)`.
pub fn pair_loss(model: &DetectorModel, pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Infeasible("loss of an empty pair set".into()));
    }
    let stats = model.statistics(&pairs.pairs)?;
    let total: f64 = stats
        .iter()
        .zip(&pairs.pairs)
        .map(|(&g, p)| match p.label {
            PairLabel::Same => softplus(g),
            PairLabel::Diff => softplus(-g),
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Training objective over a fixed pair set, inputs precomputed.
pub struct PairObjective {
    inputs: Array2<f64>,
    targets: Vec<f64>,
}

impl PairObjective {
    pub fn new(standardizer: &Standardizer, pairs: &PairSet) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Infeasible("training pair set is empty".into()));
        }
        if pairs.num_features() != standardizer.num_features() {
            return Err(Error::Dimension {
                context: "pair features",
                expected: standardizer.num_features(),
                got: pairs.num_features(),
            });
        }
        Ok(PairObjective {
            inputs: network_inputs(standardizer, &pairs.pairs),
            targets: pairs.pairs.iter().map(|p| label_target(p.label)).collect(),
        })
    }

    pub fn standardized_inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }
}

impl Objective for PairObjective {
    fn num_examples(&self) -> usize {
        self.targets.len()
    }

    fn loss_and_gradient(&self, params: &MlpParams, batch: &[usize]) -> Result<(f64, GradientBundle)> {
        let n = self.targets.len();
        let b = batch.len();
        let rows: Vec<usize> = batch.iter().copied().chain(batch.iter().map(|i| i + n)).collect();
        let x = self.inputs.select(Axis(0), &rows);
        let cache = params.forward_batch(x.view())?;
        let out = cache.output();
        let mut loss = 0.0;
        let mut upstream = Array1::zeros(2 * b);
        for (r, &i) in batch.iter().enumerate() {
            let g = (out[r] + out[r + b]) / 2.0;
            let y = self.targets[i];
            loss += if y > 0.5 { softplus(-g) } else { softplus(g) };
            // d(loss)/dg = sigmoid(g) - y; each orientation carries half of g.
            let d = (sigmoid(g) - y) / (2.0 * b as f64);
            upstream[r] = d;
            upstream[r + b] = d;
        }
        let grads = params.backward_batch(&cache, upstream.view())?;
        Ok((loss / b as f64, grads))
    }
}

/// Loss and its gradient with respect to the network parameters.
pub fn pair_loss_gradient(model: &DetectorModel, pairs: &PairSet) -> Result<(f64, GradientBundle)> {
    let objective = PairObjective::new(&model.standardizer, pairs)?;
    let all: Vec<usize> = (0..pairs.len()).collect();
    objective.loss_and_gradient(&model.params, &all)
}

#[derive(Clone, Debug)]
pub struct TrainedDetector {
    pub model: DetectorModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Builds training and validation pairs from the split, then trains.
pub fn train_detector(
    ms: &MeasurementSet,
    split: &LocationSplit,
    k_train: usize,
    k_val: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedDetector> {
    let train = build_pair_set(ms, &split.train, k_train, seed::derive(seed, &[tag::PAIRS_TRAIN]))?;
    let val = build_pair_set(ms, &split.validation, k_val, seed::derive(seed, &[tag::PAIRS_VAL]))?;
    train_detector_on_pairs(&train, &val, cfg, seed)
}

/// Fresh initialization from `seed`; standardization fitted on `train`;
/// early stopping on accuracy over `val`. `cfg.seed` is ignored in favor of
/// a stream derived from `seed`.
pub fn train_detector_on_pairs(
    train: &PairSet,
    val: &PairSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedDetector> {
    if val.is_empty() {
        return Err(Error::Infeasible("validation pair set is empty".into()));
    }
    let standardizer = Standardizer::fit(train)?;
    let objective = PairObjective::new(&standardizer, train)?;
    let sizes = neural::detector_layer_sizes(3 * standardizer.num_features());
    let params = MlpParams::init(&sizes, cfg.negative_slope, seed::derive(seed, &[tag::INIT]))?;
    let cfg = TrainConfig {
        seed: seed::derive(seed, &[tag::SHUFFLE]),
        ..cfg.clone()
    };
    let outcome = neural::train_loop(
        params,
        &objective,
        |p| {
            let model = DetectorModel {
                params: p.clone(),
                standardizer: standardizer.clone(),
            };
            model.accuracy(val)
        },
        &cfg,
    )?;
    Ok(TrainedDetector {
        model: DetectorModel::new(outcome.params, standardizer)?,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
    })
}
