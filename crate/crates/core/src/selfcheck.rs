//! Quick invariant suite behind `spoofdetect check`.
//!
//! Each check is a scaled-down version of a property the test suite covers
//! in full, cheap enough to run on any machine in a few seconds.

use rand::Rng;

use crate::benchmarks::{kmeans, threshold_accuracy, train_dbc, train_kmc, tune_threshold, NormOrder};
use crate::dataset::{build_pair_set, MeasurementSet, PairLabel};
use crate::detector::{pair_loss, pair_loss_gradient, DetectorModel, Standardizer};
use crate::error::Result;
use crate::eval::{AlwaysH1, PairClassifier, ProvenanceOracle};
use crate::neural::MlpParams;
use crate::seed;
use crate::signal_model::{estimate_rss_vector, generate_scenario, true_rss, ScenarioConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(u64) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 7] = [
    ("commutativity", commutativity),
    ("gradient", gradient),
    ("loss_anchor", loss_anchor),
    ("threshold_optimality", threshold_optimality),
    ("kmeans_monotone", kmeans_monotone),
    ("estimator_consistency", estimator_consistency),
    ("harness_calibration", harness_calibration),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, &(name, check))| {
            let (passed, detail) = check(seed::derive(seed, &[i as u64])).unwrap_or_else(|e| (false, e.to_string()));
            CheckOutcome { name, passed, detail }
        })
        .collect()
}

fn random_corpus(m: usize, l: usize, e: usize, spread: f64, seed: u64) -> MeasurementSet {
    let mut rng = seed::rng(seed);
    let centers: Vec<f64> = (0..l * m).map(|_| rng.random_range(-80.0..-40.0)).collect();
    let mut values = Vec::with_capacity(l * e * m);
    for n in 0..l {
        for _ in 0..e {
            values.extend((0..m).map(|k| centers[n * m + k] + rng.random_range(-spread..spread)));
        }
    }
    MeasurementSet::new(m, l, e, values).expect("valid corpus")
}

fn small_detector(m: usize, seed: u64) -> Result<DetectorModel> {
    let params = MlpParams::init(&[3 * m, 12, 12, 12, 1], 0.01, seed)?;
    let mut rng = seed::rng(seed ^ 1);
    let standardizer = Standardizer {
        mean: (0..m).map(|_| rng.random_range(-70.0..-50.0)).collect(),
        std: (0..m).map(|_| rng.random_range(1.0..10.0)).collect(),
    };
    DetectorModel::new(params, standardizer)
}

fn commutativity(seed: u64) -> Result<(bool, String)> {
    let ms = random_corpus(4, 8, 6, 3.0, seed);
    let pairs = build_pair_set(&ms, &(0..8).collect::<Vec<_>>(), 50, seed)?;
    let dbc = train_dbc(&pairs, NormOrder::L1)?;
    let kmc = train_kmc(&ms, &(0..8).collect::<Vec<_>>(), &pairs, 3, seed)?;
    let mut worst = 0.0f64;
    for (i, p) in pairs.pairs.iter().enumerate() {
        let model = small_detector(4, seed::derive(seed, &[i as u64]))?;
        let (a, b) = (
            model.statistic(&p.first, &p.second)?,
            model.statistic(&p.second, &p.first)?,
        );
        worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        let swapped = dbc.decide(&p.second, &p.first)?.hypothesis == dbc.decide(&p.first, &p.second)?.hypothesis
            && kmc.decide(&p.second, &p.first)?.hypothesis == kmc.decide(&p.first, &p.second)?.hypothesis;
        if !swapped {
            return Ok((false, format!("benchmark decision changed under swap at pair {i}")));
        }
    }
    Ok((
        worst <= 1e-9,
        format!("max relative asymmetry {worst:e} over {} pairs", pairs.len()),
    ))
}

fn gradient(seed: u64) -> Result<(bool, String)> {
    let ms = random_corpus(2, 6, 4, 4.0, seed);
    let pairs = build_pair_set(&ms, &(0..6).collect::<Vec<_>>(), 8, seed)?;
    let mut model = small_detector(2, seed)?;
    let (_, grads) = pair_loss_gradient(&model, &pairs)?;
    let mut rng = seed::rng(seed ^ 2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let l = rng.random_range(0..model.params.layers.len());
        let (rows, cols) = model.params.layers[l].weights.dim();
        let idx = (rng.random_range(0..rows), rng.random_range(0..cols));
        let orig = model.params.layers[l].weights[idx];
        model.params.layers[l].weights[idx] = orig + h;
        let up = pair_loss(&model, &pairs)?;
        model.params.layers[l].weights[idx] = orig - h;
        let down = pair_loss(&model, &pairs)?;
        model.params.layers[l].weights[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.layers[l].weights[idx];
        worst = worst.max((numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    Ok((worst < 1e-4, format!("max relative error {worst:e} over 40 weights")))
}

fn loss_anchor(seed: u64) -> Result<(bool, String)> {
    let ms = random_corpus(3, 5, 4, 2.0, seed);
    let pairs = build_pair_set(&ms, &(0..5).collect::<Vec<_>>(), 25, seed)?;
    let params = MlpParams::zeros(&[9, 8, 8, 1], 0.01)?;
    let model = DetectorModel::new(params, Standardizer::fit(&pairs)?)?;
    let loss = pair_loss(&model, &pairs)?;
    let err = (loss - std::f64::consts::LN_2).abs();
    Ok((
        err <= 1e-12,
        format!("zero network loss {loss} (|loss - ln 2| = {err:e})"),
    ))
}

fn threshold_optimality(seed: u64) -> Result<(bool, String)> {
    let mut rng = seed::rng(seed);
    for set in 0..20 {
        let samples: Vec<(f64, PairLabel)> = (0..rng.random_range(1..40))
            .map(|_| {
                let label = if rng.random_bool(0.5) {
                    PairLabel::Same
                } else {
                    PairLabel::Diff
                };
                (f64::from(rng.random_range(0..30u32)) / 4.0, label)
            })
            .collect();
        let fit = tune_threshold(&samples)?;
        // Every achievable partition is realized by a threshold at a sample
        // value or below all of them.
        let best = samples
            .iter()
            .map(|s| s.0)
            .chain([f64::NEG_INFINITY])
            .map(|eta| threshold_accuracy(&samples, eta))
            .fold(0.0, f64::max);
        if fit.accuracy != best {
            return Ok((false, format!("set {set}: tuned {} vs exhaustive {best}", fit.accuracy)));
        }
    }
    Ok((true, "20 random sets match exhaustive search".into()))
}

fn kmeans_monotone(seed: u64) -> Result<(bool, String)> {
    for c in 0..10 {
        let ms = random_corpus(3, 6, 10, 5.0, seed::derive(seed, &[c]));
        let points: Vec<&[f64]> = (0..6)
            .flat_map(|n| (0..10).map(move |j| (n, j)))
            .map(|(n, j)| ms.vector(n, j))
            .collect();
        let fit = kmeans(&points, 4, 300, seed)?;
        if fit.wcss_history.windows(2).any(|w| w[1] > w[0]) {
            return Ok((false, format!("corpus {c}: WCSS increased {:?}", fit.wcss_history)));
        }
    }
    Ok((true, "WCSS non-increasing on 10 corpora".into()))
}

fn estimator_consistency(seed: u64) -> Result<(bool, String)> {
    let scenario = generate_scenario(&ScenarioConfig::default(), seed)?;
    let truth = true_rss(&scenario, 0)?.rss_db;
    let mean_error = |n: usize| -> Result<f64> {
        let mut total = 0.0;
        for s in 0..30u64 {
            let est = estimate_rss_vector(&scenario, 0, n, seed::derive(seed, &[n as u64, s]))?;
            total += est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64;
        }
        Ok(total / 30.0)
    };
    let (short, long) = (mean_error(16)?, mean_error(1024)?);
    Ok((
        long < short,
        format!("mean |error| {short:.4} dB at 16 samples, {long:.4} dB at 1024"),
    ))
}

fn harness_calibration(seed: u64) -> Result<(bool, String)> {
    let ms = random_corpus(2, 10, 5, 1.0, seed);
    let pairs = build_pair_set(&ms, &(0..10).collect::<Vec<_>>(), 500, seed)?;
    let (dummy, oracle) = (AlwaysH1.accuracy(&pairs)?, ProvenanceOracle.accuracy(&pairs)?);
    Ok((
        (dummy - 0.5).abs() <= 0.02 && oracle == 1.0,
        format!("always-H1 {dummy}, provenance oracle {oracle}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for outcome in run_all(7) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }
}
