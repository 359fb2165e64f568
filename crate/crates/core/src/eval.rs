//! Monte Carlo evaluation harness.
//!
//! One iteration draws a fresh location split, builds balanced train,
//! validation and test pair sets, trains every requested algorithm and
//! scores it on the test pairs. Iteration `r` at sweep point `s` is seeded
//! with `seed::derive(master, [sweep tag, s, r])`, so results do not depend
//! on execution order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{train_dbc, train_kmc, DbcModel, KmcModel, NormOrder};
use crate::config::ExperimentConfig;
use crate::dataset::{build_pair_set, select_features, split_locations, LabeledPair, MeasurementSet, PairSet};
use crate::detector::{train_detector_on_pairs, DetectorModel, Hypothesis};
use crate::error::{Error, Result};
use crate::model_file::SavedModel;
use crate::neural::EpochRecord;
use crate::seed::{self, tag};
use crate::signal_model::{generate_scenario, synthesize_corpus};

pub const REPORT_HEADER: &str = "algorithm,sweep_var,sweep_value,mean_accuracy,std_error,iterations";
pub const RAW_HEADER: &str = "algorithm,sweep_var,sweep_value,iteration,seed,accuracy";
pub const HISTORY_HEADER: &str = "epoch,train_loss,val_accuracy";
/// Written in place of a standard error computed from a single iteration.
pub const NOT_AVAILABLE: &str = "NA";

const SWEEP_LOCATIONS: u64 = 1;
const SWEEP_FEATURES: u64 = 2;
const CORPUS_SCENARIO: u64 = 100;
const CORPUS_ESTIMATES: u64 = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dnnc,
    Dbc1,
    Dbc2,
    Kmc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dnnc, Algorithm::Dbc1, Algorithm::Dbc2, Algorithm::Kmc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dnnc => "dnnc",
            Algorithm::Dbc1 => "dbc1",
            Algorithm::Dbc2 => "dbc2",
            Algorithm::Kmc => "kmc",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("algorithms", format!("unknown algorithm `{s}`")))
    }
}

/// Anything that can label a pair of feature vectors.
pub trait PairClassifier {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis>;

    /// Fraction of pairs whose decision matches the label.
    fn accuracy(&self, pairs: &PairSet) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Infeasible("accuracy of an empty pair set".into()));
        }
        let mut hits = 0usize;
        for p in &pairs.pairs {
            if self.classify(p)?.matches(p.label) {
                hits += 1;
            }
        }
        Ok(hits as f64 / pairs.len() as f64)
    }
}

impl PairClassifier for DbcModel {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis> {
        Ok(self.decide(&pair.first, &pair.second)?.hypothesis)
    }
}

impl PairClassifier for KmcModel {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis> {
        Ok(self.decide(&pair.first, &pair.second)?.hypothesis)
    }
}

impl PairClassifier for DetectorModel {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis> {
        Ok(self.decide(&pair.first, &pair.second)?.hypothesis)
    }

    fn accuracy(&self, pairs: &PairSet) -> Result<f64> {
        DetectorModel::accuracy(self, pairs)
    }
}

impl PairClassifier for SavedModel {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis> {
        Ok(self.decide(&pair.first, &pair.second)?.hypothesis)
    }

    fn accuracy(&self, pairs: &PairSet) -> Result<f64> {
        match self {
            // Batched forward pass.
            SavedModel::Dnnc(m) => m.accuracy(pairs),
            SavedModel::Dbc(m) => PairClassifier::accuracy(m, pairs),
            SavedModel::Kmc(m) => PairClassifier::accuracy(m, pairs),
        }
    }
}

/// Declares every pair to come from different locations.
pub struct AlwaysH1;

impl PairClassifier for AlwaysH1 {
    fn classify(&self, _: &LabeledPair) -> Result<Hypothesis> {
        Ok(Hypothesis::H1)
    }
}

/// Reads the answer off the pair provenance. Upper bound for harness checks.
pub struct ProvenanceOracle;

impl PairClassifier for ProvenanceOracle {
    fn classify(&self, pair: &LabeledPair) -> Result<Hypothesis> {
        Ok(if pair.provenance.first.0 == pair.provenance.second.0 {
            Hypothesis::H0
        } else {
            Hypothesis::H1
        })
    }
}

/// Fixed per-iteration settings.
#[derive(Clone, Debug)]
pub struct IterationSettings {
    pub k_train: usize,
    pub k_val: usize,
    pub k_test: usize,
    pub train_fraction: f64,
    pub kappa: usize,
    pub train: crate::neural::TrainConfig,
}

impl IterationSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        IterationSettings {
            k_train: cfg.k_train,
            k_val: cfg.k_val,
            k_test: cfg.k_test,
            train_fraction: cfg.train_fraction,
            kappa: cfg.kappa,
            train: cfg.train_config(),
        }
    }
}

/// Pair sets of one Monte Carlo iteration.
pub struct IterationData {
    pub train_locations: Vec<usize>,
    pub validation_locations: Vec<usize>,
    pub train: PairSet,
    pub validation: PairSet,
    pub test: PairSet,
}

impl IterationData {
    pub fn build(corpus: &MeasurementSet, used: usize, settings: &IterationSettings, seed: u64) -> Result<Self> {
        let split = split_locations(corpus, used, settings.train_fraction, seed::derive(seed, &[tag::SPLIT]))?;
        if split.test.len() < 2 {
            return Err(Error::Infeasible(format!(
                "{} locations leave {} for testing; need at least 2",
                used,
                split.test.len()
            )));
        }
        Ok(IterationData {
            train: build_pair_set(
                corpus,
                &split.train,
                settings.k_train,
                seed::derive(seed, &[tag::PAIRS_TRAIN]),
            )?,
            validation: build_pair_set(
                corpus,
                &split.validation,
                settings.k_val,
                seed::derive(seed, &[tag::PAIRS_VAL]),
            )?,
            test: build_pair_set(
                corpus,
                &split.test,
                settings.k_test,
                seed::derive(seed, &[tag::PAIRS_TEST]),
            )?,
            train_locations: split.train,
            validation_locations: split.validation,
        })
    }

    /// Training and validation pairs together, for the baselines that do not
    /// need a held-out set.
    pub fn fitting_pairs(&self) -> PairSet {
        let mut pairs = self.train.pairs.clone();
        pairs.extend(self.validation.pairs.iter().cloned());
        let mut sorted = pairs;
        sorted.sort_by_key(|p| p.label);
        PairSet {
            pairs: sorted,
            per_class: self.train.per_class + self.validation.per_class,
        }
    }

    pub fn fitting_locations(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .train_locations
            .iter()
            .chain(&self.validation_locations)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    pub accuracies: Vec<(Algorithm, f64)>,
    /// Training history of the network, when it was trained.
    pub history: Option<Vec<EpochRecord>>,
}

/// A fitted algorithm and, for the network, its training history.
pub struct TrainedAlgorithm {
    pub model: SavedModel,
    pub history: Option<Vec<EpochRecord>>,
}

/// Fits one algorithm on the training side of an iteration. The network
/// early-stops on the validation pairs; the baselines have no stopping rule
/// and fit their threshold on training and validation pairs together.
pub fn train_algorithm(
    algorithm: Algorithm,
    corpus: &MeasurementSet,
    data: &IterationData,
    settings: &IterationSettings,
    seed: u64,
) -> Result<TrainedAlgorithm> {
    let (model, history) = match algorithm {
        Algorithm::Dnnc => {
            let trained = train_detector_on_pairs(&data.train, &data.validation, &settings.train, seed)?;
            (SavedModel::Dnnc(trained.model), Some(trained.history))
        }
        Algorithm::Dbc1 => (SavedModel::Dbc(train_dbc(&data.fitting_pairs(), NormOrder::L1)?), None),
        Algorithm::Dbc2 => (SavedModel::Dbc(train_dbc(&data.fitting_pairs(), NormOrder::L2)?), None),
        Algorithm::Kmc => {
            let kmc = train_kmc(
                corpus,
                &data.fitting_locations(),
                &data.fitting_pairs(),
                settings.kappa,
                seed::derive(seed, &[tag::KMEANS]),
            )?;
            (SavedModel::Kmc(kmc), None)
        }
    };
    Ok(TrainedAlgorithm { model, history })
}

/// Trains and scores each algorithm on one fresh split of `corpus`.
pub fn run_iteration(
    corpus: &MeasurementSet,
    used: usize,
    algorithms: &[Algorithm],
    settings: &IterationSettings,
    seed: u64,
) -> Result<IterationResult> {
    let data = IterationData::build(corpus, used, settings, seed)?;
    let mut accuracies = Vec::with_capacity(algorithms.len());
    let mut history = None;
    for &alg in algorithms {
        let trained = train_algorithm(alg, corpus, &data, settings, seed)?;
        accuracies.push((alg, trained.model.accuracy(&data.test)?));
        if trained.history.is_some() {
            history = trained.history;
        }
    }
    Ok(IterationResult { accuracies, history })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub sweep_var: String,
    pub sweep_value: String,
    pub mean_accuracy: f64,
    /// `None` when only one iteration ran.
    pub std_error: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub algorithm: Algorithm,
    pub sweep_var: String,
    pub sweep_value: String,
    pub iteration: usize,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub raw: Vec<RawRow>,
}

impl EvalReport {
    pub fn row(&self, algorithm: Algorithm, sweep_value: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.sweep_value == sweep_value)
    }

    /// Appends summary rows for `raw` entries of one sweep point.
    fn summarize(&mut self, sweep_var: &str, sweep_value: &str, algorithms: &[Algorithm]) {
        for &alg in algorithms {
            let accs: Vec<f64> = self
                .raw
                .iter()
                .filter(|r| r.algorithm == alg && r.sweep_var == sweep_var && r.sweep_value == sweep_value)
                .map(|r| r.accuracy)
                .collect();
            let (mean, std_error) = mean_and_std_error(&accs);
            self.rows.push(ReportRow {
                algorithm: alg,
                sweep_var: sweep_var.to_string(),
                sweep_value: sweep_value.to_string(),
                mean_accuracy: mean,
                std_error,
                iterations: accs.len(),
            });
        }
    }
}

/// Sample mean and standard error (`s / sqrt(n)` with the `n - 1`
/// estimator), summed left to right.
pub fn mean_and_std_error(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Loads the measurement file named in the config, or synthesizes the
/// configured scenario from `master_seed`.
pub fn load_or_generate_corpus(cfg: &ExperimentConfig, master_seed: u64) -> Result<MeasurementSet> {
    match &cfg.data {
        Some(path) => crate::dataset::load_measurements(path),
        None => {
            let scenario = generate_scenario(&cfg.scenario(), seed::derive(master_seed, &[CORPUS_SCENARIO]))?;
            synthesize_corpus(
                &scenario,
                cfg.num_estimates,
                cfg.num_samples,
                seed::derive(master_seed, &[CORPUS_ESTIMATES]),
            )
        }
    }
}

pub fn iteration_seed(master_seed: u64, sweep: u64, point: usize, iteration: usize) -> u64 {
    seed::derive(master_seed, &[sweep, point as u64, iteration as u64])
}

/// Callback invoked after each finished iteration.
pub type Progress<'a> = &'a mut dyn FnMut(&[RawRow]);

fn run_point(
    report: &mut EvalReport,
    corpus: &MeasurementSet,
    used: usize,
    cfg: &ExperimentConfig,
    sweep: (u64, &str, String, usize),
    master_seed: u64,
    progress: &mut dyn FnMut(&[RawRow]),
) -> Result<()> {
    let (sweep_tag, sweep_var, sweep_value, point) = sweep;
    let settings = IterationSettings::from_config(cfg);
    for r in 0..cfg.iterations {
        let s = iteration_seed(master_seed, sweep_tag, point, r);
        let result = run_iteration(corpus, used, &cfg.algorithms, &settings, s)?;
        let start = report.raw.len();
        for (alg, acc) in result.accuracies {
            report.raw.push(RawRow {
                algorithm: alg,
                sweep_var: sweep_var.to_string(),
                sweep_value: sweep_value.clone(),
                iteration: r,
                seed: s,
                accuracy: acc,
            });
        }
        progress(&report.raw[start..]);
    }
    report.summarize(sweep_var, &sweep_value, &cfg.algorithms);
    Ok(())
}

/// Accuracy against the number of locations used for training.
pub fn sweep_locations(
    cfg: &ExperimentConfig,
    corpus: &MeasurementSet,
    master_seed: u64,
    progress: Progress,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut report = EvalReport::default();
    for (point, &used) in cfg.location_grid.iter().enumerate() {
        run_point(
            &mut report,
            corpus,
            used,
            cfg,
            (SWEEP_LOCATIONS, "locations", used.to_string(), point),
            master_seed,
            progress,
        )?;
    }
    Ok(report)
}

/// `0;4` style label for a feature subset.
pub fn subset_label(subset: &[usize]) -> String {
    subset.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Accuracy against the feature subset, at a fixed number of locations.
pub fn sweep_features(
    cfg: &ExperimentConfig,
    corpus: &MeasurementSet,
    master_seed: u64,
    progress: Progress,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut report = EvalReport::default();
    for (point, subset) in cfg.feature_subsets.iter().enumerate() {
        let projected = select_features(corpus, subset)?;
        run_point(
            &mut report,
            &projected,
            cfg.feature_sweep_locations,
            cfg,
            (SWEEP_FEATURES, "features", subset_label(subset), point),
            master_seed,
            progress,
        )?;
    }
    Ok(report)
}

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in &report.rows {
        let se = r.std_error.map_or(NOT_AVAILABLE.to_string(), |s| format!("{s:?}"));
        writeln!(
            out,
            "{},{},{},{:?},{},{}",
            r.algorithm.name(),
            r.sweep_var,
            r.sweep_value,
            r.mean_accuracy,
            se,
            r.iterations
        )
        .unwrap();
    }
    out
}

pub fn raw_csv(report: &EvalReport) -> String {
    let mut out = format!("{RAW_HEADER}\n");
    for r in &report.raw {
        writeln!(
            out,
            "{},{},{},{},{},{:?}",
            r.algorithm.name(),
            r.sweep_var,
            r.sweep_value,
            r.iteration,
            r.seed,
            r.accuracy
        )
        .unwrap();
    }
    out
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    write_file(path, report_csv(report))
}

pub fn emit_raw(report: &EvalReport, path: &Path) -> Result<()> {
    write_file(path, raw_csv(report))
}

pub fn emit_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in history {
        writeln!(out, "{},{:?},{:?}", h.epoch, h.train_loss, h.val_accuracy).unwrap();
    }
    write_file(path, out)
}

fn csv_rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{header}`"),
        });
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != width {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("expected {width} columns"),
                });
            }
            Ok((i + 2, f))
        })
        .collect()
}

fn parse_field<T: FromStr>(s: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        line,
        message: format!("bad {what} `{s}`"),
    })
}

/// Reads a summary CSV back.
pub fn parse_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    csv_rows(&text, REPORT_HEADER, path)?
        .into_iter()
        .map(|(line, f)| {
            Ok(ReportRow {
                algorithm: f[0].parse()?,
                sweep_var: f[1].to_string(),
                sweep_value: f[2].to_string(),
                mean_accuracy: parse_field(f[3], path, line, "mean")?,
                std_error: if f[4] == NOT_AVAILABLE {
                    None
                } else {
                    Some(parse_field(f[4], path, line, "standard error")?)
                },
                iterations: parse_field(f[5], path, line, "iteration count")?,
            })
        })
        .collect()
}

/// Reads a per-iteration CSV back.
pub fn parse_raw(path: &Path) -> Result<Vec<RawRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    csv_rows(&text, RAW_HEADER, path)?
        .into_iter()
        .map(|(line, f)| {
            Ok(RawRow {
                algorithm: f[0].parse()?,
                sweep_var: f[1].to_string(),
                sweep_value: f[2].to_string(),
                iteration: parse_field(f[3], path, line, "iteration")?,
                seed: parse_field(f[4], path, line, "seed")?,
                accuracy: parse_field(f[5], path, line, "accuracy")?,
            })
        })
        .collect()
}
