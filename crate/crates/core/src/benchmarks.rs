//! Baseline detectors: thresholded l1/l2 distance between the two vectors
//! (DBC), and the same l2 rule applied to each vector's distances to K-means
//! centroids (KMC). Thresholds maximize accuracy over the training pairs.

use rand::seq::SliceRandom;

use crate::dataset::{MeasurementSet, PairLabel, PairSet};
use crate::detector::{Decision, Hypothesis};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Accuracy of the rule "H1 iff distance > threshold".
pub fn threshold_accuracy(samples: &[(f64, PairLabel)], threshold: f64) -> f64 {
    let hits = samples
        .iter()
        .filter(|(d, l)| (*d > threshold) == (*l == PairLabel::Diff))
        .count();
    hits as f64 / samples.len() as f64
}

/// Exact accuracy maximizer over thresholds for "H1 iff distance > eta".
///
/// Candidates are `-inf`, the midpoints between consecutive distinct sorted
/// distances, and `+inf`; the smallest maximizing candidate wins.
pub fn tune_threshold(samples: &[(f64, PairLabel)]) -> Result<ThresholdFit> {
    if samples.is_empty() {
        return Err(Error::Infeasible("threshold tuning needs at least one distance".into()));
    }
    if samples.iter().any(|(d, _)| d.is_nan()) {
        return Err(Error::NonFinite("distance"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // At eta = -inf everything is H1: correct iff DIFF.
    let mut correct = sorted.iter().filter(|(_, l)| *l == PairLabel::Diff).count() as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    let mut i = 0;
    while i < sorted.len() {
        // Move every sample at this distance below the threshold.
        let d = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == d {
            correct += match sorted[i].1 {
                PairLabel::Same => 1,
                PairLabel::Diff => -1,
            };
            i += 1;
        }
        let eta = if i < sorted.len() {
            d + (sorted[i].0 - d) / 2.0
        } else {
            f64::INFINITY
        };
        if correct > best.0 {
            best = (correct, eta);
        }
    }
    Ok(ThresholdFit {
        threshold: best.1,
        accuracy: best.0 as f64 / samples.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
}

impl NormOrder {
    pub fn q(self) -> u32 {
        match self {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }

    pub fn from_q(q: u32) -> Result<Self> {
        match q {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            _ => Err(Error::config("norm_order", format!("must be 1 or 2, got {q}"))),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            NormOrder::L1 => diffs.map(f64::abs).sum(),
            NormOrder::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

fn check_pair(expected: usize, f: &[f64], f_prime: &[f64]) -> Result<()> {
    for v in [f, f_prime] {
        if v.len() != expected {
            return Err(Error::Dimension {
                context: "feature vector",
                expected,
                got: v.len(),
            });
        }
    }
    Ok(())
}

fn decide_on(distance: f64, threshold: f64) -> Decision {
    Decision {
        hypothesis: if distance > threshold {
            Hypothesis::H1
        } else {
            Hypothesis::H0
        },
        statistic: distance - threshold,
        posterior: if distance > threshold { 1.0 } else { 0.0 },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbcModel {
    pub order: NormOrder,
    pub threshold: f64,
    pub num_features: usize,
}

pub fn train_dbc(pairs: &PairSet, order: NormOrder) -> Result<DbcModel> {
    let samples: Vec<(f64, PairLabel)> = pairs
        .pairs
        .iter()
        .map(|p| (order.distance(&p.first, &p.second), p.label))
        .collect();
    let fit = tune_threshold(&samples)?;
    Ok(DbcModel {
        order,
        threshold: fit.threshold,
        num_features: pairs.num_features(),
    })
}

impl DbcModel {
    pub fn distance(&self, f: &[f64], f_prime: &[f64]) -> Result<f64> {
        check_pair(self.num_features, f, f_prime)?;
        Ok(self.order.distance(f, f_prime))
    }

    /// H1 iff the distance exceeds the threshold. `statistic` is the margin
    /// `distance - threshold` and `posterior` the hard decision.
    pub fn decide(&self, f: &[f64], f_prime: &[f64]) -> Result<Decision> {
        Ok(decide_on(self.distance(f, f_prime)?, self.threshold))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    /// `k` rows of length `dim`.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each iteration's update.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

pub fn wcss(points: &[&[f64]], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Lloyd's algorithm. Centroids start at `k` distinct points picked in a
/// seeded random order; iteration stops when an assignment step changes
/// nothing, or after `max_iterations`. A cluster left empty is moved onto the
/// point farthest from its own centroid.
pub fn kmeans(points: &[&[f64]], k: usize, max_iterations: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::config("kappa", "need at least one cluster"));
    }
    let dim = points.first().map_or(0, |p| p.len());
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Infeasible("k-means points have differing dimensions".into()));
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut seed::derived_rng(seed, &[tag::KMEANS]));
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &i in &order {
        if centroids.len() == k {
            break;
        }
        if !centroids.iter().any(|c| c.as_slice() == points[i]) {
            centroids.push(points[i].to_vec());
        }
    }
    if centroids.len() < k {
        return Err(Error::Infeasible(format!(
            "k-means with {k} clusters needs {k} distinct points, found {}",
            centroids.len()
        )));
    }

    let mut assignments: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
    let mut wcss_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        squared_distance(points[i], &centroids[assignments[i]])
                            .total_cmp(&squared_distance(points[j], &centroids[assignments[j]]))
                            .then(j.cmp(&i))
                    })
                    .expect("points is nonempty");
                counts[assignments[far]] -= 1;
                assignments[far] = c;
                counts[c] = 1;
                centroids[c] = points[far].to_vec();
            }
        }
        wcss_history.push(wcss(points, &centroids, &assignments));

        // Assignment step.
        let next: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    Ok(KMeansFit {
        centroids,
        assignments,
        wcss_history,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmcModel {
    pub centroids: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl KmcModel {
    pub fn num_features(&self) -> usize {
        self.centroids[0].len()
    }

    /// Euclidean distances from `v` to every centroid.
    pub fn embed(&self, v: &[f64]) -> Vec<f64> {
        self.centroids.iter().map(|c| squared_distance(v, c).sqrt()).collect()
    }

    pub fn distance(&self, f: &[f64], f_prime: &[f64]) -> Result<f64> {
        check_pair(self.num_features(), f, f_prime)?;
        Ok(NormOrder::L2.distance(&self.embed(f), &self.embed(f_prime)))
    }

    pub fn decide(&self, f: &[f64], f_prime: &[f64]) -> Result<Decision> {
        Ok(decide_on(self.distance(f, f_prime)?, self.threshold))
    }
}

/// Clusters every estimate at the training locations into `kappa` groups,
/// then tunes the l2 threshold on the centroid-distance embeddings of the
/// training pairs.
pub fn train_kmc(
    ms: &MeasurementSet,
    train_locations: &[usize],
    pairs: &PairSet,
    kappa: usize,
    seed: u64,
) -> Result<KmcModel> {
    if let Some(&bad) = train_locations.iter().find(|&&n| n >= ms.num_locations()) {
        return Err(Error::UnknownLocation(bad));
    }
    let points: Vec<&[f64]> = train_locations
        .iter()
        .flat_map(|&n| (0..ms.estimates_per_location()).map(move |j| ms.vector(n, j)))
        .collect();
    let fit = kmeans(&points, kappa, KMEANS_MAX_ITERATIONS, seed)?;
    let mut model = KmcModel {
        centroids: fit.centroids,
        threshold: 0.0,
    };
    let samples = pairs
        .pairs
        .iter()
        .map(|p| Ok((model.distance(&p.first, &p.second)?, p.label)))
        .collect::<Result<Vec<_>>>()?;
    model.threshold = tune_threshold(&samples)?.threshold;
    Ok(model)
}
