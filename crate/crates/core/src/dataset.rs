//! Measurement corpora, balanced pair sets, location splits and the CSV
//! measurement format.
//!
//! Locations are addressed by their index `0..L` inside a [`MeasurementSet`];
//! the identifiers found in a measurement file are kept alongside so they
//! survive a save/load cycle.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::signal_model::Point3;

/// Name of the optional coordinate sidecar written next to a measurement file.
pub const LOCATIONS_SIDECAR: &str = "locations.csv";

/// Dense corpus of RSS vector estimates, `L` locations by `E` estimates by
/// `M` features, in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    num_features: usize,
    num_locations: usize,
    estimates_per_location: usize,
    /// Row-major `(n, j, m)`.
    values: Vec<f64>,
    location_ids: Vec<u64>,
    coordinates: Option<Vec<Point3>>,
}

impl MeasurementSet {
    pub fn new(
        num_features: usize,
        num_locations: usize,
        estimates_per_location: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let ids = (0..num_locations as u64).collect();
        Self::with_ids(num_features, estimates_per_location, ids, values)
    }

    pub fn with_ids(
        num_features: usize,
        estimates_per_location: usize,
        location_ids: Vec<u64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let num_locations = location_ids.len();
        if num_features == 0 {
            return Err(Error::Infeasible("measurement set needs at least one feature".into()));
        }
        if estimates_per_location < 2 {
            return Err(Error::Infeasible(format!(
                "need at least 2 estimates per location, got {estimates_per_location}"
            )));
        }
        let expected = num_locations * estimates_per_location * num_features;
        if values.len() != expected {
            return Err(Error::Dimension {
                context: "measurement values",
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement values"));
        }
        let mut seen = location_ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != num_locations {
            return Err(Error::Infeasible("location ids are not distinct".into()));
        }
        Ok(MeasurementSet {
            num_features,
            num_locations,
            estimates_per_location,
            values,
            location_ids,
            coordinates: None,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_locations(&self) -> usize {
        self.num_locations
    }

    pub fn estimates_per_location(&self) -> usize {
        self.estimates_per_location
    }

    pub fn location_ids(&self) -> &[u64] {
        &self.location_ids
    }

    pub fn coordinates(&self) -> Option<&[Point3]> {
        self.coordinates.as_deref()
    }

    pub fn set_coordinates(&mut self, coords: Vec<Point3>) -> Result<()> {
        if coords.len() != self.num_locations {
            return Err(Error::Dimension {
                context: "location coordinates",
                expected: self.num_locations,
                got: coords.len(),
            });
        }
        self.coordinates = Some(coords);
        Ok(())
    }

    /// Feature vector of estimate `j` at location index `n`.
    pub fn vector(&self, n: usize, j: usize) -> &[f64] {
        let start = (n * self.estimates_per_location + j) * self.num_features;
        &self.values[start..start + self.num_features]
    }

    /// All `E` estimates at location `n`, concatenated.
    pub fn location_block(&self, n: usize) -> &[f64] {
        let len = self.estimates_per_location * self.num_features;
        &self.values[n * len..(n + 1) * len]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairLabel {
    Same,
    Diff,
}

/// Where a pair's two vectors came from: `(location, estimate)` for each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub first: (usize, usize),
    pub second: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub label: PairLabel,
    pub provenance: Provenance,
}

impl LabeledPair {
    pub fn provenance_consistent(&self) -> bool {
        let (a, b) = (self.provenance.first, self.provenance.second);
        match self.label {
            PairLabel::Same => a.0 == b.0 && a.1 != b.1,
            PairLabel::Diff => a.0 != b.0,
        }
    }
}

/// `K` SAME pairs followed by `K` DIFF pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<LabeledPair>,
    pub per_class: usize,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.first.len())
    }

    pub fn count(&self, label: PairLabel) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    pub fn is_balanced(&self) -> bool {
        self.count(PairLabel::Same) == self.per_class && self.count(PairLabel::Diff) == self.per_class
    }
}

/// Draws `k` SAME and `k` DIFF pairs from the given location indices.
///
/// Each SAME pair picks one location uniformly and two distinct estimates;
/// each DIFF pair picks two distinct locations and two distinct estimate
/// indices. Draws are independent across pairs, so duplicates may occur.
pub fn build_pair_set(ms: &MeasurementSet, locations: &[usize], k: usize, seed: u64) -> Result<PairSet> {
    if k == 0 {
        return Err(Error::Infeasible("pair count per class must be at least 1".into()));
    }
    if locations.len() < 2 {
        return Err(Error::Infeasible(format!(
            "DIFF pairs need at least 2 locations, got {}",
            locations.len()
        )));
    }
    if let Some(&bad) = locations.iter().find(|&&n| n >= ms.num_locations()) {
        return Err(Error::UnknownLocation(bad));
    }
    let e = ms.estimates_per_location();

    let mut pairs = Vec::with_capacity(2 * k);
    let mut rng = seed::derived_rng(seed, &[tag::SAME_PAIRS]);
    for _ in 0..k {
        let n = locations[rng.random_range(0..locations.len())];
        let js = index::sample(&mut rng, e, 2);
        let (j, j2) = (js.index(0), js.index(1));
        pairs.push(LabeledPair {
            first: ms.vector(n, j).to_vec(),
            second: ms.vector(n, j2).to_vec(),
            label: PairLabel::Same,
            provenance: Provenance {
                first: (n, j),
                second: (n, j2),
            },
        });
    }
    let mut rng = seed::derived_rng(seed, &[tag::DIFF_PAIRS]);
    for _ in 0..k {
        let ns = index::sample(&mut rng, locations.len(), 2);
        let (n, n2) = (locations[ns.index(0)], locations[ns.index(1)]);
        let js = index::sample(&mut rng, e, 2);
        let (j, j2) = (js.index(0), js.index(1));
        pairs.push(LabeledPair {
            first: ms.vector(n, j).to_vec(),
            second: ms.vector(n2, j2).to_vec(),
            label: PairLabel::Diff,
            provenance: Provenance {
                first: (n, j),
                second: (n2, j2),
            },
        });
    }
    Ok(PairSet { pairs, per_class: k })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocationSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl LocationSplit {
    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

/// Picks `used` locations uniformly at random, sends `round(fraction * used)`
/// of them to training and the rest to validation; the locations not picked
/// form the test part.
pub fn split_locations(ms: &MeasurementSet, used: usize, train_fraction: f64, seed: u64) -> Result<LocationSplit> {
    let l = ms.num_locations();
    if used < 2 || used > l {
        return Err(Error::Infeasible(format!(
            "cannot use {used} of {l} locations (need 2 <= used <= {l})"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    let n_train = (train_fraction * used as f64).round() as usize;
    if n_train == 0 || n_train >= used {
        return Err(Error::Infeasible(format!(
            "train fraction {train_fraction} of {used} locations leaves an empty train or validation part"
        )));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(&mut seed::derived_rng(seed, &[tag::SPLIT]));
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..used].to_vec();
    let mut test = order[used..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(LocationSplit {
        train,
        validation,
        test,
    })
}

/// Projects every vector onto the listed feature indices, in that order.
pub fn select_features(ms: &MeasurementSet, features: &[usize]) -> Result<MeasurementSet> {
    if features.is_empty() {
        return Err(Error::Infeasible("feature subset is empty".into()));
    }
    if let Some(&bad) = features.iter().find(|&&f| f >= ms.num_features()) {
        return Err(Error::Dimension {
            context: "feature index",
            expected: ms.num_features(),
            got: bad,
        });
    }
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != features.len() {
        return Err(Error::Infeasible("feature subset has repeated indices".into()));
    }
    let mut values = Vec::with_capacity(ms.num_locations() * ms.estimates_per_location() * features.len());
    for n in 0..ms.num_locations() {
        for j in 0..ms.estimates_per_location() {
            let v = ms.vector(n, j);
            values.extend(features.iter().map(|&f| v[f]));
        }
    }
    let mut out = MeasurementSet::with_ids(
        features.len(),
        ms.estimates_per_location(),
        ms.location_ids.clone(),
        values,
    )?;
    out.coordinates = ms.coordinates.clone();
    Ok(out)
}

/// Writes `location_id,estimate_id,feat_0,...` with shortest round-trip
/// float formatting, plus a `locations.csv` sidecar when coordinates are
/// known.
pub fn save_measurements(ms: &MeasurementSet, path: &Path) -> Result<()> {
    let mut out = String::from("location_id,estimate_id");
    for m in 0..ms.num_features() {
        write!(out, ",feat_{m}").unwrap();
    }
    out.push('\n');
    for n in 0..ms.num_locations() {
        for j in 0..ms.estimates_per_location() {
            write!(out, "{},{}", ms.location_ids[n], j).unwrap();
            for v in ms.vector(n, j) {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    if let Some(coords) = &ms.coordinates {
        let mut side = String::from("location_id,x,y,z\n");
        for (id, p) in ms.location_ids.iter().zip(coords) {
            writeln!(side, "{id},{:?},{:?},{:?}", p[0], p[1], p[2]).unwrap();
        }
        let side_path = sidecar_path(path);
        fs::write(&side_path, side).map_err(|e| Error::io(side_path, e))?;
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_file_name(LOCATIONS_SIDECAR)
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a measurement file. Rows may appear in any order, but every
/// location must carry estimate ids `0..E` exactly once and `E` must be the
/// same for every location. Locations are indexed in order of first
/// appearance.
pub fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "location_id" || cols[1] != "estimate_id" {
        return Err(format_err(
            path,
            1,
            "header must start with location_id,estimate_id,feat_0",
        ));
    }
    for (m, c) in cols[2..].iter().enumerate() {
        if *c != format!("feat_{m}") {
            return Err(format_err(
                path,
                1,
                format!("column {} should be feat_{m}, found `{c}`", m + 3),
            ));
        }
    }
    let num_features = cols.len() - 2;

    let mut order: Vec<u64> = Vec::new();
    let mut rows: HashMap<u64, BTreeMap<usize, Vec<f64>>> = HashMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != num_features + 2 {
            return Err(format_err(
                path,
                lineno,
                format!("expected {} columns, found {}", num_features + 2, fields.len()),
            ));
        }
        let loc: u64 = fields[0]
            .parse()
            .map_err(|_| format_err(path, lineno, format!("column 1: bad location id `{}`", fields[0])))?;
        let est: usize = fields[1]
            .parse()
            .map_err(|_| format_err(path, lineno, format!("column 2: bad estimate id `{}`", fields[1])))?;
        let mut v = Vec::with_capacity(num_features);
        for (c, f) in fields[2..].iter().enumerate() {
            let x: f64 = f
                .parse()
                .map_err(|_| format_err(path, lineno, format!("column {}: bad number `{f}`", c + 3)))?;
            if !x.is_finite() {
                return Err(format_err(
                    path,
                    lineno,
                    format!("column {}: non-finite value `{f}`", c + 3),
                ));
            }
            v.push(x);
        }
        let per_loc = rows.entry(loc).or_insert_with(|| {
            order.push(loc);
            BTreeMap::new()
        });
        if per_loc.insert(est, v).is_some() {
            return Err(format_err(
                path,
                lineno,
                format!("duplicate row for location {loc}, estimate {est}"),
            ));
        }
    }
    if order.is_empty() {
        return Err(format_err(path, 2, "no data rows"));
    }

    let e = rows[&order[0]].len();
    let mut values = Vec::with_capacity(order.len() * e * num_features);
    for loc in &order {
        let per_loc = &rows[loc];
        if per_loc.len() != e || per_loc.keys().copied().ne(0..e) {
            return Err(format_err(
                path,
                0,
                format!("location {loc} must have estimate ids 0..{e} exactly once each"),
            ));
        }
        for v in per_loc.values() {
            values.extend_from_slice(v);
        }
    }
    if e < 2 {
        return Err(format_err(
            path,
            0,
            format!("need at least 2 estimates per location, found {e}"),
        ));
    }
    let mut ms = MeasurementSet::with_ids(num_features, e, order, values)?;

    let side = sidecar_path(path);
    if side.exists() {
        ms.coordinates = Some(load_coordinates(&side, &ms.location_ids)?);
    }
    Ok(ms)
}

fn load_coordinates(path: &Path, ids: &[u64]) -> Result<Vec<Point3>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_id: HashMap<u64, Point3> = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(format_err(path, i + 1, "expected location_id,x,y,z"));
        }
        let id: u64 = f[0].parse().map_err(|_| format_err(path, i + 1, "bad location id"))?;
        let mut p = [0.0; 3];
        for (a, s) in f[1..].iter().enumerate() {
            p[a] = s
                .parse()
                .map_err(|_| format_err(path, i + 1, format!("bad coordinate `{s}`")))?;
        }
        by_id.insert(id, p);
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| format_err(path, 0, format!("no coordinates for location {id}")))
        })
        .collect()
}
