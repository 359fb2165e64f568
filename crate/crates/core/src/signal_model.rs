//! Synthetic received-signal model and short-term RSS estimation.
//!
//! A scenario places `L` transmitter locations uniformly in a 3D box and a
//! fixed set of receiver channels. The channel between a location and a
//! receiver is a flat complex gain whose power follows a log-distance path
//! loss with log-normal shadowing; shadowing and gain phase are drawn once
//! when the scenario is generated. A sample window is a tone at the channel
//! output plus circular Gaussian noise, and the RSS estimate is the average
//! squared magnitude of the window in dB.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::MeasurementSet;
use crate::error::{Error, Result};
use crate::seed::{self, tag};

pub type Point3 = [f64; 3];

/// Distances below this are clamped before taking the logarithm.
pub const MIN_DISTANCE_M: f64 = 0.01;

/// Magic prefix of a binary sample-window dump.
pub const WINDOW_MAGIC: &[u8; 4] = b"RSSW";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_locations: usize,
    pub region_min: Point3,
    pub region_max: Point3,
    pub receivers: Vec<Point3>,
    pub path_loss_exponent: f64,
    /// Loss at the 1 m reference distance.
    pub reference_loss_db: f64,
    pub shadowing_std_db: f64,
    pub noise_power_dbm: f64,
    pub tx_power_dbm: f64,
    pub sampling_interval_s: f64,
    pub tone_frequency_hz: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_locations: 52,
            region_min: [0.0, 0.0, 0.0],
            region_max: [20.0, 15.0, 3.0],
            receivers: colocated_groups(
                &[[1.0, 1.0, 1.5], [19.0, 1.0, 1.5], [19.0, 14.0, 1.5], [1.0, 14.0, 1.5]],
                4,
                0.03,
            ),
            path_loss_exponent: 2.5,
            reference_loss_db: 40.0,
            shadowing_std_db: 6.0,
            noise_power_dbm: -90.0,
            // Weak enough that far channels sit near the noise floor, so the
            // short-term estimates actually fluctuate.
            tx_power_dbm: -30.0,
            sampling_interval_s: 1.0 / 20e6,
            tone_frequency_hz: 5e6,
        }
    }
}

/// Places `per_group` antennas around each group center on a small square
/// (side `2 * half_spacing`), cycling through its corners. Channel `g *
/// per_group + a` is antenna `a` of group `g`.
pub fn colocated_groups(centers: &[Point3], per_group: usize, half_spacing: f64) -> Vec<Point3> {
    const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut out = Vec::with_capacity(centers.len() * per_group);
    for c in centers {
        for a in 0..per_group {
            let (sx, sy) = CORNERS[a % 4];
            let dz = (a / 4) as f64 * half_spacing;
            out.push([c[0] + sx * half_spacing, c[1] + sy * half_spacing, c[2] + dz]);
        }
    }
    out
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_locations < 2 {
            return Err(Error::config("num_locations", "need at least 2 locations"));
        }
        if self.receivers.is_empty() {
            return Err(Error::config("receivers", "need at least 1 receiver"));
        }
        if self.receivers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("receivers", "coordinates must be finite"));
        }
        let bounds_ok = self
            .region_min
            .iter()
            .zip(&self.region_max)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi);
        if !bounds_ok {
            return Err(Error::config("region", "bounds must be finite with min <= max"));
        }
        if self.region_min.iter().zip(&self.region_max).all(|(lo, hi)| lo == hi) {
            return Err(Error::config("region", "region has no extent"));
        }
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return Err(Error::config("path_loss_exponent", "must be positive"));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(Error::config("reference_loss_db", "must be finite"));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(Error::config("shadowing_std_db", "must be non-negative"));
        }
        // -inf is allowed for both: transmitter off / noiseless receiver.
        if self.noise_power_dbm.is_nan() || self.noise_power_dbm == f64::INFINITY {
            return Err(Error::config("noise_power_dbm", "must be finite or -inf"));
        }
        if self.tx_power_dbm.is_nan() || self.tx_power_dbm == f64::INFINITY {
            return Err(Error::config("tx_power_dbm", "must be finite or -inf"));
        }
        if !(self.sampling_interval_s > 0.0 && self.sampling_interval_s.is_finite()) {
            return Err(Error::config("sampling_interval_s", "must be positive"));
        }
        if !self.tone_frequency_hz.is_finite() {
            return Err(Error::config("tone_frequency_hz", "must be finite"));
        }
        Ok(())
    }
}

/// A realized scenario: geometry plus the frozen per-(location, receiver)
/// shadowing and gain phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub locations: Vec<Point3>,
    /// Row-major `L x M`.
    shadowing_db: Vec<f64>,
    /// Row-major `L x M`, radians.
    gain_phase: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    pub location: usize,
    pub receiver: usize,
    pub samples: Vec<Complex64>,
    pub sampling_interval_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueRssVector {
    pub location: usize,
    pub rss_db: Vec<f64>,
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let l = config.num_locations;
    let m = config.receivers.len();

    let mut rng = seed::derived_rng(seed, &[tag::SCENARIO_LOCATIONS]);
    let mut locations: Vec<Point3> = Vec::with_capacity(l);
    while locations.len() < l {
        let mut p = [0.0; 3];
        for (axis, v) in p.iter_mut().enumerate() {
            let (lo, hi) = (config.region_min[axis], config.region_max[axis]);
            *v = if lo == hi { lo } else { rng.random_range(lo..hi) };
        }
        if !locations.contains(&p) {
            locations.push(p);
        }
    }

    let mut rng = seed::derived_rng(seed, &[tag::SCENARIO_CHANNEL]);
    let mut shadowing_db = Vec::with_capacity(l * m);
    let mut gain_phase = Vec::with_capacity(l * m);
    for _ in 0..l * m {
        let z: f64 = rng.sample(StandardNormal);
        shadowing_db.push(config.shadowing_std_db * z);
        gain_phase.push(rng.random_range(0.0..2.0 * PI));
    }

    Ok(Scenario {
        config: config.clone(),
        seed,
        locations,
        shadowing_db,
        gain_phase,
    })
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Scenario {
    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_receivers(&self) -> usize {
        self.config.receivers.len()
    }

    fn check_ids(&self, location: usize, receiver: usize) -> Result<()> {
        if location >= self.num_locations() {
            return Err(Error::UnknownLocation(location));
        }
        if receiver >= self.num_receivers() {
            return Err(Error::UnknownReceiver(receiver));
        }
        Ok(())
    }

    pub fn shadowing_db(&self, location: usize, receiver: usize) -> Result<f64> {
        self.check_ids(location, receiver)?;
        Ok(self.shadowing_db[location * self.num_receivers() + receiver])
    }

    pub fn distance_m(&self, location: usize, receiver: usize) -> Result<f64> {
        self.check_ids(location, receiver)?;
        let (a, b) = (self.locations[location], self.config.receivers[receiver]);
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        Ok(d.max(MIN_DISTANCE_M))
    }

    /// Received signal power (no noise) in dBm.
    pub fn received_power_dbm(&self, location: usize, receiver: usize) -> Result<f64> {
        let d = self.distance_m(location, receiver)?;
        let c = &self.config;
        Ok(
            c.tx_power_dbm - c.reference_loss_db - 10.0 * c.path_loss_exponent * d.log10()
                + self.shadowing_db(location, receiver)?,
        )
    }

    fn gain(&self, location: usize, receiver: usize) -> Result<Complex64> {
        let power = db_to_linear(self.received_power_dbm(location, receiver)?);
        let phase = self.gain_phase[location * self.num_receivers() + receiver];
        Ok(Complex64::from_polar(power.sqrt(), phase))
    }
}

/// RSS of signal plus noise per receiver channel, in dB.
pub fn true_rss(scenario: &Scenario, location: usize) -> Result<TrueRssVector> {
    if location >= scenario.num_locations() {
        return Err(Error::UnknownLocation(location));
    }
    let noise_dbm = scenario.config.noise_power_dbm;
    let rss_db = (0..scenario.num_receivers())
        .map(|rx| {
            let signal_dbm = scenario.received_power_dbm(location, rx)?;
            Ok(power_sum_db(signal_dbm, noise_dbm))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrueRssVector { location, rss_db })
}

fn power_sum_db(a_db: f64, b_db: f64) -> f64 {
    if a_db == f64::NEG_INFINITY {
        return b_db;
    }
    if b_db == f64::NEG_INFINITY {
        return a_db;
    }
    10.0 * (db_to_linear(a_db) + db_to_linear(b_db)).log10()
}

/// Draws `num_samples` baseband samples `r[k] = h x[k] + v[k]` where `x` is a
/// unit-power tone with uniform random initial phase and `v` is circular
/// Gaussian noise. The stream depends on `(seed, location, receiver)`.
pub fn draw_sample_window(
    scenario: &Scenario,
    location: usize,
    receiver: usize,
    num_samples: usize,
    seed: u64,
) -> Result<SampleWindow> {
    scenario.check_ids(location, receiver)?;
    if num_samples == 0 {
        return Err(Error::EmptyWindow);
    }
    let c = &scenario.config;
    let h = scenario.gain(location, receiver)?;
    let noise_power = if c.noise_power_dbm == f64::NEG_INFINITY {
        0.0
    } else {
        db_to_linear(c.noise_power_dbm)
    };
    let noise =
        Normal::new(0.0, (noise_power / 2.0).sqrt()).map_err(|e| Error::config("noise_power_dbm", e.to_string()))?;

    let mut rng = seed::derived_rng(seed, &[tag::WINDOW, location as u64, receiver as u64]);
    let phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let step = 2.0 * PI * c.tone_frequency_hz * c.sampling_interval_s;
    let samples = (0..num_samples)
        .map(|k| {
            let tone = Complex64::from_polar(1.0, phase0 + step * k as f64);
            let v = if noise_power > 0.0 {
                Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                Complex64::new(0.0, 0.0)
            };
            h * tone + v
        })
        .collect();

    Ok(SampleWindow {
        location,
        receiver,
        samples,
        sampling_interval_s: c.sampling_interval_s,
    })
}

/// Short-term RSS estimate: `10 log10(mean |r[k]|^2)`.
pub fn estimate_rss(window: &SampleWindow) -> Result<f64> {
    estimate_rss_samples(&window.samples)
}

pub fn estimate_rss_samples(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let energy: f64 = samples.iter().map(|s| s.norm_sqr()).sum();
    if !energy.is_finite() {
        return Err(Error::NonFinite("sample window"));
    }
    if energy == 0.0 {
        return Err(Error::DegeneratePower);
    }
    Ok(10.0 * (energy / samples.len() as f64).log10())
}

/// One RSS vector estimate: a window per receiver channel, all with the
/// transmitter at `location`, each channel on its own noise stream.
pub fn estimate_rss_vector(scenario: &Scenario, location: usize, num_samples: usize, seed: u64) -> Result<Vec<f64>> {
    (0..scenario.num_receivers())
        .map(|rx| estimate_rss(&draw_sample_window(scenario, location, rx, num_samples, seed)?))
        .collect()
}

/// Builds an `L x E x M` corpus of RSS vector estimates from a scenario.
pub fn synthesize_corpus(
    scenario: &Scenario,
    estimates_per_location: usize,
    num_samples: usize,
    seed: u64,
) -> Result<MeasurementSet> {
    let l = scenario.num_locations();
    let m = scenario.num_receivers();
    let mut values = Vec::with_capacity(l * estimates_per_location * m);
    for n in 0..l {
        for j in 0..estimates_per_location {
            let s = seed::derive(seed, &[tag::CORPUS, n as u64, j as u64]);
            values.extend(estimate_rss_vector(scenario, n, num_samples, s)?);
        }
    }
    let mut ms = MeasurementSet::new(m, l, estimates_per_location, values)?;
    ms.set_coordinates(scenario.locations.clone())?;
    Ok(ms)
}

/// Writes a window as `RSSW`, `u32` sample count, `u32` receiver, `u32`
/// location, then interleaved little-endian `f32` I/Q pairs.
pub fn write_window<W: Write>(mut w: W, window: &SampleWindow) -> std::io::Result<()> {
    let as_u32 = |v: usize| u32::try_from(v).map_err(|_| std::io::Error::other("window header field exceeds u32"));
    w.write_all(WINDOW_MAGIC)?;
    w.write_all(&as_u32(window.samples.len())?.to_le_bytes())?;
    w.write_all(&as_u32(window.receiver)?.to_le_bytes())?;
    w.write_all(&as_u32(window.location)?.to_le_bytes())?;
    for s in &window.samples {
        w.write_all(&(s.re as f32).to_le_bytes())?;
        w.write_all(&(s.im as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a window written by [`write_window`]. The sampling interval is not
/// part of the format and must be supplied.
pub fn read_window<R: Read>(mut r: R, sampling_interval_s: f64) -> std::io::Result<SampleWindow> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != WINDOW_MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad window magic"));
    }
    let field = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (n, receiver, location) = (field(4), field(8), field(12));
    let mut samples = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        let re = f32::from_le_bytes(buf[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(buf[4..8].try_into().unwrap());
        samples.push(Complex64::new(re as f64, im as f64));
    }
    Ok(SampleWindow {
        location,
        receiver,
        samples,
        sampling_interval_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_config(l: usize, m: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_locations: l,
            receivers: (0..m).map(|i| [i as f64, 0.0, 1.0]).collect(),
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn default_scenario_has_52_locations_and_16_channels() {
        let s = generate_scenario(&ScenarioConfig::default(), 1).unwrap();
        assert_eq!(s.num_locations(), 52);
        assert_eq!(s.num_receivers(), 16);
        for i in 0..52 {
            for j in 0..i {
                assert_ne!(s.locations[i], s.locations[j]);
            }
        }
    }

    #[test]
    fn antenna_groups_are_within_ten_centimeters() {
        let rx = ScenarioConfig::default().receivers;
        for g in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    let (p, q) = (rx[4 * g + a], rx[4 * g + b]);
                    let d: f64 = (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>().sqrt();
                    assert!(d <= 0.1, "group {g}: {d}");
                }
            }
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = small_config(2, 1);
        assert_eq!(generate_scenario(&cfg, 9).unwrap(), generate_scenario(&cfg, 9).unwrap());
        assert_ne!(
            generate_scenario(&cfg, 9).unwrap().locations,
            generate_scenario(&cfg, 10).unwrap().locations
        );
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut cfg = small_config(0, 1);
        match generate_scenario(&cfg, 0) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "num_locations"),
            other => panic!("unexpected {other:?}"),
        }
        cfg.num_locations = 3;
        cfg.path_loss_exponent = 0.0;
        assert!(matches!(
            generate_scenario(&cfg, 0),
            Err(Error::Config {
                field: "path_loss_exponent",
                ..
            })
        ));
        cfg.path_loss_exponent = 2.0;
        cfg.shadowing_std_db = -1.0;
        assert!(matches!(
            generate_scenario(&cfg, 0),
            Err(Error::Config {
                field: "shadowing_std_db",
                ..
            })
        ));
        cfg.shadowing_std_db = 1.0;
        cfg.receivers.clear();
        assert!(matches!(
            generate_scenario(&cfg, 0),
            Err(Error::Config { field: "receivers", .. })
        ));
    }

    #[test]
    fn equal_signal_and_noise_add_three_db() {
        let f = power_sum_db(-90.0, -90.0);
        assert!((f - 10.0 * 2e-9f64.log10()).abs() < 1e-12);
        assert!((f - (-86.9897)).abs() < 1e-4);
    }

    #[test]
    fn transmitter_off_gives_noise_floor() {
        let mut cfg = small_config(3, 2);
        cfg.tx_power_dbm = f64::NEG_INFINITY;
        let s = generate_scenario(&cfg, 4).unwrap();
        let t = true_rss(&s, 1).unwrap();
        assert!(t.rss_db.iter().all(|&v| v == cfg.noise_power_dbm));
    }

    #[test]
    fn true_rss_matches_straight_line_recomputation() {
        let s = generate_scenario(&ScenarioConfig::default(), 77).unwrap();
        let c = &s.config;
        for n in [0, 13, 51] {
            let t = true_rss(&s, n).unwrap();
            for (rx, &got) in t.rss_db.iter().enumerate() {
                let (x, r) = (s.locations[n], c.receivers[rx]);
                let d = ((x[0] - r[0]) * (x[0] - r[0]) + (x[1] - r[1]) * (x[1] - r[1]) + (x[2] - r[2]) * (x[2] - r[2]))
                    .sqrt();
                let p_rx = c.tx_power_dbm - c.reference_loss_db - 10.0 * c.path_loss_exponent * (d / 1.0).log10()
                    + s.shadowing_db[n * 16 + rx];
                let want = 10.0 * (10f64.powf(p_rx / 10.0) + 10f64.powf(c.noise_power_dbm / 10.0)).log10();
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
        }
        assert!(matches!(true_rss(&s, 52), Err(Error::UnknownLocation(52))));
    }

    #[test]
    fn noiseless_tone_has_constant_modulus() {
        let mut cfg = small_config(2, 1);
        cfg.noise_power_dbm = f64::NEG_INFINITY;
        let s = generate_scenario(&cfg, 3).unwrap();
        let w = draw_sample_window(&s, 0, 0, 4, 11).unwrap();
        let p = db_to_linear(s.received_power_dbm(0, 0).unwrap());
        for r in &w.samples {
            assert!((r.norm_sqr() - p).abs() <= 1e-12 * p);
        }
        let est = estimate_rss(&w).unwrap();
        assert!((est - 10.0 * p.log10()).abs() < 1e-9);
    }

    #[test]
    fn long_window_power_converges() {
        let s = generate_scenario(&small_config(2, 1), 5).unwrap();
        let w = draw_sample_window(&s, 1, 0, 1_000_000, 2).unwrap();
        let mean: f64 = w.samples.iter().map(|r| r.norm_sqr()).sum::<f64>() / 1e6;
        let want = db_to_linear(true_rss(&s, 1).unwrap().rss_db[0]);
        assert!((mean / want - 1.0).abs() < 0.01, "{mean} vs {want}");
    }

    #[test]
    fn windows_are_reproducible() {
        let s = generate_scenario(&small_config(2, 2), 5).unwrap();
        let a = draw_sample_window(&s, 1, 1, 64, 8).unwrap();
        let b = draw_sample_window(&s, 1, 1, 64, 8).unwrap();
        assert_eq!(a, b);
        let c = draw_sample_window(&s, 1, 0, 64, 8).unwrap();
        assert_ne!(a.samples, c.samples);
        assert!(matches!(draw_sample_window(&s, 1, 1, 0, 8), Err(Error::EmptyWindow)));
        assert!(matches!(
            draw_sample_window(&s, 1, 2, 4, 8),
            Err(Error::UnknownReceiver(2))
        ));
    }

    #[test]
    fn estimate_rss_hand_values() {
        let ones = vec![Complex64::new(1.0, 0.0); 4];
        assert_eq!(estimate_rss_samples(&ones).unwrap(), 0.0);
        let two = [Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!((estimate_rss_samples(&two).unwrap() - 3.010_299_956_639_812).abs() < 1e-12);
        let zeros = [Complex64::new(0.0, 0.0); 3];
        assert!(matches!(estimate_rss_samples(&zeros), Err(Error::DegeneratePower)));
        assert!(matches!(estimate_rss_samples(&[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn estimate_rss_matches_brute_force() {
        let s = generate_scenario(&small_config(2, 1), 5).unwrap();
        let w = draw_sample_window(&s, 0, 0, 333, 1).unwrap();
        let mut acc = 0.0f64;
        for r in &w.samples {
            acc += r.re * r.re + r.im * r.im;
        }
        let want = 10.0 * (acc / 333.0).log10();
        assert!((estimate_rss(&w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rss_vector_with_one_receiver_is_estimate_rss() {
        let s = generate_scenario(&small_config(3, 1), 5).unwrap();
        let v = estimate_rss_vector(&s, 2, 16, 99).unwrap();
        let w = draw_sample_window(&s, 2, 0, 16, 99).unwrap();
        assert_eq!(v, vec![estimate_rss(&w).unwrap()]);
        assert_eq!(v, estimate_rss_vector(&s, 2, 16, 99).unwrap());
    }

    #[test]
    fn rss_vector_converges_to_true_rss() {
        let s = generate_scenario(&ScenarioConfig::default(), 21).unwrap();
        let truth = true_rss(&s, 4).unwrap().rss_db;
        let mut mean = vec![0.0; truth.len()];
        for r in 0..20 {
            let v = estimate_rss_vector(&s, 4, 1_000_000 / 16, r).unwrap();
            for (acc, x) in mean.iter_mut().zip(v) {
                *acc += x / 20.0;
            }
        }
        for (m, t) in mean.iter().zip(&truth) {
            assert!((m - t).abs() < 0.1, "{m} vs {t}");
        }
    }

    #[test]
    fn window_dump_round_trips_header_and_f32_samples() {
        let s = generate_scenario(&small_config(3, 2), 5).unwrap();
        let w = draw_sample_window(&s, 2, 1, 10, 3).unwrap();
        let mut buf = Vec::new();
        write_window(&mut buf, &w).unwrap();
        assert_eq!(buf.len(), 16 + 10 * 8);
        assert_eq!(&buf[..4], b"RSSW");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 10);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        let back = read_window(&buf[..], w.sampling_interval_s).unwrap();
        assert_eq!((back.location, back.receiver), (2, 1));
        for (a, b) in back.samples.iter().zip(&w.samples) {
            assert_eq!(a.re, b.re as f32 as f64);
            assert_eq!(a.im, b.im as f32 as f64);
        }
    }

    proptest! {
        #[test]
        fn phase_rotation_leaves_estimate_unchanged(
            seed in 0u64..1000, phi in 0.0f64..(2.0 * PI)
        ) {
            let s = generate_scenario(&small_config(2, 1), 5).unwrap();
            let w = draw_sample_window(&s, 0, 0, 32, seed).unwrap();
            let rot = Complex64::from_polar(1.0, phi);
            let rotated: Vec<_> = w.samples.iter().map(|r| r * rot).collect();
            let (a, b) = (estimate_rss(&w).unwrap(), estimate_rss_samples(&rotated).unwrap());
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn scaling_shifts_estimate_by_20_log10(seed in 0u64..1000, alpha in 1e-3f64..1e3) {
            let s = generate_scenario(&small_config(2, 1), 5).unwrap();
            let w = draw_sample_window(&s, 1, 0, 32, seed).unwrap();
            let scaled: Vec<_> = w.samples.iter().map(|r| r * alpha).collect();
            let shift = estimate_rss_samples(&scaled).unwrap() - estimate_rss(&w).unwrap();
            prop_assert!((shift - 20.0 * alpha.log10()).abs() < 1e-9);
        }
    }
}
