use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spoofdetect::dataset::save_measurements;
use spoofdetect::eval::{self, Algorithm, IterationData, IterationSettings, PairClassifier};
use spoofdetect::model_file::SavedModel;
use spoofdetect::{selfcheck, Error, ExperimentConfig, Result};

/// Pairwise RSS spoofing detection: synthetic data, training, decisions and
/// Monte Carlo sweeps.
#[derive(Parser)]
#[command(name = "spoofdetect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed. Identical config and seed give byte-identical output.
    #[arg(long)]
    seed: u64,
    /// Flat TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set iterations=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    overrides: Vec<(String, String)>,
    /// Measurement CSV to use instead of a synthetic corpus.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Monte Carlo iterations per sweep point.
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated subset of dnnc,dbc1,dbc2,kmc.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic measurement corpus as CSV (plus a locations sidecar).
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one algorithm on a single split and save the model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algorithm: Algorithm,
        /// Number of locations used for training and validation.
        #[arg(long, default_value_t = 45)]
        locations: usize,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV (network only).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Apply a saved model to two feature vectors.
    Decide {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated RSS vector in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        first: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        second: Vec<f64>,
    },
    /// Accuracy against the number of training locations.
    SweepLocations {
        #[command(flatten)]
        common: Common,
        /// Summary CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration CSV.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Accuracy against the feature subset.
    SweepFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Check {
        #[arg(long)]
        seed: u64,
    },
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(d) = &self.data {
            overrides.push(("data".into(), toml_string(&d.display().to_string())));
        }
        if let Some(r) = self.iterations {
            overrides.push(("iterations".into(), r.to_string()));
        }
        if let Some(a) = &self.algorithms {
            let names: Vec<String> = a.iter().map(|a| toml_string(a.name())).collect();
            overrides.push(("algorithms".into(), format!("[{}]", names.join(","))));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn progress(total: usize) -> impl FnMut(&[eval::RawRow]) {
    let mut done = 0;
    move |rows| {
        done += 1;
        let accs: Vec<String> = rows
            .iter()
            .map(|r| format!("{}={:.4}", r.algorithm.name(), r.accuracy))
            .collect();
        if let Some(r) = rows.first() {
            eprintln!(
                "[{done}/{total}] {}={} iteration {}: {}",
                r.sweep_var,
                r.sweep_value,
                r.iteration,
                accs.join(" ")
            );
        }
    }
}

fn write_reports(report: &eval::EvalReport, out: &Path, raw: Option<&Path>) -> Result<()> {
    eval::emit_report(report, out)?;
    if let Some(raw) = raw {
        eval::emit_raw(report, raw)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let mut cfg = common.config()?;
            cfg.data = None;
            let corpus = eval::load_or_generate_corpus(&cfg, common.seed)?;
            save_measurements(&corpus, &out)?;
            println!(
                "wrote {} locations x {} estimates x {} features to {}",
                corpus.num_locations(),
                corpus.estimates_per_location(),
                corpus.num_features(),
                out.display()
            );
        }
        Command::Train {
            common,
            algorithm,
            locations,
            out,
            history,
        } => {
            let cfg = common.config()?;
            let corpus = eval::load_or_generate_corpus(&cfg, common.seed)?;
            let settings = IterationSettings::from_config(&cfg);
            let data = IterationData::build(&corpus, locations, &settings, common.seed)?;
            let trained = eval::train_algorithm(algorithm, &corpus, &data, &settings, common.seed)?;
            trained.model.save(&out)?;
            if let (Some(path), Some(h)) = (history, &trained.history) {
                eval::emit_history(h, &path)?;
            }
            println!(
                "algorithm={} test_accuracy={:?} model={}",
                algorithm.name(),
                trained.model.accuracy(&data.test)?,
                out.display()
            );
        }
        Command::Decide { model, first, second } => {
            let model = SavedModel::load(&model)?;
            let d = model.decide(&first, &second)?;
            println!(
                "hypothesis={:?} statistic={:?} posterior={:?}",
                d.hypothesis, d.statistic, d.posterior
            );
        }
        Command::SweepLocations { common, out, raw } => {
            let cfg = common.config()?;
            let corpus = eval::load_or_generate_corpus(&cfg, common.seed)?;
            let mut on_row = progress(cfg.location_grid.len() * cfg.iterations);
            let report = eval::sweep_locations(&cfg, &corpus, common.seed, &mut on_row)?;
            write_reports(&report, &out, raw.as_deref())?;
        }
        Command::SweepFeatures { common, out, raw } => {
            let cfg = common.config()?;
            let corpus = eval::load_or_generate_corpus(&cfg, common.seed)?;
            let mut on_row = progress(cfg.feature_subsets.len() * cfg.iterations);
            let report = eval::sweep_features(&cfg, &corpus, common.seed, &mut on_row)?;
            write_reports(&report, &out, raw.as_deref())?;
        }
        Command::Check { seed } => {
            let outcomes = selfcheck::run_all(seed);
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(Error::Infeasible(format!("{failed} invariant check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
