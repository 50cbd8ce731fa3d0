use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cateq::dataset::synthetic::{write_uci_tree, SyntheticConfig};
use cateq::dataset::{fetch_dataset, FetchOutcome, Split, DATA_ROOT_ENV, DEFAULT_DOWNLOAD_URL};
use cateq::experiment::{
    load_one, run_benchmark, run_naturality_suite, ExperimentConfig, NaturalityConfig, CONFIG_KEYS,
};
use cateq::features::{write_feature_csv, FeatureSpec, RepresentationKind};
use cateq::learn::Classifier;
use cateq::perturb::write_draw_audit;
use cateq::robustness::{orbit_displacement, risk_invariance_audit, write_displacement_csv};
use cateq::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cateq",
    version,
    about = "Equivariant HAR features, ablations, and OOD benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download, verify, and unpack the dataset archive.
    Fetch {
        #[command(flatten)]
        common: Common,
        /// Archive URL, `file://` URL, or local path.
        #[arg(long, default_value = DEFAULT_DOWNLOAD_URL)]
        url: String,
        /// Expected SHA-256 of the archive (hex).
        #[arg(long)]
        sha256: Option<String>,
    },
    /// Write a synthetic dataset in the official directory layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        train: usize,
        #[arg(long, default_value_t = 300)]
        test: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Extract features for one split and write them as CSV.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: RepresentationKind,
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a classifier on the clean training split and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: RepresentationKind,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a saved model on a clean split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Write the metrics as JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved model on perturbed copies of the test split, one per seed.
    OodEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full benchmark grid and write runs.csv, table.csv, summary.json.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Check naturality of the feature maps on random windows.
    NaturalityTest {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        composites: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        k: usize,
        /// Skip the normalization step; the suite must then fail.
        #[arg(long)]
        fault: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure feature displacement along perturbation orbits.
    Displacement {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        draws: usize,
        /// Use only the first N test windows (all when omitted).
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Write the sampled perturbation of each test window index as CSV.
    Draws {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List configuration keys accepted by `--config` files and `--set`.
    ConfigKeys,
}

/// Configuration layers: defaults, `--config` file, the environment, flags.
#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set c_reg=1.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    /// `uci` or `synthetic`.
    #[arg(long)]
    source: Option<String>,
    /// `body` or `total`.
    #[arg(long)]
    acc_variant: Option<String>,
    /// Comma list of representation kinds, or `all`.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// `full` or `spectral_only`.
    #[arg(long)]
    view: Option<String>,
    /// Comma list or half-open range such as `0..5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    amplitude_log: Option<bool>,
}

impl Common {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let path_str = |p: &Path| p.to_string_lossy().into_owned();
        let flags = [
            ("data_root", self.data_root.as_deref().map(path_str)),
            ("source", self.source.clone()),
            ("acc_variant", self.acc_variant.clone()),
            ("kinds", self.kinds.clone()),
            ("k", self.k.map(|v| v.to_string())),
            ("view", self.view.clone()),
            ("seeds", self.seeds.clone()),
            ("out_dir", self.out_dir.as_deref().map(path_str)),
            ("amplitude_log", self.amplitude_log.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for pair in &self.set {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(format!("expected `train` or `test`, got `{other}`")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn spec_for(cfg: &ExperimentConfig, kind: RepresentationKind) -> Result<FeatureSpec> {
    Ok(FeatureSpec::new(kind, cfg.k, cfg.window_len)?.with_view(cfg.view))
}

#[derive(Serialize)]
struct OodEvalRow {
    seed: u64,
    clean_accuracy: f64,
    clean_weighted_f1: f64,
    ood_accuracy: f64,
    ood_weighted_f1: f64,
    agreement: f64,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fetch {
            common,
            url,
            sha256,
        } => {
            let cfg = common.build()?;
            let mut d = cfg.dataset();
            d.download_url = Some(url);
            d.expected_sha256 = sha256;
            match fetch_dataset(&d)? {
                FetchOutcome::AlreadyPresent => {
                    println!("dataset already present under {}", d.root.display())
                }
                FetchOutcome::Fetched { sha256, bytes } => {
                    println!(
                        "fetched {bytes} bytes (sha256 {sha256}) into {}",
                        d.root.display()
                    )
                }
            }
        }
        Command::Synth {
            out,
            train,
            test,
            seed,
        } => {
            let cfg = SyntheticConfig {
                n_train: train,
                n_test: test,
                seed,
                ..Default::default()
            };
            write_uci_tree(&out, &cfg)?;
            println!(
                "wrote synthetic dataset ({train} train / {test} test) under {}",
                out.display()
            );
        }
        Command::Extract {
            common,
            kind,
            split,
            out,
        } => {
            let cfg = common.build()?;
            let spec = spec_for(&cfg, kind)?;
            let data = load_one(&cfg, split)?;
            let matrix = spec.extract_matrix(&data.windows)?;
            let mut w = create(&out)?;
            write_feature_csv(&mut w, &spec.names(), &matrix, Some(&data.labels))
                .map_err(io_err(&out))?;
            w.flush().map_err(io_err(&out))?;
            println!(
                "{} windows x {} features -> {}",
                matrix.nrows(),
                matrix.ncols(),
                out.display()
            );
        }
        Command::Train {
            common,
            kind,
            model,
        } => {
            let cfg = common.build()?;
            let spec = spec_for(&cfg, kind)?;
            let train = load_one(&cfg, Split::Train)?;
            let (clf, report) = Classifier::fit_windows(
                spec,
                cfg.amplitude_log,
                &train.windows,
                &train.labels,
                cfg.logreg,
            )?;
            clf.save(&model)?;
            println!(
                "trained {kind} (dim {}) on {} windows: {} iterations, converged={}, objective {:.6} -> {}",
                spec.dim(),
                train.len(),
                report.iterations,
                report.converged,
                report.final_objective,
                model.display()
            );
        }
        Command::Eval {
            common,
            model,
            split,
            out,
        } => {
            let cfg = common.build()?;
            let clf = Classifier::load(&model)?;
            let data = load_one(&cfg, split)?;
            let m = clf.evaluate_windows(&data.windows, &data.labels)?;
            println!(
                "{}: accuracy {:.4}, weighted F1 {:.4} on {} windows",
                clf.spec.kind,
                m.accuracy,
                m.weighted_f1,
                data.len()
            );
            if let Some(path) = out {
                write_json(&path, &m)?;
            }
        }
        Command::OodEval { common, model, out } => {
            let cfg = common.build()?;
            let clf = Classifier::load(&model)?;
            let test = load_one(&cfg, Split::Test)?;
            let mut rows = Vec::new();
            for &seed in &cfg.seeds {
                let a = risk_invariance_audit(
                    &clf,
                    clf.spec.kind,
                    &test.windows,
                    &test.labels,
                    &cfg.ood.with_seed(seed),
                )?;
                println!(
                    "seed {seed}: clean {:.4}, ood {:.4}, agreement {:.4}",
                    a.clean.accuracy, a.perturbed.accuracy, a.agreement
                );
                rows.push(OodEvalRow {
                    seed,
                    clean_accuracy: a.clean.accuracy,
                    clean_weighted_f1: a.clean.weighted_f1,
                    ood_accuracy: a.perturbed.accuracy,
                    ood_weighted_f1: a.perturbed.weighted_f1,
                    agreement: a.agreement,
                });
            }
            if let Some(path) = out {
                write_json(&path, &rows)?;
            }
        }
        Command::Ablate { common } => {
            let cfg = common.build()?;
            let report = run_benchmark(&cfg)?;
            println!("kind            dim   clean_acc  ood_acc_mean  ood_acc_std");
            for r in &report.summary.table {
                println!(
                    "{:<15} {:<5} {:<10.4} {:<13.4} {:.4}",
                    r.kind.name(),
                    r.dim,
                    r.clean_accuracy,
                    r.ood_accuracy_mean,
                    r.ood_accuracy_std
                );
            }
            println!("reports written to {}", cfg.out_dir.display());
        }
        Command::NaturalityTest {
            samples,
            composites,
            seed,
            k,
            fault,
            out,
        } => {
            let report = run_naturality_suite(&NaturalityConfig {
                n_samples: samples,
                n_composites: composites,
                seed,
                k,
                fault,
                ..Default::default()
            })?;
            report
                .write_text(io::stdout().lock())
                .map_err(io_err(Path::new("<stdout>")))?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            if !report.passed {
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
        Command::Displacement {
            common,
            draws,
            windows,
        } => {
            let cfg = common.build()?;
            let test = load_one(&cfg, Split::Test)?;
            let n = windows.unwrap_or(test.len()).min(test.len());
            let mut reports = Vec::new();
            for &kind in &cfg.kinds {
                let spec = spec_for(&cfg, kind)?;
                let ood = cfg.ood.with_seed(cfg.seeds[0]);
                reports.push(orbit_displacement(&spec, &test.windows[..n], &ood, draws)?);
            }
            fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
            let csv = cfg.out_dir.join("displacement.csv");
            let mut w = create(&csv)?;
            write_displacement_csv(&mut w, &reports).map_err(io_err(&csv))?;
            w.flush().map_err(io_err(&csv))?;
            write_json(&cfg.out_dir.join("displacement.json"), &reports)?;
            for r in &reports {
                let head = r.spectral.as_ref().unwrap_or(&r.total);
                println!(
                    "{:<15} {} mean_rel {:.3e}, max_rel {:.3e}",
                    r.spec.kind.name(),
                    head.block,
                    head.mean_rel,
                    head.max_rel
                );
            }
            println!("reports written to {}", cfg.out_dir.display());
        }
        Command::Draws {
            common,
            count,
            seed,
        } => {
            let cfg = common.build()?;
            let stdout = io::stdout();
            write_draw_audit(stdout.lock(), &cfg.ood.with_seed(seed), count)
                .map_err(io_err(Path::new("<stdout>")))?;
        }
        Command::ConfigKeys => {
            for (key, help) in CONFIG_KEYS {
                println!("{key:<16} {help}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
