use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::dataset::synthetic::{generate_split, SyntheticConfig};
use crate::dataset::{load_split, AccVariant, HarSplit, SourceFile, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, FeatureView, MultiSensorWindow, RepresentationKind};
use crate::learn::{score, Classifier, Metrics};
use crate::perturb::perturb_windows;

pub const RUNS_FILE: &str = "runs.csv";
pub const TABLE_FILE: &str = "table.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// How the group-only ablation normalizes, recorded in every report.
pub const GROUP_ONLY_NORMALIZATION: &str = "per-sensor block RMS, no per-axis renormalization";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub source: DataSource,
    pub root: Option<PathBuf>,
    pub acc_variant: AccVariant,
    pub synthetic: Option<SyntheticConfig>,
    pub n_train: usize,
    pub n_test: usize,
    /// `split/file` names with their SHA-256, for file-backed sources.
    pub files: Vec<SourceFile>,
}

pub struct LoadedData {
    pub train: HarSplit,
    pub test: HarSplit,
    pub provenance: DataProvenance,
}

/// Loads one split from the configured source and checks its invariants.
pub fn load_one(cfg: &ExperimentConfig, split: Split) -> Result<HarSplit> {
    let data = match cfg.source {
        DataSource::Uci => load_split(&cfg.dataset(), split)?,
        DataSource::Synthetic => {
            let mut s = cfg.synthetic;
            s.window_len = cfg.window_len;
            generate_split(&s, split)
        }
    };
    data.validate(cfg.window_len)?;
    Ok(data)
}

/// Loads both splits from the configured source.
pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let (train, test, root, synthetic) = match cfg.source {
        DataSource::Uci => {
            let d = cfg.dataset();
            let train = load_split(&d, Split::Train)?;
            let test = load_split(&d, Split::Test)?;
            (train, test, Some(d.dataset_dir()), None)
        }
        DataSource::Synthetic => {
            let mut s = cfg.synthetic;
            s.window_len = cfg.window_len;
            (
                generate_split(&s, Split::Train),
                generate_split(&s, Split::Test),
                None,
                Some(s),
            )
        }
    };
    train.validate(cfg.window_len)?;
    test.validate(cfg.window_len)?;
    let files = [&train, &test]
        .into_iter()
        .flat_map(|s| {
            s.sources.iter().map(move |f| SourceFile {
                name: format!("{}/{}", s.split, f.name),
                sha256: f.sha256.clone(),
            })
        })
        .collect();
    let provenance = DataProvenance {
        source: cfg.source,
        root,
        acc_variant: cfg.acc_variant,
        synthetic,
        n_train: train.len(),
        n_test: test.len(),
        files,
    };
    Ok(LoadedData {
        train,
        test,
        provenance,
    })
}

/// One (kind, seed) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: RepresentationKind,
    pub seed: u64,
    pub clean_accuracy: f64,
    pub clean_weighted_f1: f64,
    pub ood_accuracy: f64,
    pub ood_weighted_f1: f64,
    /// Fraction of test windows whose prediction the perturbation left unchanged.
    pub agreement: f64,
}

/// Per-kind aggregate over seeds. Standard deviations are population values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: RepresentationKind,
    pub dim: usize,
    pub clean_accuracy: f64,
    pub clean_weighted_f1: f64,
    pub ood_accuracy_mean: f64,
    pub ood_accuracy_std: f64,
    pub ood_weighted_f1_mean: f64,
    pub ood_weighted_f1_std: f64,
    pub n_seeds: usize,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignFlags {
    pub acc_variant: AccVariant,
    pub amplitude_log: bool,
    pub feature_view: FeatureView,
    pub group_only_normalization: String,
    pub ood_shift: String,
    pub seed_std: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    /// Present when `status` is incomplete.
    pub error: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
    pub flags: DesignFlags,
    pub data: Option<DataProvenance>,
    pub table: Vec<TableRow>,
    pub clean_metrics: Vec<(RepresentationKind, Metrics)>,
    pub runs: Vec<RunRecord>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub summary: BenchmarkSummary,
    pub runs_path: PathBuf,
    pub table_path: PathBuf,
    pub summary_path: PathBuf,
}

impl BenchmarkReport {
    pub fn row(&self, kind: RepresentationKind) -> Option<&TableRow> {
        self.summary.table.iter().find(|r| r.kind == kind)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Default)]
struct Progress {
    data: Option<DataProvenance>,
    table: Vec<TableRow>,
    clean: Vec<(RepresentationKind, Metrics)>,
    runs: Vec<RunRecord>,
}

/// Loads data, then for each kind fits the classifier on clean training
/// windows and scores it on the clean test split and on one perturbed copy of
/// the test split per seed. Writes `runs.csv`, `table.csv`, and
/// `summary.json` under `cfg.out_dir`.
///
/// On failure the files are still written, holding whatever finished, with
/// `status: incomplete` and the failing stage in `summary.json`.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let started = unix_now();
    let mut progress = Progress::default();
    let outcome = run_stages(cfg, &mut progress);
    let (status, error) = match &outcome {
        Ok(()) => (RunStatus::Complete, None),
        Err(e) => (RunStatus::Incomplete, Some(e.to_string())),
    };
    let summary = BenchmarkSummary {
        tool: "cateq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status,
        error,
        started_unix: started,
        finished_unix: unix_now(),
        config: cfg.clone(),
        flags: DesignFlags {
            acc_variant: cfg.acc_variant,
            amplitude_log: cfg.amplitude_log,
            feature_view: cfg.view,
            group_only_normalization: GROUP_ONLY_NORMALIZATION.into(),
            ood_shift: "one circular shift per window, shared by both sensors".into(),
            seed_std: "population (ddof 0)".into(),
        },
        data: progress.data,
        table: progress.table,
        clean_metrics: progress.clean,
        runs: progress.runs,
    };
    let report = write_reports(&cfg.out_dir, summary).map_err(|e| e.in_stage("write"))?;
    outcome.map(|()| report)
}

fn run_stages(cfg: &ExperimentConfig, progress: &mut Progress) -> Result<()> {
    let data = load_data(cfg).map_err(|e| e.in_stage("load"))?;
    progress.data = Some(data.provenance.clone());

    let perturbed: Vec<(u64, Vec<MultiSensorWindow>)> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            perturb_windows(&data.test.windows, &cfg.ood.with_seed(seed))
                .map(|w| (seed, w))
                .map_err(|e| e.in_stage(format!("perturb seed {seed}")))
        })
        .collect::<Result<_>>()?;

    for &kind in &cfg.kinds {
        let spec = FeatureSpec::new(kind, cfg.k, cfg.window_len)?.with_view(cfg.view);
        let stage = |what: &str| format!("{what} {kind}");
        let train_x = spec
            .extract_matrix(&data.train.windows)
            .map_err(|e| e.in_stage(stage("extract train")))?;
        let test_x = spec
            .extract_matrix(&data.test.windows)
            .map_err(|e| e.in_stage(stage("extract test")))?;
        let (clf, solver) = Classifier::fit_features(
            spec,
            cfg.amplitude_log,
            &train_x,
            &data.train.labels,
            cfg.logreg,
        )
        .map_err(|e| e.in_stage(stage("train")))?;
        let clean_pred = clf
            .predict_features(&test_x)
            .map_err(|e| e.in_stage(stage("evaluate")))?;
        let clean = score(&data.test.labels, &clean_pred)?;

        let mut accs = Vec::new();
        let mut f1s = Vec::new();
        for (seed, windows) in &perturbed {
            let x = spec
                .extract_matrix(windows)
                .map_err(|e| e.in_stage(format!("extract ood {kind} seed {seed}")))?;
            let pred = clf
                .predict_features(&x)
                .map_err(|e| e.in_stage(format!("evaluate ood {kind} seed {seed}")))?;
            let m = score(&data.test.labels, &pred)?;
            let same = pred.iter().zip(&clean_pred).filter(|(a, b)| a == b).count();
            accs.push(m.accuracy);
            f1s.push(m.weighted_f1);
            progress.runs.push(RunRecord {
                kind,
                seed: *seed,
                clean_accuracy: clean.accuracy,
                clean_weighted_f1: clean.weighted_f1,
                ood_accuracy: m.accuracy,
                ood_weighted_f1: m.weighted_f1,
                agreement: same as f64 / pred.len() as f64,
            });
        }
        let (acc_mean, acc_std) = mean_std(&accs);
        let (f1_mean, f1_std) = mean_std(&f1s);
        progress.table.push(TableRow {
            kind,
            dim: spec.dim(),
            clean_accuracy: clean.accuracy,
            clean_weighted_f1: clean.weighted_f1,
            ood_accuracy_mean: acc_mean,
            ood_accuracy_std: acc_std,
            ood_weighted_f1_mean: f1_mean,
            ood_weighted_f1_std: f1_std,
            n_seeds: accs.len(),
            solver_iterations: solver.iterations,
            solver_converged: solver.converged,
        });
        progress.clean.push((kind, clean));
    }
    Ok(())
}

fn write_reports(dir: &Path, summary: BenchmarkSummary) -> Result<BenchmarkReport> {
    let runs_path = dir.join(RUNS_FILE);
    let table_path = dir.join(TABLE_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    let complete = summary.status == RunStatus::Complete;

    let mut runs = Vec::new();
    write_runs_csv(&mut runs, &summary.runs, complete).map_err(|e| Error::io(&runs_path, e))?;
    fs::write(&runs_path, runs).map_err(|e| Error::io(&runs_path, e))?;

    let mut table = Vec::new();
    write_table_csv(&mut table, &summary.table, complete).map_err(|e| Error::io(&table_path, e))?;
    fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;

    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;
    Ok(BenchmarkReport {
        summary,
        runs_path,
        table_path,
        summary_path,
    })
}

const INCOMPLETE_MARKER: &str = "# INCOMPLETE: run aborted, rows below are partial";

pub fn write_runs_csv<W: Write>(
    mut out: W,
    runs: &[RunRecord],
    complete: bool,
) -> std::io::Result<()> {
    if !complete {
        writeln!(out, "{INCOMPLETE_MARKER}")?;
    }
    writeln!(
        out,
        "kind,seed,clean_accuracy,clean_weighted_f1,ood_accuracy,ood_weighted_f1,agreement"
    )?;
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.kind,
            r.seed,
            r.clean_accuracy,
            r.clean_weighted_f1,
            r.ood_accuracy,
            r.ood_weighted_f1,
            r.agreement
        )?;
    }
    Ok(())
}

pub fn write_table_csv<W: Write>(
    mut out: W,
    rows: &[TableRow],
    complete: bool,
) -> std::io::Result<()> {
    if !complete {
        writeln!(out, "{INCOMPLETE_MARKER}")?;
    }
    writeln!(
        out,
        "kind,dim,clean_accuracy,clean_weighted_f1,ood_accuracy_mean,ood_accuracy_std,ood_weighted_f1_mean,ood_weighted_f1_std,n_seeds"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.dim,
            r.clean_accuracy,
            r.clean_weighted_f1,
            r.ood_accuracy_mean,
            r.ood_accuracy_std,
            r.ood_weighted_f1_mean,
            r.ood_weighted_f1_std,
            r.n_seeds
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            source: DataSource::Synthetic,
            seeds: vec![0, 1],
            out_dir: out.to_path_buf(),
            ..Default::default()
        };
        cfg.synthetic.n_train = 90;
        cfg.synthetic.n_test = 48;
        cfg
    }

    #[test]
    fn table_has_one_row_per_kind() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_benchmark(&small(dir.path())).unwrap();
        let table = fs::read_to_string(&report.table_path).unwrap();
        assert_eq!(table.lines().count(), 5);
        let dims: Vec<usize> = report.summary.table.iter().map(|r| r.dim).collect();
        assert_eq!(dims, vec![768, 144, 48, 74]);
        let runs = fs::read_to_string(&report.runs_path).unwrap();
        assert_eq!(runs.lines().count(), 1 + 4 * 2);
        assert_eq!(report.summary.status, RunStatus::Complete);
        assert_eq!(
            report.summary.flags.group_only_normalization,
            GROUP_ONLY_NORMALIZATION
        );
    }

    #[test]
    fn identity_draws_match_clean_scores() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.ood = crate::perturb::OodConfig::identity(0);
        let report = run_benchmark(&cfg).unwrap();
        for r in &report.summary.table {
            assert_eq!(r.ood_accuracy_mean, r.clean_accuracy, "{:?}", r.kind);
            assert_eq!(r.ood_accuracy_std, 0.0);
        }
        assert!(report.summary.runs.iter().all(|r| r.agreement == 1.0));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = small(a.path());
        cfg.kinds = vec![
            RepresentationKind::GroupPoset,
            RepresentationKind::PosetOnly,
        ];
        let ra = run_benchmark(&cfg).unwrap();
        cfg.out_dir = b.path().to_path_buf();
        let rb = run_benchmark(&cfg).unwrap();
        for name in [RUNS_FILE, TABLE_FILE] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
        let strip = |r: &BenchmarkReport| {
            let mut v = serde_json::to_value(&r.summary).unwrap();
            for key in ["started_unix", "finished_unix", "config"] {
                v.as_object_mut().unwrap().remove(key);
            }
            v
        };
        assert_eq!(strip(&ra), strip(&rb));
    }

    #[test]
    fn missing_data_leaves_an_incomplete_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(&dir.path().join("out"));
        cfg.source = DataSource::Uci;
        cfg.data_root = dir.path().join("nowhere");
        let err = run_benchmark(&cfg).unwrap_err();
        assert!(
            matches!(&err, Error::Stage { stage, .. } if stage == "load"),
            "{err}"
        );
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(cfg.out_dir.join(SUMMARY_FILE)).unwrap())
                .unwrap();
        assert_eq!(summary["status"], "incomplete");
        assert!(fs::read_to_string(cfg.out_dir.join(TABLE_FILE))
            .unwrap()
            .starts_with("# INCOMPLETE"));
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
