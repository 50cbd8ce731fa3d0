//! Loading the UCI HAR raw inertial signals.
//!
//! Layout (relative to the dataset directory):
//!
//! ```text
//! train/Inertial Signals/{body_acc|total_acc}_{x,y,z}_train.txt
//! train/Inertial Signals/body_gyro_{x,y,z}_train.txt
//! train/y_train.txt
//! train/subject_train.txt        (optional, parsed but unused)
//! test/...                       (same with `test`)
//! ```
//!
//! Each signal file holds one window per line as 128 whitespace-separated
//! reals. The dataset directory is either the configured root itself or its
//! `UCI HAR Dataset` subdirectory.

mod fetch;
pub mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::MultiSensorWindow;
use crate::signal::{TimeSeries, TriAxialWindow, DEFAULT_WINDOW_LEN};

pub use fetch::{fetch_dataset, FetchOutcome, DEFAULT_DOWNLOAD_URL};

/// Directory name used by the official archive.
pub const DATASET_DIR_NAME: &str = "UCI HAR Dataset";

/// Environment variable overriding the dataset root.
pub const DATA_ROOT_ENV: &str = "CATEQ_DATA_ROOT";

pub const NUM_CLASSES: u8 = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccVariant {
    /// Gravity-removed body acceleration.
    #[default]
    Body,
    /// Raw total acceleration including gravity.
    Total,
}

impl AccVariant {
    pub fn file_prefix(self) -> &'static str {
        match self {
            AccVariant::Body => "body_acc",
            AccVariant::Total => "total_acc",
        }
    }
}

impl fmt::Display for AccVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccVariant::Body => "body",
            AccVariant::Total => "total",
        })
    }
}

impl FromStr for AccVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "body" | "body_acc" => Ok(AccVariant::Body),
            "total" | "total_acc" => Ok(AccVariant::Total),
            other => Err(Error::Config(format!("unknown acc variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub root: PathBuf,
    pub acc_variant: AccVariant,
    pub window_len: usize,
    pub download_url: Option<String>,
    /// Hex-encoded SHA-256 of the downloaded archive.
    pub expected_sha256: Option<String>,
}

impl DatasetConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            acc_variant: AccVariant::Body,
            window_len: DEFAULT_WINDOW_LEN,
            download_url: None,
            expected_sha256: None,
        }
    }

    /// The directory holding `train/` and `test/`.
    pub fn dataset_dir(&self) -> PathBuf {
        let nested = self.root.join(DATASET_DIR_NAME);
        if nested.is_dir() {
            nested
        } else {
            self.root.clone()
        }
    }

    /// The seven files `load_split` reads: six signal files (acc x/y/z, gyro
    /// x/y/z) followed by the label file.
    pub fn split_files(&self, split: Split) -> [PathBuf; 7] {
        let dir = self.dataset_dir().join(split.name());
        let signals = dir.join("Inertial Signals");
        let signal =
            |prefix: &str, axis: &str| signals.join(format!("{prefix}_{axis}_{split}.txt"));
        let acc = self.acc_variant.file_prefix();
        [
            signal(acc, "x"),
            signal(acc, "y"),
            signal(acc, "z"),
            signal("body_gyro", "x"),
            signal("body_gyro", "y"),
            signal("body_gyro", "z"),
            dir.join(format!("y_{split}.txt")),
        ]
    }

    pub fn subject_file(&self, split: Split) -> PathBuf {
        self.dataset_dir()
            .join(split.name())
            .join(format!("subject_{split}.txt"))
    }

    /// True when every file of both splits exists.
    pub fn is_complete(&self) -> bool {
        [Split::Train, Split::Test]
            .iter()
            .all(|&s| self.split_files(s).iter().all(|p| p.is_file()))
    }
}

/// Name and SHA-256 of a file that went into a loaded split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub sha256: String,
}

/// A fully loaded split. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HarSplit {
    pub split: Split,
    pub windows: Vec<MultiSensorWindow>,
    pub labels: Vec<u8>,
    pub subjects: Option<Vec<u32>>,
    pub acc_variant: AccVariant,
    pub sources: Vec<SourceFile>,
}

impl HarSplit {
    pub fn from_windows(split: Split, windows: Vec<MultiSensorWindow>) -> Result<Self> {
        let labels = windows
            .iter()
            .map(|w| w.label.ok_or(Error::Empty("window label")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = labels.iter().find(|l| !(1..=NUM_CLASSES).contains(l)) {
            return Err(Error::Config(format!(
                "label {bad} outside 1..={NUM_CLASSES}"
            )));
        }
        Ok(Self {
            split,
            windows,
            labels,
            subjects: None,
            acc_variant: AccVariant::Body,
            sources: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// First `n` windows (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> HarSplit {
        let n = n.min(self.len());
        HarSplit {
            split: self.split,
            windows: self.windows[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            subjects: self.subjects.as_ref().map(|s| s[..n].to_vec()),
            acc_variant: self.acc_variant,
            sources: self.sources.clone(),
        }
    }

    /// Asserts the window invariants over the whole split: finite samples and
    /// the configured length.
    pub fn validate(&self, window_len: usize) -> Result<()> {
        if self.windows.len() != self.labels.len() {
            return Err(Error::Dimension {
                expected: self.windows.len(),
                found: self.labels.len(),
            });
        }
        for w in &self.windows {
            if w.window_len() != window_len {
                return Err(Error::LengthMismatch {
                    expected: window_len,
                    found: w.window_len(),
                });
            }
            for (_, block) in w.blocks.iter() {
                if block.to_flat().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("window"));
                }
            }
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_rows(path: &Path, bytes: &[u8], cols: usize) -> Result<Array2<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let start = data.len();
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| parse_err(format!("unparseable value `{token}`")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{token}`")));
            }
            data.push(v);
        }
        let found = data.len() - start;
        if found != cols {
            return Err(parse_err(format!("expected {cols} fields, found {found}")));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row widths checked"))
}

/// Parses one inertial signal file into a `rows × cols` matrix (cols = 128 for
/// UCI HAR). Blank lines are skipped; every other line must hold exactly
/// `cols` finite reals.
pub fn parse_inertial_file(path: &Path, cols: usize) -> Result<Array2<f64>> {
    parse_rows(path, &read_file(path)?, cols)
}

fn parse_integers(path: &Path, bytes: &[u8]) -> Result<Vec<i64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let v: i64 = token.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected an integer, found `{token}`"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

/// Parses a label file (`y_train.txt`); every label must be in `1..=6`.
pub fn parse_label_file(path: &Path) -> Result<Vec<u8>> {
    parse_labels(path, &read_file(path)?)
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let values = parse_integers(path, bytes)?;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if (1..=NUM_CLASSES as i64).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("label {v} outside 1..={NUM_CLASSES}"),
                })
            }
        })
        .collect()
}

/// Loads one split by zipping rows across the six signal files and the label
/// file. All seven must agree on the row count.
pub fn load_split(cfg: &DatasetConfig, split: Split) -> Result<HarSplit> {
    let paths = cfg.split_files(split);
    let raw: Vec<Vec<u8>> = paths
        .par_iter()
        .map(|p| read_file(p))
        .collect::<Result<_>>()?;
    let sources = paths
        .iter()
        .zip(&raw)
        .map(|(p, bytes)| SourceFile {
            name: relative_name(&cfg.dataset_dir(), p),
            sha256: sha256_hex(bytes),
        })
        .collect();

    let matrices: Vec<Array2<f64>> = paths[..6]
        .par_iter()
        .zip(&raw[..6])
        .map(|(p, bytes)| parse_rows(p, bytes, cfg.window_len))
        .collect::<Result<_>>()?;
    let labels = parse_labels(&paths[6], &raw[6])?;

    let counts: Vec<usize> = matrices
        .iter()
        .map(|m| m.nrows())
        .chain(std::iter::once(labels.len()))
        .collect();
    for (i, &n) in counts.iter().enumerate().skip(1) {
        if n != counts[0] {
            return Err(Error::RowCountMismatch {
                left: paths[0].clone(),
                left_rows: counts[0],
                right: paths[i].clone(),
                right_rows: n,
            });
        }
    }

    let subject_path = cfg.subject_file(split);
    let subjects = if subject_path.is_file() {
        let ids = parse_integers(&subject_path, &read_file(&subject_path)?)?;
        if ids.len() != labels.len() {
            return Err(Error::RowCountMismatch {
                left: paths[6].clone(),
                left_rows: labels.len(),
                right: subject_path,
                right_rows: ids.len(),
            });
        }
        Some(ids.into_iter().map(|v| v as u32).collect())
    } else {
        None
    };

    let row = |m: &Array2<f64>, i: usize| TimeSeries::from_vec_unchecked(m.row(i).to_vec());
    let windows = (0..labels.len())
        .map(|i| {
            let block = |offset: usize| {
                TriAxialWindow::new(
                    row(&matrices[offset], i),
                    row(&matrices[offset + 1], i),
                    row(&matrices[offset + 2], i),
                )
            };
            MultiSensorWindow::new(block(0)?, block(3)?, Some(labels[i]))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(HarSplit {
        split,
        windows,
        labels,
        subjects,
        acc_variant: cfg.acc_variant,
        sources,
    })
}

fn relative_name(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(path: &Path, text: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, text).unwrap();
    }

    fn row(values: impl Iterator<Item = f64>) -> String {
        values
            .map(|v| format!("{v:.7e}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn parses_fixture_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        let first: Vec<f64> = (0..128).map(|i| i as f64 * 0.5 - 3.0).collect();
        let second: Vec<f64> = (0..128).map(|i| -(i as f64) * 1e-3).collect();
        // UCI files are right-aligned with leading spaces
        let text = format!(
            "  {}\n  {}\n",
            row(first.iter().copied()),
            row(second.iter().copied())
        );
        write(&path, &text);
        let m = parse_inertial_file(&path, 128).unwrap();
        assert_eq!(m.dim(), (2, 128));
        for (a, b) in m.row(0).iter().zip(&first) {
            assert_eq!(a, b);
        }
        for (a, b) in m.row(1).iter().zip(&second) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn scientific_notation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        write(&path, &format!("1.0e-3 {}\n", vec!["0"; 127].join(" ")));
        let m = parse_inertial_file(&path, 128).unwrap();
        assert_eq!(m[[0, 0]], 0.001);
    }

    #[test]
    fn short_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        let good = vec!["1"; 128].join(" ");
        let bad = vec!["1"; 127].join(" ");
        write(&path, &format!("{good}\n{good}\n{bad}\n"));
        match parse_inertial_file(&path, 128) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("127"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.txt");
        write(&path, &format!("abc {}\n", vec!["1"; 127].join(" ")));
        assert!(matches!(
            parse_inertial_file(&path, 128),
            Err(Error::Parse { line: 1, .. })
        ));
        write(&path, &format!("nan {}\n", vec!["1"; 127].join(" ")));
        assert!(matches!(
            parse_inertial_file(&path, 128),
            Err(Error::Parse { .. })
        ));
        write(&path, "\n\n");
        assert!(matches!(
            parse_inertial_file(&path, 128),
            Err(Error::EmptyFile(_))
        ));
        assert!(matches!(
            parse_inertial_file(&dir.path().join("absent.txt"), 128),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn labels_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.txt");
        write(&path, "1\n6\n3\n");
        assert_eq!(parse_label_file(&path).unwrap(), vec![1, 6, 3]);
        write(&path, "1\n7\n");
        assert!(matches!(
            parse_label_file(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        write(&path, "0\n");
        assert!(parse_label_file(&path).is_err());
    }

    #[test]
    fn variant_and_paths() {
        let mut cfg = DatasetConfig::new("/data");
        let files = cfg.split_files(Split::Test);
        assert!(files[0].ends_with("test/Inertial Signals/body_acc_x_test.txt"));
        assert!(files[5].ends_with("test/Inertial Signals/body_gyro_z_test.txt"));
        assert!(files[6].ends_with("test/y_test.txt"));
        cfg.acc_variant = AccVariant::Total;
        assert!(cfg.split_files(Split::Train)[1]
            .ends_with("train/Inertial Signals/total_acc_y_train.txt"));
        assert_eq!("total".parse::<AccVariant>().unwrap(), AccVariant::Total);
        assert!("gravity".parse::<AccVariant>().is_err());
    }
}
