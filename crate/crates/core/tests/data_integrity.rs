use std::fs;
use std::path::Path;

use cateq::dataset::synthetic::{generate_split, write_uci_tree, SyntheticConfig};
use cateq::dataset::{load_split, DatasetConfig, Split};
use cateq::Error;

fn tree(root: &Path) -> DatasetConfig {
    write_uci_tree(
        root,
        &SyntheticConfig {
            n_train: 24,
            n_test: 12,
            ..Default::default()
        },
    )
    .unwrap();
    DatasetConfig::new(root)
}

fn signal(cfg: &DatasetConfig, name: &str) -> std::path::PathBuf {
    cfg.dataset_dir()
        .join("train")
        .join("Inertial Signals")
        .join(name)
}

#[test]
fn intact_tree_loads_with_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let train = load_split(&cfg, Split::Train).unwrap();
    let test = load_split(&cfg, Split::Test).unwrap();
    assert_eq!((train.len(), test.len()), (24, 12));
    assert!(train
        .labels
        .iter()
        .chain(&test.labels)
        .all(|l| (1..=6).contains(l)));
    assert_eq!(train.sources.len(), 7);
    assert!(train.sources.iter().all(|s| s.sha256.len() == 64));
    train.validate(128).unwrap();
}

#[test]
fn dropped_last_line_is_a_row_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let path = signal(&cfg, "body_gyro_y_train.txt");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().collect();
    fs::write(&path, kept[..kept.len() - 1].join("\n") + "\n").unwrap();
    match load_split(&cfg, Split::Train) {
        Err(Error::RowCountMismatch {
            right,
            right_rows,
            left_rows,
            ..
        }) => {
            assert_eq!((left_rows, right_rows), (24, 23));
            assert!(right.ends_with("body_gyro_y_train.txt"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn cut_mid_line_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let path = signal(&cfg, "body_acc_z_train.txt");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
    match load_split(&cfg, Split::Train) {
        Err(Error::Parse { path: p, line, .. }) => {
            assert_eq!(line, 24);
            assert!(p.ends_with("body_acc_z_train.txt"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn emptied_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let path = signal(&cfg, "body_acc_x_train.txt");
    fs::write(&path, "").unwrap();
    assert!(matches!(
        load_split(&cfg, Split::Train),
        Err(Error::EmptyFile(_))
    ));
    fs::remove_file(&path).unwrap();
    assert!(matches!(
        load_split(&cfg, Split::Train),
        Err(Error::MissingFile(_))
    ));
    // the other split is untouched
    assert_eq!(load_split(&cfg, Split::Test).unwrap().len(), 12);
}

#[test]
fn truncated_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let path = cfg.dataset_dir().join("test").join("y_test.txt");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(matches!(
        load_split(&cfg, Split::Test),
        Err(Error::RowCountMismatch { .. })
    ));
}

#[test]
fn out_of_range_label() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let path = cfg.dataset_dir().join("test").join("y_test.txt");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = "7".into();
    fs::write(&path, lines.join("\n")).unwrap();
    match load_split(&cfg, Split::Test) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn loaded_values_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tree(dir.path());
    let loaded = load_split(&cfg, Split::Test).unwrap();
    let generated = generate_split(
        &SyntheticConfig {
            n_train: 24,
            n_test: 12,
            ..Default::default()
        },
        Split::Test,
    );
    assert_eq!(loaded.labels, generated.labels);
    for (a, b) in loaded.windows.iter().zip(&generated.windows) {
        for (x, y) in a.blocks.gyro.to_flat().iter().zip(b.blocks.gyro.to_flat()) {
            // written with 8 significant digits
            assert!((x - y).abs() <= 5e-8 * y.abs().max(1e-3));
        }
    }
}
