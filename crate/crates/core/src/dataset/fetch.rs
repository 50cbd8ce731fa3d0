use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetConfig, DATASET_DIR_NAME};
use crate::error::{Error, Result};

pub const DEFAULT_DOWNLOAD_URL: &str =
    "https://archive.ics.uci.edu/static/public/240/human+activity+recognition+using+smartphones.zip";

const MARKER: &str = ".cateq-fetch.json";
const ATTEMPTS: usize = 3;
const BACKOFF_BASE: Duration = Duration::from_millis(500);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FetchOutcome {
    /// The tree was already unpacked and verified; nothing was done.
    AlreadyPresent,
    /// The archive was downloaded, verified, and unpacked.
    Fetched { sha256: String, bytes: u64 },
}

#[derive(Serialize, Deserialize)]
struct Marker {
    url: String,
    sha256: String,
}

/// Downloads the archive named by `cfg.download_url`, verifies its SHA-256
/// against `cfg.expected_sha256` (when set), and unpacks it under `cfg.root`.
///
/// The archive is staged in a temporary file; on a checksum mismatch it is
/// deleted and nothing is unpacked. Network failures are retried three times
/// with exponential backoff. A second call after a successful fetch returns
/// [`FetchOutcome::AlreadyPresent`] without touching the network.
///
/// Besides `http(s)://` URLs, `file://` URLs and bare local paths are accepted.
pub fn fetch_dataset(cfg: &DatasetConfig) -> Result<FetchOutcome> {
    let url = cfg
        .download_url
        .as_deref()
        .ok_or_else(|| Error::Config("download_url is not set".into()))?;
    fs::create_dir_all(&cfg.root).map_err(|e| Error::io(&cfg.root, e))?;

    let marker_path = cfg.root.join(MARKER);
    if cfg.is_complete() {
        if let Ok(text) = fs::read_to_string(&marker_path) {
            let marker: Marker = serde_json::from_str(&text)?;
            let matches = cfg
                .expected_sha256
                .as_deref()
                .is_none_or(|want| want.eq_ignore_ascii_case(&marker.sha256));
            if matches {
                return Ok(FetchOutcome::AlreadyPresent);
            }
        }
    }

    let staging = cfg.root.join(".cateq-download.part");
    let (sha256, bytes) = match download(url, &staging) {
        Ok(v) => v,
        Err(e) => {
            let _ = fs::remove_file(&staging);
            return Err(e);
        }
    };
    if let Some(want) = cfg.expected_sha256.as_deref() {
        if !want.eq_ignore_ascii_case(&sha256) {
            let _ = fs::remove_file(&staging);
            return Err(Error::Checksum {
                expected: want.to_ascii_lowercase(),
                actual: sha256,
            });
        }
    }

    let unpacked = unpack(&staging, &cfg.root);
    let _ = fs::remove_file(&staging);
    unpacked?;
    if !cfg.is_complete() {
        return Err(Error::Archive(format!(
            "archive did not contain the expected `{DATASET_DIR_NAME}` signal files"
        )));
    }
    let marker = Marker {
        url: url.to_string(),
        sha256: sha256.clone(),
    };
    fs::write(&marker_path, serde_json::to_string_pretty(&marker)?)
        .map_err(|e| Error::io(&marker_path, e))?;
    Ok(FetchOutcome::Fetched { sha256, bytes })
}

fn download(url: &str, dest: &Path) -> Result<(String, u64)> {
    if let Some(path) = local_path(url) {
        let mut src = File::open(&path).map_err(|e| Error::io(&path, e))?;
        return copy_hashing(&mut src, dest);
    }
    let mut last = String::new();
    for attempt in 0..ATTEMPTS {
        if attempt > 0 {
            thread::sleep(BACKOFF_BASE * (1 << (attempt - 1)));
        }
        match ureq::get(url).call() {
            Ok(resp) => {
                let mut reader = resp.into_body().into_reader();
                match copy_hashing(&mut reader, dest) {
                    Ok(v) => return Ok(v),
                    Err(e) => last = e.to_string(),
                }
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Network {
        attempts: ATTEMPTS,
        message: last,
    })
}

fn local_path(url: &str) -> Option<PathBuf> {
    if let Some(rest) = url.strip_prefix("file://") {
        Some(PathBuf::from(rest))
    } else if url.contains("://") {
        None
    } else {
        Some(PathBuf::from(url))
    }
}

fn copy_hashing(src: &mut dyn Read, dest: &Path) -> Result<(String, u64)> {
    let mut out = File::create(dest).map_err(|e| Error::io(dest, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = match src.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::io(dest, e)),
        };
        hasher.update(&buf[..n]);
        out.write_all(&buf[..n]).map_err(|e| Error::io(dest, e))?;
        total += n as u64;
    }
    out.flush().map_err(|e| Error::io(dest, e))?;
    Ok((hex::encode(hasher.finalize()), total))
}

fn unpack(archive: &Path, root: &Path) -> Result<()> {
    extract_zip(archive, root)?;
    // the UCI download wraps the dataset in a second zip
    let nested = root.join(format!("{DATASET_DIR_NAME}.zip"));
    if !root.join(DATASET_DIR_NAME).is_dir() && nested.is_file() {
        extract_zip(&nested, root)?;
        let _ = fs::remove_file(&nested);
    }
    Ok(())
}

fn extract_zip(archive: &Path, root: &Path) -> Result<()> {
    let file = File::open(archive).map_err(|e| Error::io(archive, e))?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| Error::Archive(e.to_string()))?;
    zip.extract(root).map_err(|e| Error::Archive(e.to_string()))
}
