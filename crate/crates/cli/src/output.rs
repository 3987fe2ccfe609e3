//! Persisting runs: files are written into a hidden staging directory next
//! to the target and moved into place with a single rename, so a failed run
//! leaves nothing behind and readers never see a half-written directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::execute;
use crate::spec::ExperimentSpec;
use crate::{RunnerError, GIT_DESCRIBE, TOOL_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Resolved spec plus provenance of the tool and digests of every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    /// File name -> SHA-256 (hex) of the result files.
    pub digests: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, RunnerError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunnerError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub summary: BTreeMap<String, f64>,
    pub text: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Validate, run and persist `spec` into `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome, RunnerError> {
    spec.validate()?;
    run_into(spec, &spec.out)
}

/// Run an already validated spec, writing to `target` (which may differ from
/// `spec.out` when a sweep stages its cells).
pub(crate) fn run_into(spec: &ExperimentSpec, target: &Path) -> Result<RunOutcome, RunnerError> {
    let art = execute(spec)?;
    let digests = art.files.iter().map(|(name, bytes)| (name.clone(), sha256_hex(bytes))).collect();
    let manifest = Manifest {
        spec: spec.clone(),
        tool: "mobserv".into(),
        version: TOOL_VERSION.into(),
        git_describe: GIT_DESCRIBE.into(),
        digests,
    };
    let mut summary = format!(
        "{} ({}), seed {}\n",
        spec.name,
        spec.experiment.subcommand(),
        spec.seed
    );
    summary.push_str(&art.text);

    let mut files = art.files;
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');
    files.push((MANIFEST_FILE.into(), manifest_bytes));
    files.push((SUMMARY_FILE.into(), summary.clone().into_bytes()));
    commit_files(target, &files)?;
    Ok(RunOutcome { out: target.to_path_buf(), manifest, summary: art.summary, text: summary })
}

static STAGING_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn sibling(target: &Path, tag: &str) -> Result<PathBuf, RunnerError> {
    let name = target
        .file_name()
        .ok_or_else(|| RunnerError::invalid("out", format!("{} has no final component", target.display())))?;
    let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let n = STAGING_COUNTER.fetch_add(1, Ordering::Relaxed);
    Ok(parent.join(format!(".{}.{tag}-{}-{n}", name.to_string_lossy(), std::process::id())))
}

/// Create a staging directory next to `target`; `fill` writes into it.
/// On success the staging directory replaces `target`, otherwise it is removed.
pub(crate) fn commit_dir<F>(target: &Path, fill: F) -> Result<(), RunnerError>
where
    F: FnOnce(&Path) -> Result<(), RunnerError>,
{
    if target.exists() && !target.is_dir() {
        return Err(RunnerError::invalid("out", format!("{} exists and is not a directory", target.display())));
    }
    let staging = sibling(target, "staging")?;
    if let Some(parent) = staging.parent() {
        fs::create_dir_all(parent).map_err(|e| RunnerError::io(parent, e))?;
    }
    let result = fs::create_dir(&staging)
        .map_err(|e| RunnerError::io(&staging, e))
        .and_then(|_| fill(&staging))
        .and_then(|_| replace_dir(&staging, target));
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

pub(crate) fn commit_files(target: &Path, files: &[(String, Vec<u8>)]) -> Result<(), RunnerError> {
    commit_dir(target, |dir| {
        for (name, bytes) in files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| RunnerError::io(&path, e))?;
        }
        Ok(())
    })
}

fn replace_dir(staging: &Path, target: &Path) -> Result<(), RunnerError> {
    if !target.exists() {
        return fs::rename(staging, target).map_err(|e| RunnerError::io(target, e));
    }
    let old = sibling(target, "old")?;
    fs::rename(target, &old).map_err(|e| RunnerError::io(target, e))?;
    if let Err(e) = fs::rename(staging, target) {
        let _ = fs::rename(&old, target);
        return Err(RunnerError::io(target, e));
    }
    fs::remove_dir_all(&old).map_err(|e| RunnerError::io(&old, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn failed_fill_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("run");
        let err = commit_dir(&target, |dir| {
            fs::write(dir.join("partial.csv"), b"x").unwrap();
            Err(RunnerError::invalid("test", "boom"))
        });
        assert!(err.is_err());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn replaces_existing_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("run");
        commit_files(&target, &[("a.txt".into(), b"1".to_vec())]).unwrap();
        commit_files(&target, &[("b.txt".into(), b"2".to_vec())]).unwrap();
        assert!(!target.join("a.txt").exists());
        assert_eq!(fs::read(target.join("b.txt")).unwrap(), b"2");
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    }
}
