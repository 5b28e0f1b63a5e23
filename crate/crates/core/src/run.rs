//! Run plumbing for the command-line driver: flat key-value configs, staged
//! outputs and the manifest that stamps every output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::SystemTime;

use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// `key = value` lines; `#` starts a comment. Later [`KeyValues::set`] calls
/// (command-line flags) replace file values.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    origin: String,
}

impl KeyValues {
    pub fn new(origin: &str) -> Self {
        Self {
            entries: BTreeMap::new(),
            origin: origin.to_string(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut kv = Self::new(origin);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(origin, format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(origin, format!("line {}: empty key", n + 1)));
            }
            if kv.entries.contains_key(key) {
                return Err(Error::parse(
                    origin,
                    format!("line {}: duplicate key `{key}`", n + 1),
                ));
            }
            kv.entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Rejects keys outside `known`, naming the first offender.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!(
                "{}: unknown key `{k}` (known keys: {})",
                self.origin,
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    Error::Config(format!(
                        "{}: invalid value `{v}` for key `{key}`: {e}",
                        self.origin
                    ))
                })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.origin)))
    }
}

/// Comma-separated list, e.g. `0.5,0.9,1.1`.
pub fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::Config(format!("invalid {what} `{s}`: {e}")))
        })
        .collect()
}

/// `lo, lo+step, …` up to and including `hi` (within rounding).
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Config(format!(
            "invalid grid {lo}..{hi} step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // rounded to 12 decimals so that 0.1-steps print as 0.3, not 0.30000000000000004
    Ok((0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

/// Everything a run writes, held in memory until [`OutputDir::commit`].
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputDir {
    /// Refuses a non-empty directory unless `force`; with `force`, files named
    /// by a previous manifest are removed so stale outputs cannot linger.
    pub fn prepare(root: &Path, force: bool) -> Result<Self> {
        if root.exists() {
            if !root.is_dir() {
                return Err(Error::Config(format!(
                    "{} exists and is not a directory",
                    root.display()
                )));
            }
            let mut entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                if !force {
                    return Err(Error::Config(format!(
                        "{} is not empty; refusing to overwrite (pass --force)",
                        root.display()
                    )));
                }
                remove_previous_outputs(root)?;
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn add(&mut self, relative: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((relative.into(), bytes.into()));
    }

    /// Writes the manifest (with digests of every staged file), then the files.
    pub fn commit(self, mut manifest: RunManifest) -> Result<Vec<PathBuf>> {
        for (rel, bytes) in &self.files {
            manifest
                .outputs
                .push((rel.display().to_string(), sha256_hex(bytes)));
        }
        manifest.finished = timestamp();
        write_atomic(&self.root.join(MANIFEST_NAME), manifest.render().as_bytes())?;
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, bytes) in &self.files {
            let path = self.root.join(rel);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn remove_previous_outputs(root: &Path) -> Result<()> {
    let path = root.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(());
    }
    let manifest = KeyValues::read(&path)?;
    for key in manifest.entries.keys() {
        if let Some(rel) = key.strip_prefix("output.") {
            let target = root.join(rel);
            if target.is_file() {
                fs::remove_file(&target).map_err(|e| Error::io(&target, e))?;
            }
        }
    }
    Ok(())
}

/// Provenance record written as `key = value` lines.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    /// Fully resolved configuration, defaults included.
    pub config: Vec<(String, String)>,
    pub results: Vec<(String, String)>,
    /// `(relative path, sha256)`, filled in by [`OutputDir::commit`].
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            started: timestamp(),
            finished: String::new(),
            config: Vec::new(),
            results: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn result(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.results.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &str| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        };
        line("tool", env!("CARGO_PKG_NAME"));
        line("version", env!("CARGO_PKG_VERSION"));
        line("command", &self.command);
        line("seed", &self.seed.to_string());
        line("started", &self.started);
        line("finished", &self.finished);
        for (k, v) in &self.config {
            line(&format!("config.{k}"), v);
        }
        for (k, v) in &self.results {
            line(&format!("result.{k}"), v);
        }
        for (k, v) in &self.outputs {
            line(&format!("output.{k}"), v);
        }
        out
    }
}
