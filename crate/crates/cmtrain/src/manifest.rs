//! JSON Lines manifests and rule-driven manifest building.
//!
//! Relative entry paths are resolved against the directory holding the
//! manifest file, so a preprocessed corpus can be moved as one directory.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmtrain_core::audio::AudioBuffer;
use cmtrain_core::catalog::{ArtifactCategory, Manifest, ManifestEntry, Split};
use globset::{Glob, GlobMatcher};
use rayon::prelude::*;
use serde::Deserialize;

use crate::wav;

/// A manifest plus the directory its relative paths are anchored to.
#[derive(Clone, Debug)]
pub struct ManifestFile {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl ManifestFile {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        resolve(&self.base_dir, &entry.path)
    }
}

pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<ManifestFile> {
    let f = fs::File::open(path).with_context(|| format!("cannot open manifest `{}`", path.display()))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read `{}`", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed manifest entry", path.display(), i + 1))?;
        entries.push(e);
    }
    let manifest = Manifest::new(entries).with_context(|| format!("invalid manifest `{}`", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(ManifestFile { manifest, base_dir })
}

/// Reads and merges several manifests; each keeps its own base directory by
/// having relative paths rewritten to include it.
pub fn read_manifests(paths: &[PathBuf]) -> Result<Manifest> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        let mf = read_manifest(p)?;
        let entries = mf
            .manifest
            .entries()
            .iter()
            .map(|e| ManifestEntry {
                path: mf.resolve(e).to_string_lossy().into_owned(),
                ..e.clone()
            })
            .collect();
        parts.push(Manifest::new(entries)?);
    }
    Ok(Manifest::merge(parts)?)
}

pub fn manifest_to_string(m: &Manifest) -> String {
    let mut out = String::new();
    for e in m.entries() {
        out.push_str(&serde_json::to_string(e).expect("manifest entries always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("cannot create `{}`", path.display()))?;
    f.write_all(manifest_to_string(m).as_bytes())?;
    Ok(())
}

/// Fails on the first entry whose audio file does not exist.
pub fn check_paths(m: &Manifest, base: &Path) -> Result<()> {
    for e in m.entries() {
        let p = resolve(base, &e.path);
        if !p.is_file() {
            bail!("entry `{}`: audio file `{}` not found", e.id, p.display());
        }
    }
    Ok(())
}

/// Loads an entry's audio, requiring 16 kHz mono and a length within one
/// sample of the manifest duration.
pub fn load_entry(base: &Path, e: &ManifestEntry) -> Result<AudioBuffer> {
    let path = resolve(base, &e.path);
    let buf = wav::load_audio(&path)?;
    buf.require_preprocessed()
        .with_context(|| format!("entry `{}` (`{}`); run `cmtrain preprocess` first", e.id, path.display()))?;
    let declared = e.duration_s * buf.sample_rate as f64;
    if (buf.frames() as f64 - declared).abs() > 1.0 {
        bail!(
            "entry `{}`: file has {} samples but the manifest declares {:.6} s ({:.1} samples)",
            e.id,
            buf.frames(),
            e.duration_s,
            declared
        );
    }
    Ok(buf)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub glob: String,
    pub category: ArtifactCategory,
    pub dataset: String,
    #[serde(default = "unknown")]
    pub language: String,
    #[serde(default = "train")]
    pub split: Split,
}

fn unknown() -> String {
    "unknown".into()
}

fn train() -> Split {
    Split::Train
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rules {
    #[serde(rename = "rule")]
    pub rules: Vec<Rule>,
}

impl Rules {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read rules `{}`", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid rules file `{}`", path.display()))
    }
}

#[derive(Debug)]
pub struct BuildReport {
    pub manifest: Manifest,
    /// Matched files that could not be decoded, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Walks `root`, assigns each file to the single rule whose glob matches its
/// root-relative path, and probes durations in parallel. Ids are the relative
/// paths with `/` separators; entries are ordered lexicographically by id.
pub fn build_manifest(root: &Path, rules: &Rules) -> Result<BuildReport> {
    if !root.is_dir() {
        bail!("root `{}` is not a directory", root.display());
    }
    let matchers: Vec<(GlobMatcher, &Rule)> = rules
        .rules
        .iter()
        .map(|r| Ok((Glob::new(&r.glob).with_context(|| format!("bad glob `{}`", r.glob))?.compile_matcher(), r)))
        .collect::<Result<_>>()?;
    let root_abs = fs::canonicalize(root)?;

    let mut files = Vec::new();
    for item in walkdir::WalkDir::new(&root_abs).follow_links(true) {
        let item = item?;
        if !item.file_type().is_file() {
            continue;
        }
        let rel = item.path().strip_prefix(&root_abs).expect("walk stays under root");
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push((id, item.path().to_path_buf()));
    }
    files.sort();

    let mut matched = Vec::new();
    for (id, path) in files {
        let hits: Vec<&Rule> = matchers.iter().filter(|(g, _)| g.is_match(&id)).map(|(_, r)| *r).collect();
        match hits.len() {
            0 => {}
            1 => matched.push((id, path, hits[0])),
            _ => {
                let globs: Vec<&str> = hits.iter().map(|r| r.glob.as_str()).collect();
                bail!("file `{id}` is matched by {} rules ({})", hits.len(), globs.join(", "));
            }
        }
    }

    let probed: Vec<(String, PathBuf, &Rule, Result<f64>)> = matched
        .into_par_iter()
        .map(|(id, path, rule)| {
            let d = wav::probe_duration(&path);
            (id, path, rule, d)
        })
        .collect();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (id, path, rule, d) in probed {
        match d {
            Ok(duration_s) => entries.push(ManifestEntry {
                id,
                path: path.to_string_lossy().into_owned(),
                duration_s,
                category: rule.category,
                dataset: rule.dataset.clone(),
                language: rule.language.clone(),
                split: rule.split,
            }),
            Err(err) => {
                log::warn!("skipping `{id}`: {err:#}");
                skipped.push((id, format!("{err:#}")));
            }
        }
    }
    if entries.is_empty() {
        bail!("no entries: no readable file under `{}` matches a rule", root.display());
    }
    Ok(BuildReport {
        manifest: Manifest::new(entries)?,
        skipped,
    })
}
