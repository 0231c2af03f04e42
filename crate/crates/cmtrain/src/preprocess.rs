//! Batch preprocessing of a manifest into 16 kHz mono 16-bit PCM files.

use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmtrain_core::audio::{self, AudioBuffer, NormMode};
use cmtrain_core::catalog::{Manifest, ManifestEntry};
use rayon::prelude::*;

use crate::manifest::{resolve, write_manifest};
use crate::wav;

pub const AUDIO_DIR: &str = "audio";
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug)]
pub struct PreprocessReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub skipped: Vec<(String, String)>,
}

/// Output location of an entry, relative to the output directory. Ids are
/// used as relative paths, so ones that could escape the directory are
/// rejected.
pub fn output_relpath(id: &str) -> Result<PathBuf> {
    let p = Path::new(id);
    if p.components().any(|c| !matches!(c, Component::Normal(_))) || id.is_empty() {
        bail!("entry id `{id}` cannot be used as a relative output path");
    }
    let mut out = Path::new(AUDIO_DIR).join(p);
    if out.extension().map_or(true, |e| e != "wav") {
        let mut name = out.file_name().unwrap().to_os_string();
        name.push(".wav");
        out.set_file_name(name);
    }
    Ok(out)
}

fn process_one(base: &Path, out_dir: &Path, e: &ManifestEntry, norm: NormMode) -> Result<ManifestEntry> {
    let rel = output_relpath(&e.id)?;
    let src = resolve(base, &e.path);
    let buf = wav::load_audio(&src)?;
    let out: AudioBuffer = audio::preprocess(&buf, norm)?;
    if out.frames() == 0 {
        bail!("`{}` is empty after resampling", src.display());
    }
    let dst = out_dir.join(&rel);
    if let Some(dir) = dst.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
    }
    wav::write_pcm16(&dst, &out)?;
    Ok(ManifestEntry {
        path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        duration_s: out.duration_s(),
        ..e.clone()
    })
}

/// Downmixes, resamples and normalizes every entry, writing
/// `out_dir/audio/<id>.wav` and `out_dir/manifest.jsonl` with durations
/// re-probed from the written files. Undecodable inputs are skipped and
/// reported.
pub fn preprocess_manifest(m: &Manifest, base: &Path, out_dir: &Path, norm: NormMode) -> Result<PreprocessReport> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create `{}`", out_dir.display()))?;
    let results: Vec<Result<ManifestEntry>> =
        m.entries().par_iter().map(|e| process_one(base, out_dir, e, norm)).collect();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in m.entries().iter().zip(results) {
        match r {
            Ok(ne) => entries.push(ne),
            Err(err) => {
                log::warn!("skipping `{}`: {err:#}", e.id);
                skipped.push((e.id.clone(), format!("{err:#}")));
            }
        }
    }
    if entries.is_empty() {
        bail!("no entries could be preprocessed");
    }
    let manifest = Manifest::new(entries)?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest_path, &manifest)?;
    Ok(PreprocessReport {
        manifest,
        manifest_path,
        skipped,
    })
}
