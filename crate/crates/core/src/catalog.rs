//! Manifest entries carrying the five-way artifact taxonomy, plus splitting
//! and per-category statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result};

/// What kind of artifact (if any) a recording carries.
///
/// The discriminant order is the class index used by the model head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactCategory {
    Genuine,
    TtsVc,
    Vocoded,
    Restored,
    NeuralCodec,
}

impl ArtifactCategory {
    pub const ALL: [ArtifactCategory; 5] = [
        ArtifactCategory::Genuine,
        ArtifactCategory::TtsVc,
        ArtifactCategory::Vocoded,
        ArtifactCategory::Restored,
        ArtifactCategory::NeuralCodec,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_genuine(self) -> bool {
        self == ArtifactCategory::Genuine
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactCategory::Genuine => "genuine",
            ArtifactCategory::TtsVc => "tts_vc",
            ArtifactCategory::Vocoded => "vocoded",
            ArtifactCategory::Restored => "restored",
            ArtifactCategory::NeuralCodec => "neural_codec",
        }
    }
}

impl fmt::Display for ArtifactCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArtifactCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown category `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown split `{s}`"))),
        }
    }
}

/// One audio file. Field order is the serialized field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub duration_s: f64,
    pub category: ArtifactCategory,
    pub dataset: String,
    pub language: String,
    pub split: Split,
}

/// An ordered list of entries with unique ids and positive durations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "duplicate id `{}`",
                    e.id
                )));
            }
            if !(e.duration_s > 0.0 && e.duration_s.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "entry `{}` has non-positive duration {}",
                    e.id,
                    e.duration_s
                )));
            }
        }
        Ok(Manifest { entries })
    }

    /// Concatenates manifests in order. Ids must stay unique.
    pub fn merge<I: IntoIterator<Item = Manifest>>(parts: I) -> Result<Self> {
        let mut all = Vec::new();
        for p in parts {
            all.extend(p.entries);
        }
        Manifest::new(all)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entries belonging to `split`, order preserved.
    pub fn filter_split(&self, split: Split) -> Manifest {
        Manifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.entries.iter().map(|e| e.duration_s).sum()
    }
}

/// Randomly partitions `m` into `(train, val)` with `round(fraction * N)`
/// training entries. Relative order is preserved inside each half and the
/// `split` field is rewritten to match.
pub fn split_manifest(m: &Manifest, train_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if m.is_empty() {
        return Err(Error::Empty);
    }
    let n = m.len();
    let n_train = libm::round(train_fraction * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "split", &[]));
    let mut is_train = alloc::vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    if n_train == n {
        log::warn!("split of {n} entries at fraction {train_fraction} leaves the validation half empty");
    }
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(n - n_train);
    for (e, t) in m.entries.iter().zip(is_train) {
        let mut e = e.clone();
        if t {
            e.split = Split::Train;
            train.push(e);
        } else {
            e.split = Split::Val;
            val.push(e);
        }
    }
    Ok((Manifest { entries: train }, Manifest { entries: val }))
}

/// Hours and file counts grouped by category and by language.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryStats {
    pub hours_by_category: BTreeMap<ArtifactCategory, f64>,
    pub files_by_category: BTreeMap<ArtifactCategory, usize>,
    pub hours_by_language: BTreeMap<String, f64>,
    pub total_hours: f64,
    pub total_files: usize,
}

impl CategoryStats {
    pub fn genuine_hours(&self) -> f64 {
        self.hours_by_category
            .get(&ArtifactCategory::Genuine)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn fake_hours(&self) -> f64 {
        self.total_hours - self.genuine_hours()
    }
}

pub fn stats(m: &Manifest) -> CategoryStats {
    // Accumulate exact per-group second totals in a canonical order so the
    // result does not depend on entry order.
    let mut secs_by_category: BTreeMap<ArtifactCategory, Vec<f64>> = BTreeMap::new();
    let mut secs_by_language: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut files_by_category = BTreeMap::new();
    for e in &m.entries {
        secs_by_category.entry(e.category).or_default().push(e.duration_s);
        secs_by_language
            .entry(e.language.clone())
            .or_default()
            .push(e.duration_s);
        *files_by_category.entry(e.category).or_insert(0usize) += 1;
    }
    let hours = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / 3600.0
    };
    let hours_by_category: BTreeMap<_, _> = secs_by_category
        .into_iter()
        .map(|(k, v)| (k, hours(v)))
        .collect();
    let hours_by_language = secs_by_language
        .into_iter()
        .map(|(k, v)| (k, hours(v)))
        .collect();
    CategoryStats {
        total_hours: hours_by_category.values().sum(),
        hours_by_category,
        files_by_category,
        hours_by_language,
        total_files: m.len(),
    }
}
