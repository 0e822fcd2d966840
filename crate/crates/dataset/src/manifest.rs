use std::path::{Path, PathBuf};

use degradation::EvolutionSequence;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use voxel_core::{largest_component_fraction, Connectivity, MINERAL};

use crate::{read_evolution, DatasetError, Result};

/// Minimum clustering of the mineral phase for a sequence to be usable.
pub const QUALITY_THRESHOLD: f64 = 0.95;
/// Bins thinner than this get merged into a neighbor.
const MIN_BIN_ENTRIES: usize = 3;
const TEST_FRACTION: f64 = 0.10;
const VAL_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One dataset entry: where the file lives and how it is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub file: String,
    /// Initial mineral volume fraction.
    pub vf: f64,
    /// Volume-fraction bin index into `bin_edges`.
    pub bin: usize,
    pub split: Split,
    pub timesteps: u32,
}

/// Deterministic description of a curated dataset: quality-filtered files,
/// volume-fraction bins and a stratified train/val/test assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split_seed: u64,
    /// Monotone bin boundaries; bin `i` covers `[edges[i], edges[i+1])`.
    pub bin_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

/// Volume-fraction binning rule for [`build_manifest`].
#[derive(Debug, Clone)]
pub enum BinSpec {
    /// Equal-width bins of the given width spanning the observed range.
    Width(f64),
    /// Explicit monotone edges.
    Edges(Vec<f64>),
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec::Width(0.05)
    }
}

impl DatasetManifest {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_entries(split).count()
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len().saturating_sub(1).max(1)
    }
}

/// True when the first frame's mineral phase is at least 95% contained in
/// one connected component. An empty mineral phase is unusable.
pub fn quality_filter(seq: &EvolutionSequence) -> bool {
    let frame0 = &seq.frames[0];
    if frame0.count_phase(MINERAL) == 0 {
        return false;
    }
    largest_component_fraction(frame0, MINERAL, Connectivity::Face6)
        .map(|f| f > QUALITY_THRESHOLD)
        .unwrap_or(false)
}

/// Bin index of `vf` under monotone `edges`, clamped to the outer bins.
pub fn bin_index(vf: f64, edges: &[f64]) -> usize {
    if edges.len() < 2 {
        return 0;
    }
    let n_bins = edges.len() - 1;
    let mut bin = 0usize;
    for i in 0..n_bins {
        if vf >= edges[i] {
            bin = i;
        }
    }
    bin
}

/// Largest-remainder apportionment of `target` picks across bins with the
/// given counts. Ties go to lower bin indices.
fn apportion(counts: &[usize], target: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 || target == 0 {
        return vec![0; counts.len()];
    }
    let target = target.min(total);
    let mut takes: Vec<usize> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(counts.len());
    let mut assigned = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        let quota = target as f64 * c as f64 / total as f64;
        let take = (quota.floor() as usize).min(c);
        takes.push(take);
        assigned += take;
        remainders.push((i, quota - take as f64));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut left = target - assigned;
    for &(i, _) in remainders.iter().cycle() {
        if left == 0 {
            break;
        }
        if takes[i] < counts[i] {
            takes[i] += 1;
            left -= 1;
        }
    }
    takes
}

/// Builds a manifest from evolution files: applies the quality filter,
/// assigns volume-fraction bins (merging bins with fewer than 3 entries
/// into a neighbor), and splits entries 10% test then 15% val of the
/// remainder, stratified by bin. Deterministic given `split_seed`.
///
/// Returns the manifest and the list of rejected files with reasons.
pub fn build_manifest(
    files: &[PathBuf],
    bins: BinSpec,
    split_seed: u64,
) -> Result<(DatasetManifest, Vec<(PathBuf, String)>)> {
    let mut rejected = Vec::new();
    let mut warnings = Vec::new();
    let mut raw: Vec<(u64, String, f64, u32)> = Vec::new();

    for (index, path) in files.iter().enumerate() {
        let seq = match read_evolution(path) {
            Ok(seq) => seq,
            Err(e) => {
                rejected.push((path.clone(), e.to_string()));
                continue;
            }
        };
        if !quality_filter(&seq) {
            rejected.push((path.clone(), "failed quality filter".into()));
            continue;
        }
        let vf = seq.frames[0].volume_fraction(MINERAL)?;
        let id = id_from_path(path).unwrap_or(index as u64);
        raw.push((id, path.to_string_lossy().into_owned(), vf, seq.n_timesteps() as u32));
    }

    if raw.is_empty() {
        return Err(DatasetError::NoUsableFiles);
    }
    if raw.len() < 10 {
        warnings.push(format!(
            "only {} usable files; splits will be coarse",
            raw.len()
        ));
    }

    let mut edges = match bins {
        BinSpec::Edges(e) => e,
        BinSpec::Width(w) => {
            assert!(w > 0.0, "bin width must be positive");
            let lo = raw.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
            let first = (lo / w).floor() * w;
            let mut edges = vec![first];
            while *edges.last().unwrap() <= hi {
                let next = edges.last().unwrap() + w;
                edges.push(next);
            }
            edges
        }
    };
    assert!(edges.len() >= 2, "need at least two bin edges");

    let mut bins_of: Vec<usize> = raw.iter().map(|r| bin_index(r.2, &edges)).collect();

    // Merge thin bins into a neighbor until all have enough entries.
    loop {
        let n_bins = edges.len() - 1;
        if n_bins <= 1 {
            break;
        }
        let mut counts = vec![0usize; n_bins];
        for &b in &bins_of {
            counts[b] += 1;
        }
        let Some(thin) = counts.iter().position(|&c| c < MIN_BIN_ENTRIES) else {
            break;
        };
        let boundary = if thin == 0 { 1 } else { thin };
        warnings.push(format!(
            "bin [{:.3}, {:.3}) has {} entries; merged with neighbor",
            edges[thin],
            edges[thin + 1],
            counts[thin]
        ));
        edges.remove(boundary);
        for (b, r) in bins_of.iter_mut().zip(raw.iter()) {
            *b = bin_index(r.2, &edges);
        }
    }

    // Stratified split: shuffle ids within each bin, then apportion the
    // global test/val targets across bins by largest remainder.
    let n_bins = edges.len() - 1;
    let mut per_bin: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &b) in bins_of.iter().enumerate() {
        per_bin[b].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    for members in per_bin.iter_mut() {
        members.shuffle(&mut rng);
    }

    let total = raw.len();
    let counts: Vec<usize> = per_bin.iter().map(Vec::len).collect();
    let test_total = (total as f64 * TEST_FRACTION).round() as usize;
    let test_takes = apportion(&counts, test_total);

    let remaining: Vec<usize> = counts
        .iter()
        .zip(&test_takes)
        .map(|(&c, &t)| c - t)
        .collect();
    let val_total =
        ((total - test_total) as f64 * VAL_FRACTION).round() as usize;
    let val_takes = apportion(&remaining, val_total);

    let mut split_of = vec![Split::Train; total];
    for (b, members) in per_bin.iter().enumerate() {
        for (rank, &i) in members.iter().enumerate() {
            split_of[i] = if rank < test_takes[b] {
                Split::Test
            } else if rank < test_takes[b] + val_takes[b] {
                Split::Val
            } else {
                Split::Train
            };
        }
    }

    let entries = raw
        .into_iter()
        .zip(bins_of)
        .zip(split_of)
        .map(|(((id, file, vf, timesteps), bin), split)| ManifestEntry {
            id,
            file,
            vf,
            bin,
            split,
            timesteps,
        })
        .collect();

    Ok((
        DatasetManifest {
            split_seed,
            bin_edges: edges,
            warnings,
            entries,
        },
        rejected,
    ))
}

fn id_from_path(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    digits.parse().ok()
}
