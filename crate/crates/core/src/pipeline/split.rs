use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    /// One tag per manifest entry, in manifest order.
    pub tags: Vec<Split>,
}

impl SplitAssignment {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.tags.len()).filter(|&i| self.tags[i] == split).collect()
    }

    /// (train, val, test) sizes.
    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |s| self.tags.iter().filter(|t| **t == s).count();
        (n(Split::Train), n(Split::Val), n(Split::Test))
    }

    /// Tags given in the manifest itself, if any.
    pub fn from_manifest(manifest: &DatasetManifest) -> Option<Self> {
        let tags: Option<Vec<Split>> = manifest.entries.iter().map(|e| e.split).collect();
        tags.filter(|t| !t.is_empty()).map(|tags| Self { seed: 0, tags })
    }
}

/// Share `total` among classes in proportion to `sizes` by largest
/// remainder; equal remainders go to the lower class id.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let mut out: Vec<usize> = sizes.iter().map(|&s| total * s / sum).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Remainder numerators are exact integers: total*s mod sum.
    order.sort_by_key(|&c| std::cmp::Reverse(total * sizes[c] % sum));
    for c in order {
        if left == 0 {
            break;
        }
        out[c] += 1;
        left -= 1;
    }
    out
}

/// Stratified 90/10 train/test split, then 10% of the remaining train
/// models held out for validation.
pub fn split_dataset(manifest: &DatasetManifest, seed: u64) -> Result<SplitAssignment, PipelineError> {
    manifest.validate()?;
    let c = manifest.num_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, e) in manifest.entries.iter().enumerate() {
        members[e.class_id].push(i);
    }
    if let Some((class_id, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 3) {
        return Err(PipelineError::ClassTooSmall {
            class_id,
            count: m.len(),
        });
    }
    let n = manifest.entries.len();
    let test_total = (0.1 * n as f64).round() as usize;
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let test = apportion(test_total, &sizes);
    let rest: Vec<usize> = sizes.iter().zip(&test).map(|(s, t)| s - t).collect();
    let val_total = (0.1 * (n - test_total) as f64).round() as usize;
    let val = apportion(val_total, &rest);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tags = vec![Split::Train; n];
    for (k, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut rng);
        for &i in &m[..test[k]] {
            tags[i] = Split::Test;
        }
        for &i in &m[test[k]..test[k] + val[k]] {
            tags[i] = Split::Val;
        }
    }
    Ok(SplitAssignment { seed, tags })
}
