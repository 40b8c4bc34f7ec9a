//! Persistent look-up table of per-character averaged W+ codes.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::ImageTensor;
use crate::inversion::{project, LatentSpace, ProjectionConfig};
use crate::latent::WPlusCode;
use crate::latent_ops::average_wplus;
use crate::weights::GeneratorWeights;

const BANK_VERSION: u32 = 1;

/// Mapping from character ID to its averaged W+ code, pinned to one generator
/// by fingerprint. Write-once, then read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterBank {
    pub version: u32,
    /// Number of images averaged per ID.
    pub k: usize,
    /// Seed that drove the per-ID image sampling.
    pub seed: u64,
    pub generator_fingerprint: String,
    codes: BTreeMap<String, WPlusCode>,
}

impl CharacterBank {
    pub fn ids(&self) -> Vec<String> {
        self.codes.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Looks up a stored code.
    pub fn query(&self, id: &str) -> Result<&WPlusCode> {
        self.codes.get(id).ok_or_else(|| Error::UnknownCharacterId {
            id: id.to_string(),
            available: self.ids(),
        })
    }

    /// Refuses when the bank was built against different weights.
    pub fn verify_fingerprint(&self, weights: &GeneratorWeights) -> Result<()> {
        let actual = crate::archive::fingerprint(weights);
        if actual != self.generator_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.generator_fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Fingerprint-checked lookup.
    pub fn query_checked(&self, id: &str, weights: &GeneratorWeights) -> Result<&WPlusCode> {
        self.verify_fingerprint(weights)?;
        self.query(id)
    }

    /// Versioned JSON document; floats survive the text round trip bit-exactly.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<CharacterBank> {
        let bank: CharacterBank = serde_json::from_slice(bytes)?;
        if bank.version != BANK_VERSION {
            return Err(Error::Archive(format!(
                "unsupported bank version {}",
                bank.version
            )));
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CharacterBank> {
        Self::from_json_bytes(&std::fs::read(path)?)
    }
}

/// Build output: the bank plus the per-image codes that went into each mean.
#[derive(Debug)]
pub struct BankBuild {
    pub bank: CharacterBank,
    /// Per ID, the projected codes in selection order.
    pub per_image_codes: BTreeMap<String, Vec<WPlusCode>>,
}

/// Projects `k` sampled images per character ID into W+ and stores the mean.
///
/// The dataset is taken in the order given (callers that read from disk sort
/// by filename first); when an ID has more than `k` images the subset is drawn
/// with `bank_seed`, one ID at a time in sorted-ID order. Projections of
/// different images run in parallel; each is internally sequential, so the
/// result does not depend on thread count.
pub fn build_character_bank(
    weights_swapped: &GeneratorWeights,
    dataset: &[(String, ImageTensor)],
    k: usize,
    cfg: &ProjectionConfig,
    bank_seed: u64,
) -> Result<BankBuild> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let cfg = ProjectionConfig {
        space: LatentSpace::WPlus,
        ..cfg.clone()
    };

    let mut by_id: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, (id, _)) in dataset.iter().enumerate() {
        by_id.entry(id.clone()).or_default().push(i);
    }
    let deficits: Vec<(String, usize)> = by_id
        .iter()
        .filter(|(_, v)| v.len() < k)
        .map(|(id, v)| (id.clone(), k - v.len()))
        .collect();
    if !deficits.is_empty() {
        return Err(Error::BankDeficit { k, deficits });
    }

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(bank_seed);
    let mut jobs: Vec<(String, usize)> = Vec::new();
    for (id, indices) in &by_id {
        let selected: Vec<usize> = if indices.len() == k {
            indices.clone()
        } else {
            let mut shuffled = indices.clone();
            shuffled.shuffle(&mut rng);
            let mut s: Vec<usize> = shuffled.into_iter().take(k).collect();
            s.sort_unstable();
            s
        };
        for idx in selected {
            jobs.push((id.clone(), idx));
        }
    }

    let projected: Vec<Result<WPlusCode>> = jobs
        .par_iter()
        .map(|(_, idx)| Ok(project(weights_swapped, &dataset[*idx].1, &cfg)?.code))
        .collect();

    let mut per_image_codes: BTreeMap<String, Vec<WPlusCode>> = BTreeMap::new();
    for ((id, _), code) in jobs.into_iter().zip(projected) {
        per_image_codes.entry(id).or_default().push(code?);
    }

    let mut codes = BTreeMap::new();
    for (id, list) in &per_image_codes {
        codes.insert(id.clone(), average_wplus(list)?);
    }

    Ok(BankBuild {
        bank: CharacterBank {
            version: BANK_VERSION,
            k,
            seed: bank_seed,
            generator_fingerprint: crate::archive::fingerprint(weights_swapped),
            codes,
        },
        per_image_codes,
    })
}
