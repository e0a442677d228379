//! Probe-suite derivation and paired-unit generation from single-image pools.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DerivedTest, GtPairing, Manifest, McItem, NbUnit, Subtest};
use crate::par;

/// One MC probe over all choices, then one yes/no probe per choice in index order.
pub fn derive_mc_suite(item: &McItem) -> Result<Vec<DerivedTest>> {
    if let Some(rule) = item.violations().into_iter().next() {
        return Err(Error::Derivation {
            sample_id: item.id.clone(),
            rule,
        });
    }
    let k = item.num_choices();
    let mut tests = Vec::with_capacity(k + 1);
    tests.push(DerivedTest::new(&item.id, Subtest::McMain, k));
    tests.extend((0..k).map(|c| DerivedTest::new(&item.id, Subtest::YnChoice(c), 1)));
    Ok(tests)
}

/// The four image-text yes/no probes followed by the four two-way MC subtests a-d.
pub const NB_SUBTESTS: [Subtest; 8] = [
    Subtest::NbYn(1, 1),
    Subtest::NbYn(1, 2),
    Subtest::NbYn(2, 1),
    Subtest::NbYn(2, 2),
    Subtest::NbA,
    Subtest::NbB,
    Subtest::NbC,
    Subtest::NbD,
];

pub fn derive_nb_suite(unit: &NbUnit) -> Result<Vec<DerivedTest>> {
    if let Some(rule) = unit.violations().into_iter().next() {
        return Err(Error::Derivation {
            sample_id: unit.id.clone(),
            rule,
        });
    }
    Ok(NB_SUBTESTS
        .iter()
        .map(|&s| {
            let arity = if matches!(s, Subtest::NbYn(..)) { 1 } else { 2 };
            DerivedTest::new(&unit.id, s, arity)
        })
        .collect())
}

/// Derive every probe of a manifest, preserving manifest order.
pub fn derive_manifest(manifest: &Manifest) -> Result<Vec<DerivedTest>> {
    let suites = match manifest {
        Manifest::Mc(items) => par::map(items, derive_mc_suite),
        Manifest::Nb(units) => par::map(units, derive_nb_suite),
    };
    let mut out = Vec::new();
    for suite in suites {
        out.extend(suite?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    McPairs,
    TfPairs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub pairs_per_category: usize,
    pub seed: u64,
    pub mode: PairingMode,
    /// Upper bound on candidate draws per category.
    pub max_attempts: usize,
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(Error::Pairing {
                category: String::new(),
                reason,
            })
        };
        if self.pairs_per_category < 1 {
            return bad("pairs_per_category must be at least 1".into());
        }
        if self.max_attempts < self.pairs_per_category {
            return bad(format!(
                "max_attempts ({}) must be at least pairs_per_category ({})",
                self.max_attempts, self.pairs_per_category
            ));
        }
        Ok(())
    }
}

/// One true/false pool entry: an image, a question, and its yes/no ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfItem {
    pub id: String,
    pub image: String,
    pub question: String,
    pub gt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Two MC items pair when their images differ and their ground-truth answer texts differ.
pub fn mc_pair_retained(a: &McItem, b: &McItem) -> bool {
    match (a.gt_answer(), b.gt_answer()) {
        (Some(x), Some(y)) => a.image != b.image && x != y,
        _ => false,
    }
}

/// Two true/false items pair when images and questions differ and both answers are yes.
pub fn tf_pair_retained(a: &TfItem, b: &TfItem) -> bool {
    a.image != b.image && a.question != b.question && a.gt && b.gt
}

/// Statement an MC item contributes to a paired unit: its question with its correct answer.
pub fn mc_statement(item: &McItem) -> String {
    format!(
        "{} Answer: {}",
        item.question.trim(),
        item.gt_answer().unwrap_or_default().trim()
    )
}

fn mc_unit(a: &McItem, b: &McItem) -> NbUnit {
    NbUnit {
        id: format!("{}+{}", a.id, b.id),
        images: [a.image.clone(), b.image.clone()],
        texts: [mc_statement(a), mc_statement(b)],
        gt_pairing: Some(GtPairing::Straight),
        category: a.category.clone(),
    }
}

fn tf_unit(a: &TfItem, b: &TfItem) -> NbUnit {
    NbUnit {
        id: format!("{}+{}", a.id, b.id),
        images: [a.image.clone(), b.image.clone()],
        texts: [a.question.clone(), b.question.clone()],
        gt_pairing: Some(GtPairing::Straight),
        category: a.category.clone(),
    }
}

/// Seed for one key (a category or sample id): the run seed xor the first 8 bytes of SHA-256(key).
pub fn keyed_seed(seed: u64, key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

/// Rejection-sample `cfg.pairs_per_category` pairs without replacement from one category.
fn pair_category<T>(
    category: &str,
    items: &[&T],
    cfg: &PairingConfig,
    retained: impl Fn(&T, &T) -> bool,
    build: impl Fn(&T, &T) -> NbUnit,
) -> Result<Vec<NbUnit>> {
    let fail = |reason: String| Error::Pairing {
        category: category.to_string(),
        reason,
    };
    if items.len() < 2 {
        return Err(fail(format!(
            "fewer than 2 eligible items ({})",
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed(cfg.seed, category));
    let mut available: Vec<usize> = (0..items.len()).collect();
    let mut units = Vec::with_capacity(cfg.pairs_per_category);
    let mut attempts = 0;
    while units.len() < cfg.pairs_per_category {
        if available.len() < 2 {
            return Err(fail(format!(
                "pool exhausted after {} of {} pairs",
                units.len(),
                cfg.pairs_per_category
            )));
        }
        if attempts == cfg.max_attempts {
            return Err(fail(format!(
                "max_attempts ({}) exhausted after {} of {} pairs",
                cfg.max_attempts,
                units.len(),
                cfg.pairs_per_category
            )));
        }
        attempts += 1;
        let i = rng.random_range(0..available.len());
        let mut j = rng.random_range(0..available.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (items[available[i]], items[available[j]]);
        if !retained(a, b) {
            continue;
        }
        let unit = build(a, b);
        if !unit.violations().is_empty() {
            continue;
        }
        units.push(unit);
        available.swap_remove(i.max(j));
        available.swap_remove(i.min(j));
    }
    Ok(units)
}

fn group_by_category<T>(
    pool: &[T],
    category: impl Fn(&T) -> Option<&String>,
    id: impl Fn(&T) -> &str,
) -> Result<BTreeMap<&str, Vec<&T>>> {
    let mut groups: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for item in pool {
        let cat = category(item).ok_or_else(|| Error::Pairing {
            category: String::new(),
            reason: format!("item {:?} has no category", id(item)),
        })?;
        groups.entry(cat.as_str()).or_default().push(item);
    }
    Ok(groups)
}

fn run_categories<T: Sync>(
    groups: BTreeMap<&str, Vec<&T>>,
    cfg: &PairingConfig,
    retained: impl Fn(&T, &T) -> bool + Sync + Send,
    build: impl Fn(&T, &T) -> NbUnit + Sync + Send,
) -> Result<Vec<NbUnit>> {
    let groups: Vec<(&str, Vec<&T>)> = groups.into_iter().collect();
    let results = par::map(&groups, |(cat, items)| {
        pair_category(cat, items, cfg, &retained, &build)
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Build paired units from a pool of annotated MC items, category by category (sorted by name).
pub fn pair_natconbench_mc(pool: &[McItem], cfg: &PairingConfig) -> Result<Vec<NbUnit>> {
    cfg.validate()?;
    if cfg.mode != PairingMode::McPairs {
        return Err(Error::Pairing {
            category: String::new(),
            reason: "config mode must be mc_pairs".into(),
        });
    }
    for item in pool {
        let reason = match item.violations().into_iter().next() {
            Some(rule) => rule,
            None if item.gt_index.is_none() => "gt_index required for pairing".into(),
            None => continue,
        };
        return Err(Error::Pairing {
            category: item.category.clone().unwrap_or_default(),
            reason: format!("item {:?}: {reason}", item.id),
        });
    }
    let groups = group_by_category(pool, |i| i.category.as_ref(), |i| &i.id)?;
    run_categories(groups, cfg, mc_pair_retained, mc_unit)
}

/// Build paired units from a pool of true/false items. Only yes-answered items are eligible.
pub fn pair_natconbench_tf(pool: &[TfItem], cfg: &PairingConfig) -> Result<Vec<NbUnit>> {
    cfg.validate()?;
    if cfg.mode != PairingMode::TfPairs {
        return Err(Error::Pairing {
            category: String::new(),
            reason: "config mode must be tf_pairs".into(),
        });
    }
    let mut groups = group_by_category(pool, |i| i.category.as_ref(), |i| &i.id)?;
    for items in groups.values_mut() {
        items.retain(|i| i.gt);
    }
    run_categories(groups, cfg, tf_pair_retained, tf_unit)
}
