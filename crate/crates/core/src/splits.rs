//! Nested leave-one-person-out plans.
//!
//! Every ordered pair of distinct signers `(test, val)` defines one section;
//! the remaining signers train. With `n` signers that is `n (n - 1)` sections.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::landmarks::{DatasetManifest, ManifestEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub section_id: usize,
    #[serde(rename = "test")]
    pub test_signer: String,
    #[serde(rename = "val")]
    pub val_signer: String,
    #[serde(rename = "train")]
    pub train_signers: Vec<String>,
}

/// The three disjoint sample lists of one section.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    /// Human-readable notes, e.g. a held-out signer without samples.
    pub warnings: Vec<String>,
}

/// All plans in (test, val) order, numbered from 0.
pub fn generate_splits_for(signers: &[String]) -> Result<Vec<SplitPlan>> {
    let sorted: BTreeSet<&String> = signers.iter().collect();
    if sorted.len() != signers.len() {
        return Err(Error::Argument("signer list contains duplicates".into()));
    }
    if sorted.len() < 2 {
        return Err(Error::Argument(format!(
            "leave-one-person-out needs at least 2 signers, got {}",
            sorted.len()
        )));
    }
    let mut plans = Vec::with_capacity(sorted.len() * (sorted.len() - 1));
    for &test in &sorted {
        for &val in &sorted {
            if test == val {
                continue;
            }
            plans.push(SplitPlan {
                section_id: plans.len(),
                test_signer: test.clone(),
                val_signer: val.clone(),
                train_signers: sorted
                    .iter()
                    .filter(|s| **s != test && **s != val)
                    .map(|s| (*s).clone())
                    .collect(),
            });
        }
    }
    Ok(plans)
}

pub fn generate_splits(manifest: &DatasetManifest) -> Result<Vec<SplitPlan>> {
    generate_splits_for(&manifest.signers)
}

pub fn materialize(plan: &SplitPlan, manifest: &DatasetManifest) -> Result<Partition> {
    let known: BTreeSet<&str> = manifest.signers.iter().map(String::as_str).collect();
    let named = std::iter::once(&plan.test_signer)
        .chain(std::iter::once(&plan.val_signer))
        .chain(plan.train_signers.iter());
    for s in named {
        if !known.contains(s.as_str()) {
            return Err(Error::Consistency(format!(
                "section {} names unknown signer `{s}`",
                plan.section_id
            )));
        }
    }
    let train: BTreeSet<&str> = plan.train_signers.iter().map(String::as_str).collect();
    if train.contains(plan.test_signer.as_str())
        || train.contains(plan.val_signer.as_str())
        || plan.test_signer == plan.val_signer
    {
        return Err(Error::Consistency(format!(
            "section {} reuses a signer across roles",
            plan.section_id
        )));
    }
    let mut part = Partition::default();
    for s in &manifest.samples {
        if s.signer == plan.test_signer {
            part.test.push(s.clone());
        } else if s.signer == plan.val_signer {
            part.val.push(s.clone());
        } else if train.contains(s.signer.as_str()) {
            part.train.push(s.clone());
        } else {
            return Err(Error::Consistency(format!(
                "sample {} belongs to no role in section {}",
                s.id(),
                plan.section_id
            )));
        }
    }
    for (name, list) in [("train", &part.train), ("val", &part.val), ("test", &part.test)] {
        if list.is_empty() {
            let msg = format!("section {}: {name} set is empty", plan.section_id);
            log::warn!("{msg}");
            part.warnings.push(msg);
        }
    }
    Ok(part)
}
