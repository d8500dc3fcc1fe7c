//! Patient records, dummy coding, supervised instance extraction and
//! patient-level train/validation/test splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::decoder::JointTarget;
use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::tensor::Vector;

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    Binary,
    Categorical { levels: usize },
    Real,
}

impl FeatureKind {
    /// Number of columns this feature occupies after dummy coding.
    pub fn width(&self) -> usize {
        match self {
            FeatureKind::Binary | FeatureKind::Real => 1,
            FeatureKind::Categorical { levels } => *levels,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        FeatureSpec {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RawValue {
    Binary(bool),
    Level(usize),
    Real(f64),
}

pub fn coded_width(schema: &[FeatureSpec]) -> usize {
    schema.iter().map(|f| f.kind.width()).sum()
}

/// Full indicator coding: binaries stay one column, a categorical with `L`
/// levels becomes `L` one-hot columns, reals pass through.
pub fn dummy_code(schema: &[FeatureSpec], raw: &[RawValue]) -> Result<Vector> {
    if schema.len() != raw.len() {
        return Err(Error::Validation(format!(
            "schema has {} features, got {} values",
            schema.len(),
            raw.len()
        )));
    }
    let mut out = Vec::with_capacity(coded_width(schema));
    for (spec, value) in schema.iter().zip(raw) {
        match (&spec.kind, *value) {
            (FeatureKind::Binary, RawValue::Binary(b)) => out.push(if b { 1.0 } else { 0.0 }),
            (FeatureKind::Real, RawValue::Real(x)) => out.push(x),
            (FeatureKind::Categorical { levels }, RawValue::Level(l)) => {
                if l >= *levels {
                    return Err(Error::Validation(format!(
                        "unknown level {l} for feature '{}' ({levels} levels)",
                        spec.name
                    )));
                }
                out.extend((0..*levels).map(|i| if i == l { 1.0 } else { 0.0 }));
            }
            (kind, v) => {
                return Err(Error::Validation(format!(
                    "feature '{}' of kind {kind:?} cannot take {v:?}",
                    spec.name
                )))
            }
        }
    }
    Ok(out.into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: u32,
    pub features: Vector,
    pub decision: Option<JointTarget>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub static_features: Vector,
    pub events: Vec<Event>,
}

impl PatientRecord {
    /// Checks dimensions, binary event features and strictly increasing
    /// time indices.
    pub fn validate(&self, static_dim: usize, event_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("patient '{}': {msg}", self.id)));
        if self.static_features.len() != static_dim {
            return bad(format!(
                "static vector has {} entries, expected {static_dim}",
                self.static_features.len()
            ));
        }
        if self.events.is_empty() {
            return bad("no events".into());
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.features.len() != event_dim {
                return bad(format!(
                    "event t={} has {} features, expected {event_dim}",
                    e.t,
                    e.features.len()
                ));
            }
            if e.features.iter().any(|&v| v != 0.0 && v != 1.0) {
                return bad(format!("event t={} has non-binary features", e.t));
            }
            if i > 0 && self.events[i - 1].t >= e.t {
                return bad(format!("event times not increasing at t={}", e.t));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Provenance {
    pub patient: String,
    pub t: u32,
}

/// One supervised example: the history strictly before a decision event,
/// the static vector, and the documented decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub history: Vec<Vector>,
    pub static_features: Vector,
    pub target: JointTarget,
    pub provenance: Provenance,
}

/// One instance per decision-bearing event.
pub fn extract_instances(p: &PatientRecord) -> Vec<Instance> {
    p.events
        .iter()
        .enumerate()
        .filter_map(|(pos, e)| {
            e.decision.map(|target| Instance {
                history: p.events[..pos].iter().map(|h| h.features.clone()).collect(),
                static_features: p.static_features.clone(),
                target,
                provenance: Provenance {
                    patient: p.id.clone(),
                    t: e.t,
                },
            })
        })
        .collect()
}

/// Builds the instance for the event at time `t` of a patient even when the
/// event carries no decision; `None` if there is no such event.
pub fn instance_at(p: &PatientRecord, t: u32) -> Option<(Vec<Vector>, Option<JointTarget>)> {
    let pos = p.events.iter().position(|e| e.t == t)?;
    let history = p.events[..pos].iter().map(|h| h.features.clone()).collect();
    Some((history, p.events[pos].decision))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub split_id: usize,
    pub seed: u64,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

impl SplitPlan {
    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        if self.train_ids.contains(id) {
            Some(Partition::Train)
        } else if self.val_ids.contains(id) {
            Some(Partition::Validation)
        } else if self.test_ids.contains(id) {
            Some(Partition::Test)
        } else {
            None
        }
    }

    /// Instances of every record in `part`, in corpus order.
    pub fn instances(&self, records: &[PatientRecord], part: Partition) -> Vec<Instance> {
        records
            .iter()
            .filter(|r| self.partition_of(&r.id) == Some(part))
            .flat_map(extract_instances)
            .collect()
    }
}

pub const MIN_SPLIT_PATIENTS: usize = 10;

/// `n_splits` independent patient shuffles (seeded `seed + split_id`), each
/// cut 64/16/20 into train/validation/test.
pub fn make_splits(ids: &[String], n_splits: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if ids.len() < MIN_SPLIT_PATIENTS {
        return Err(Error::Validation(format!(
            "need at least {MIN_SPLIT_PATIENTS} patients to split, got {}",
            ids.len()
        )));
    }
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::Validation("duplicate patient ids".into()));
    }
    if n_splits == 0 {
        return Err(Error::Validation("n_splits must be positive".into()));
    }
    let n = ids.len();
    let n_test = libm::round(n as f64 * 0.2) as usize;
    let n_val = libm::round(n as f64 * 0.16) as usize;
    Ok((0..n_splits)
        .map(|split_id| {
            let split_seed = seed.wrapping_add(split_id as u64);
            let mut shuffled = ids.to_vec();
            shuffled.shuffle(&mut seeded_rng(split_seed));
            let test_ids = shuffled[..n_test].iter().cloned().collect();
            let val_ids = shuffled[n_test..n_test + n_val].iter().cloned().collect();
            let train_ids = shuffled[n_test + n_val..].iter().cloned().collect();
            SplitPlan {
                split_id,
                seed: split_seed,
                train_ids,
                val_ids,
                test_ids,
            }
        })
        .collect())
}
