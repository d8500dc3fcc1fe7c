//! Synthetic patient corpus with two correlated decision targets.
//!
//! Each patient belongs to one of three latent classes. The class shapes the
//! static record, the event features and the intention distribution; the
//! therapy type follows the intention through a fixed map with probability
//! `coupling` and is uniform otherwise.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::{coded_width, dummy_code, Event, FeatureKind, FeatureSpec, PatientRecord, RawValue};
use crate::decoder::{JointTarget, N_CLASSES};
use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::tensor::Vector;

pub const N_LATENT_CLASSES: usize = 3;
pub const MAX_EVENTS: usize = 23;
pub const MEAN_EXTRA_EVENTS: f64 = 4.0;
pub const DECISION_RATE: f64 = 0.4;
/// Coupled type for each intention.
pub const TYPE_FOR_INTENTION: [usize; N_CLASSES] = [0, 2, 1];
/// `P(intention | latent class)`.
pub const INTENTION_GIVEN_CLASS: [[f64; N_CLASSES]; N_LATENT_CLASSES] = [
    [0.60, 0.25, 0.15],
    [0.15, 0.60, 0.25],
    [0.25, 0.15, 0.60],
];
/// Event slots reserved at the end of each event vector for the one-hot
/// intention and type of that event's own decision.
pub const DECISION_SLOTS: usize = 2 * N_CLASSES;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticShape {
    pub static_schema: Vec<FeatureSpec>,
    pub event_dim: usize,
}

impl SyntheticShape {
    /// 26 raw static features coding to 114 columns, 182 event columns.
    pub fn reference() -> Self {
        let mut schema = Vec::with_capacity(26);
        for i in 0..10 {
            schema.push(FeatureSpec::new(format!("flag_{i}"), FeatureKind::Binary));
        }
        for i in 0..12 {
            schema.push(FeatureSpec::new(format!("cat7_{i}"), FeatureKind::Categorical { levels: 7 }));
        }
        for i in 0..2 {
            schema.push(FeatureSpec::new(format!("cat9_{i}"), FeatureKind::Categorical { levels: 9 }));
        }
        schema.push(FeatureSpec::new("age", FeatureKind::Real));
        schema.push(FeatureSpec::new("bmi", FeatureKind::Real));
        SyntheticShape {
            static_schema: schema,
            event_dim: 182,
        }
    }

    /// All-binary static schema of the given width.
    pub fn small(static_dim: usize, event_dim: usize) -> Self {
        SyntheticShape {
            static_schema: (0..static_dim)
                .map(|i| FeatureSpec::new(format!("flag_{i}"), FeatureKind::Binary))
                .collect(),
            event_dim,
        }
    }

    pub fn static_dim(&self) -> usize {
        coded_width(&self.static_schema)
    }

    fn free_event_slots(&self) -> usize {
        if self.event_dim >= 2 * DECISION_SLOTS {
            self.event_dim - DECISION_SLOTS
        } else {
            self.event_dim
        }
    }
}

enum Profile {
    Binary([f64; N_LATENT_CLASSES]),
    Categorical([Vec<f64>; N_LATENT_CLASSES]),
    Real([f64; N_LATENT_CLASSES]),
}

fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Generates `n_patients` records named `P00000`, `P00001`, ...
pub fn generate_synthetic(
    n_patients: usize,
    coupling: f64,
    seed: u64,
    shape: &SyntheticShape,
) -> Result<Vec<PatientRecord>> {
    if n_patients == 0 {
        return Err(Error::Validation("n_patients must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&coupling) {
        return Err(Error::Validation(format!("coupling must be in [0, 1], got {coupling}")));
    }
    let mut rng = seeded_rng(seed);

    let static_profiles: Vec<Profile> = shape
        .static_schema
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Binary => Profile::Binary(core::array::from_fn(|_| rng.random_range(0.1..0.9))),
            FeatureKind::Categorical { levels } => Profile::Categorical(core::array::from_fn(|_| {
                (0..levels)
                    .map(|_| {
                        let u: f64 = rng.random();
                        0.05 + u * u
                    })
                    .collect()
            })),
            FeatureKind::Real => Profile::Real(core::array::from_fn(|_| rng.random_range(-1.0..1.0))),
        })
        .collect();
    let free = shape.free_event_slots();
    let event_profiles: Vec<[f64; N_LATENT_CLASSES]> = (0..free)
        .map(|_| {
            core::array::from_fn(|_| {
                let u: f64 = rng.random();
                0.02 + 0.25 * u * u
            })
        })
        .collect();

    let extra_events = Poisson::new(MEAN_EXTRA_EVENTS).expect("positive rate");
    let unit_normal = Normal::new(0.0, 1.0).expect("positive sd");

    let mut records = Vec::with_capacity(n_patients);
    for i in 0..n_patients {
        let class = rng.random_range(0..N_LATENT_CLASSES);
        let raw: Vec<RawValue> = static_profiles
            .iter()
            .map(|p| match p {
                Profile::Binary(probs) => RawValue::Binary(rng.random_bool(probs[class])),
                Profile::Categorical(w) => RawValue::Level(sample_categorical(&w[class], &mut rng)),
                Profile::Real(means) => RawValue::Real(means[class] + unit_normal.sample(&mut rng)),
            })
            .collect();
        let static_features = dummy_code(&shape.static_schema, &raw)?;

        let n_events = (1 + extra_events.sample(&mut rng) as usize).min(MAX_EVENTS);
        let events = (0..n_events)
            .map(|e| {
                let mut features = Vector::zeros(shape.event_dim);
                for (slot, probs) in event_profiles.iter().enumerate() {
                    if rng.random_bool(probs[class]) {
                        features[slot] = 1.0;
                    }
                }
                let decision = if rng.random_bool(DECISION_RATE) {
                    let j = sample_categorical(&INTENTION_GIVEN_CLASS[class], &mut rng);
                    let k = if rng.random_bool(coupling) {
                        TYPE_FOR_INTENTION[j]
                    } else {
                        rng.random_range(0..N_CLASSES)
                    };
                    if free < shape.event_dim {
                        features[free + j] = 1.0;
                        features[free + N_CLASSES + k] = 1.0;
                    }
                    Some(JointTarget::new(j, k).expect("classes in range"))
                } else {
                    None
                };
                Event {
                    t: e as u32 + 1,
                    features,
                    decision,
                }
            })
            .collect();
        records.push(PatientRecord {
            id: format!("P{i:05}"),
            static_features,
            events,
        });
    }
    Ok(records)
}
