//! Run manifest written next to a trained model: the configuration echo,
//! split and data provenance, and the full loss history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use jointdx_core::trainer::TrainHistory;

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDoc {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_kind: String,
    pub data: String,
    pub split_seed: u64,
    pub n_train_instances: usize,
    pub n_val_instances: usize,
    pub n_test_instances: usize,
    /// Every configuration key with its value as written in a config file.
    pub config: BTreeMap<String, String>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub stopped_early: bool,
    pub history: Vec<EpochDoc>,
}

pub struct ManifestInputs<'a> {
    pub model_kind: &'a str,
    pub data: &'a str,
    pub split_seed: u64,
    pub sizes: [usize; 3],
    pub config: &'a RunConfig,
}

impl RunManifest {
    pub fn new(inputs: ManifestInputs<'_>, history: &TrainHistory) -> Self {
        let last = history.epochs.last().expect("training runs at least one epoch");
        RunManifest {
            model_kind: inputs.model_kind.to_string(),
            data: inputs.data.to_string(),
            split_seed: inputs.split_seed,
            n_train_instances: inputs.sizes[0],
            n_val_instances: inputs.sizes[1],
            n_test_instances: inputs.sizes[2],
            config: inputs
                .config
                .pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            best_epoch: history.best_epoch,
            best_val_loss: history.best_val_loss,
            final_train_loss: last.train_loss,
            final_val_loss: last.val_loss,
            stopped_early: history.stopped_early,
            history: history
                .epochs
                .iter()
                .map(|e| EpochDoc {
                    epoch: e.epoch,
                    train_loss: e.train_loss,
                    val_loss: e.val_loss,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest always serializes") + "\n"
    }
}
