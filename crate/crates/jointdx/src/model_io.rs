//! Self-describing JSON model document: format version, model kind, the
//! dimension constants and every parameter array by name.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use jointdx_core::trainer::{ModelDims, ModelKind, ModelParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("model document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model document: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsDoc {
    pub input_dim: usize,
    pub static_dim: usize,
    pub hidden_dim: usize,
    pub static_latent: usize,
    pub rank: usize,
}

impl From<ModelDims> for DimsDoc {
    fn from(d: ModelDims) -> Self {
        DimsDoc {
            input_dim: d.input_dim,
            static_dim: d.static_dim,
            hidden_dim: d.hidden_dim,
            static_latent: d.static_latent,
            rank: d.rank,
        }
    }
}

impl From<DimsDoc> for ModelDims {
    fn from(d: DimsDoc) -> Self {
        ModelDims {
            input_dim: d.input_dim,
            static_dim: d.static_dim,
            hidden_dim: d.hidden_dim,
            static_latent: d.static_latent,
            rank: d.rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model_kind: String,
    pub dims: DimsDoc,
    pub parameters: Vec<ParamArray>,
}

pub fn to_document(params: &ModelParams) -> ModelDocument {
    ModelDocument {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: params.kind().as_str().to_string(),
        dims: params.dims.into(),
        parameters: params
            .segments()
            .into_iter()
            .map(|s| ParamArray {
                name: s.name.to_string(),
                shape: s.shape,
                values: s.values.to_vec(),
            })
            .collect(),
    }
}

/// Rebuilds parameters; every expected array must appear exactly once with
/// its exact shape, and nothing else may appear.
pub fn from_document(doc: &ModelDocument) -> Result<ModelParams, ModelIoError> {
    let invalid = |msg: String| ModelIoError::Invalid(msg);
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(invalid(format!(
            "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let kind = ModelKind::parse(&doc.model_kind).map_err(|e| invalid(e.to_string()))?;
    let dims = ModelDims::from(doc.dims);
    dims.validate().map_err(|e| invalid(e.to_string()))?;
    let mut params = ModelParams::zeros(dims, kind);

    let expected: Vec<(&'static str, Vec<usize>)> =
        params.segments().into_iter().map(|s| (s.name, s.shape)).collect();
    let mut seen = BTreeSet::new();
    for array in &doc.parameters {
        let Some((name, shape)) = expected.iter().find(|(n, _)| *n == array.name) else {
            return Err(invalid(format!("unknown parameter array '{}'", array.name)));
        };
        if !seen.insert(*name) {
            return Err(invalid(format!("parameter array '{name}' appears twice")));
        }
        if &array.shape != shape {
            return Err(invalid(format!(
                "parameter array '{name}' has shape {:?}, expected {shape:?}",
                array.shape
            )));
        }
        params
            .set_segment(name, &array.values)
            .map_err(|e| invalid(e.to_string()))?;
    }
    if let Some((missing, _)) = expected.iter().find(|(n, _)| !seen.contains(n)) {
        return Err(invalid(format!("missing parameter array '{missing}'")));
    }
    Ok(params)
}

pub fn model_to_string(params: &ModelParams) -> String {
    serde_json::to_string_pretty(&to_document(params)).expect("model documents always serialize")
}

pub fn model_from_str(text: &str) -> Result<ModelParams, ModelIoError> {
    from_document(&serde_json::from_str(text)?)
}

pub fn save_model(path: &Path, params: &ModelParams) -> Result<(), ModelIoError> {
    jointdx_core::tensor::ensure_finite("model parameters", &params.flatten())
        .map_err(|e| ModelIoError::Invalid(e.to_string()))?;
    fs::write(path, model_to_string(params) + "\n").map_err(|e| ModelIoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_model(path: &Path) -> Result<ModelParams, ModelIoError> {
    let text = fs::read_to_string(path).map_err(|e| ModelIoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    model_from_str(&text)
}
