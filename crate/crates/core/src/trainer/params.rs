use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::decoder::{
    pseudo_joint, score_joint, score_marginal, MarginalParams, TuckerParams,
};
use crate::encoder::{build_representation, LatentRep, LstmParams, StaticParams};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Tucker-3 joint head.
    Tensor,
    /// Log-linear marginal head scored through the pseudo-joint.
    Marginal,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tensor => "tensor",
            ModelKind::Marginal => "marginal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tensor" => Ok(ModelKind::Tensor),
            "marginal" => Ok(ModelKind::Marginal),
            other => Err(Error::Validation(format!(
                "unknown model kind '{other}' (expected tensor or marginal)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub static_dim: usize,
    pub hidden_dim: usize,
    pub static_latent: usize,
    pub rank: usize,
}

impl ModelDims {
    /// Hidden size 25, static latent size 15, rank 5.
    pub fn reference(input_dim: usize, static_dim: usize) -> Self {
        ModelDims {
            input_dim,
            static_dim,
            hidden_dim: 25,
            static_latent: 15,
            rank: 5,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.hidden_dim + self.static_latent
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_dim", self.input_dim),
            ("static_dim", self.static_dim),
            ("hidden_dim", self.hidden_dim),
            ("static_latent", self.static_latent),
            ("rank", self.rank),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Validation(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Tensor(TuckerParams),
    Marginal(MarginalParams),
}

/// All trainable parameters of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub lstm: LstmParams,
    pub static_enc: StaticParams,
    pub head: Head,
}

/// A named parameter array in the canonical flat order.
#[derive(Clone, Debug)]
pub struct Segment<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
    /// Whether the ridge penalty applies.
    pub regularized: bool,
}

const LSTM_W: [&str; 4] = ["lstm.w_i", "lstm.w_f", "lstm.w_o", "lstm.w_g"];
const LSTM_R: [&str; 4] = ["lstm.r_i", "lstm.r_f", "lstm.r_o", "lstm.r_g"];
const LSTM_B: [&str; 4] = ["lstm.b_i", "lstm.b_f", "lstm.b_o", "lstm.b_g"];

impl ModelParams {
    pub fn zeros(dims: ModelDims, kind: ModelKind) -> Self {
        let latent = dims.latent_dim();
        ModelParams {
            dims,
            lstm: LstmParams::zeros(dims.input_dim, dims.hidden_dim),
            static_enc: StaticParams::zeros(dims.static_dim, dims.static_latent),
            head: match kind {
                ModelKind::Tensor => Head::Tensor(TuckerParams::zeros(latent, dims.rank)),
                ModelKind::Marginal => Head::Marginal(MarginalParams::zeros(latent)),
            },
        }
    }

    pub fn init<R: Rng + ?Sized>(dims: ModelDims, kind: ModelKind, rng: &mut R) -> Self {
        let latent = dims.latent_dim();
        let lstm = LstmParams::init(dims.input_dim, dims.hidden_dim, rng);
        let static_enc = StaticParams::init(dims.static_dim, dims.static_latent, rng);
        let head = match kind {
            ModelKind::Tensor => Head::Tensor(TuckerParams::init(latent, dims.rank, rng)),
            ModelKind::Marginal => Head::Marginal(MarginalParams::init(latent, rng)),
        };
        ModelParams {
            dims,
            lstm,
            static_enc,
            head,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.head {
            Head::Tensor(_) => ModelKind::Tensor,
            Head::Marginal(_) => ModelKind::Marginal,
        }
    }

    /// A zeroed parameter set with the same shapes, used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims, self.kind())
    }

    /// Named arrays in canonical order: LSTM input weights, recurrent
    /// weights and biases (gate order i, f, o, g), the static map, then the
    /// head.
    pub fn segments(&self) -> Vec<Segment<'_>> {
        let d = self.dims;
        let mut out = Vec::with_capacity(16);
        for (k, name) in LSTM_W.iter().enumerate() {
            out.push(Segment { name, shape: vec![d.hidden_dim, d.input_dim], values: self.lstm.w[k].as_slice(), regularized: false });
        }
        for (k, name) in LSTM_R.iter().enumerate() {
            out.push(Segment { name, shape: vec![d.hidden_dim, d.hidden_dim], values: self.lstm.r[k].as_slice(), regularized: false });
        }
        for (k, name) in LSTM_B.iter().enumerate() {
            out.push(Segment { name, shape: vec![d.hidden_dim], values: &self.lstm.b[k], regularized: false });
        }
        out.push(Segment {
            name: "static.h",
            shape: vec![d.static_dim, d.static_latent],
            values: self.static_enc.h.as_slice(),
            regularized: true,
        });
        match &self.head {
            Head::Tensor(t) => {
                let (d1, d2, d3) = t.core.dims();
                out.push(Segment { name: "tucker.core", shape: vec![d1, d2, d3], values: t.core.as_slice(), regularized: true });
                out.push(Segment { name: "tucker.b", shape: vec![t.b.rows(), t.b.cols()], values: t.b.as_slice(), regularized: true });
                out.push(Segment { name: "tucker.c", shape: vec![t.c.rows(), t.c.cols()], values: t.c.as_slice(), regularized: true });
            }
            Head::Marginal(m) => {
                out.push(Segment { name: "marginal.w_y", shape: vec![m.w_y.rows(), m.w_y.cols()], values: m.w_y.as_slice(), regularized: true });
                out.push(Segment { name: "marginal.w_z", shape: vec![m.w_z.rows(), m.w_z.cols()], values: m.w_z.as_slice(), regularized: true });
            }
        }
        out
    }

    /// Mutable views in the same order as [`segments`](Self::segments).
    pub fn segments_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(16);
        let lstm = &mut self.lstm;
        for w in lstm.w.iter_mut() {
            out.push(w.as_mut_slice());
        }
        for r in lstm.r.iter_mut() {
            out.push(r.as_mut_slice());
        }
        for b in lstm.b.iter_mut() {
            out.push(&mut b[..]);
        }
        out.push(self.static_enc.h.as_mut_slice());
        match &mut self.head {
            Head::Tensor(t) => {
                out.push(t.core.as_mut_slice());
                out.push(t.b.as_mut_slice());
                out.push(t.c.as_mut_slice());
            }
            Head::Marginal(m) => {
                out.push(m.w_y.as_mut_slice());
                out.push(m.w_z.as_mut_slice());
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.segments().iter().map(|s| s.values.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for s in self.segments() {
            out.extend_from_slice(s.values);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.n_params();
        if flat.len() != n {
            return Err(Error::shape("ModelParams::unflatten", n, flat.len()));
        }
        let mut offset = 0;
        for seg in self.segments_mut() {
            let len = seg.len();
            seg.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Overwrites the array called `name` with `values`.
    pub fn set_segment(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let names: Vec<&'static str> = self.segments().iter().map(|s| s.name).collect();
        let idx = names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Validation(format!("unknown parameter array '{name}'")))?;
        let seg = self.segments_mut().swap_remove(idx);
        if seg.len() != values.len() {
            return Err(Error::Validation(format!(
                "parameter array '{name}' needs {} values, got {}",
                seg.len(),
                values.len()
            )));
        }
        seg.copy_from_slice(values);
        Ok(())
    }

    pub fn representation(&self, history: &[Vector], static_features: &[f64]) -> Result<LatentRep> {
        build_representation(history, static_features, &self.lstm, &self.static_enc)
    }

    /// The 3x3 score grid for one instance.
    pub fn predict(&self, history: &[Vector], static_features: &[f64]) -> Result<Matrix> {
        let a = self.representation(history, static_features)?;
        match &self.head {
            Head::Tensor(t) => score_joint(&a.values, t),
            Head::Marginal(m) => {
                let (py, pz) = score_marginal(&a.values, m)?;
                Ok(pseudo_joint(&py, &pz))
            }
        }
    }
}
