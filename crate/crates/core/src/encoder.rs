//! Latent patient representation: the last LSTM hidden state over the event
//! history, concatenated with a sigmoid-squashed linear map of the static
//! features.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Provenance;
use crate::error::{check_len, Result};
use crate::tensor::{dot, sigmoid, tanh, Matrix, Vector};

/// Gate order used by every `[_; 4]` in [`LstmParams`]: input, forget,
/// output, cell candidate.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CELL: usize = 3;

/// Standard LSTM cell without peepholes.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// Input weights, each `hidden x input`.
    pub w: [Matrix; 4],
    /// Recurrent weights, each `hidden x hidden`.
    pub r: [Matrix; 4],
    pub b: [Vector; 4],
}

pub(crate) fn glorot_uniform<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Matrix {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            w: core::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            r: core::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            b: core::array::from_fn(|_| Vector::zeros(hidden_dim)),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for w in &mut p.w {
            *w = glorot_uniform(hidden_dim, input_dim, input_dim, hidden_dim, rng);
        }
        for r in &mut p.r {
            *r = glorot_uniform(hidden_dim, hidden_dim, hidden_dim, hidden_dim, rng);
        }
        p.b[GATE_FORGET] = Vector::filled(hidden_dim, 1.0);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w[0].rows()
    }
}

/// Everything one step needs to run backwards.
#[derive(Clone, Debug)]
struct StepCache {
    x: Vector,
    nz: Vec<usize>,
    h_prev: Vector,
    c_prev: Vector,
    gates: [Vector; 4],
    tanh_c: Vector,
}

fn step(x: Vector, h_prev: Vector, c_prev: Vector, p: &LstmParams) -> (StepCache, Vector, Vector) {
    let hidden = p.hidden_dim();
    let input = p.input_dim();
    let nz: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let gates: [Vector; 4] = core::array::from_fn(|k| {
        let w = p.w[k].as_slice();
        let mut out = Vector::zeros(hidden);
        for (row, o) in out.iter_mut().enumerate() {
            let wrow = &w[row * input..(row + 1) * input];
            let mut s = p.b[k][row] + dot(p.r[k].row(row), &h_prev);
            for &c in &nz {
                s += wrow[c] * x[c];
            }
            *o = if k == GATE_CELL { tanh(s) } else { sigmoid(s) };
        }
        out
    });
    let mut c = Vector::zeros(hidden);
    let mut tanh_c = Vector::zeros(hidden);
    let mut h = Vector::zeros(hidden);
    for j in 0..hidden {
        c[j] = gates[GATE_FORGET][j] * c_prev[j] + gates[GATE_INPUT][j] * gates[GATE_CELL][j];
        tanh_c[j] = tanh(c[j]);
        h[j] = gates[GATE_OUTPUT][j] * tanh_c[j];
    }
    let cache = StepCache {
        x,
        nz,
        h_prev,
        c_prev,
        gates,
        tanh_c,
    };
    (cache, h, c)
}

/// One LSTM step; returns the new `(h, c)`.
pub fn lstm_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
) -> Result<(Vector, Vector)> {
    check_len("lstm_step(x)", p.input_dim(), x.len())?;
    check_len("lstm_step(h_prev)", p.hidden_dim(), h_prev.len())?;
    check_len("lstm_step(c_prev)", p.hidden_dim(), c_prev.len())?;
    let (_, h, c) = step(x.into(), h_prev.into(), c_prev.into(), p);
    Ok((h, c))
}

/// Last hidden state after running the whole sequence from a zero state.
/// An empty sequence yields the zero initial state.
pub fn encode_sequence(xs: &[Vector], p: &LstmParams) -> Result<Vector> {
    Ok(forward_trace(xs, None, p)?.h)
}

/// Recorded forward pass over a sequence, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct SequenceTrace {
    steps: Vec<StepCache>,
    h: Vector,
}

/// Runs the LSTM over `xs`, multiplying each input elementwise by the
/// matching dropout mask when one is given.
pub fn forward_trace(
    xs: &[Vector],
    masks: Option<&[Vector]>,
    p: &LstmParams,
) -> Result<SequenceTrace> {
    let hidden = p.hidden_dim();
    if let Some(m) = masks {
        check_len("forward_trace(masks)", xs.len(), m.len())?;
    }
    let mut h = Vector::zeros(hidden);
    let mut c = Vector::zeros(hidden);
    let mut steps = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        check_len("forward_trace(x)", p.input_dim(), x.len())?;
        let x = match masks {
            Some(m) => {
                check_len("forward_trace(mask)", x.len(), m[t].len())?;
                Vector::from(x.iter().zip(m[t].iter()).map(|(a, b)| a * b).collect::<Vec<_>>())
            }
            None => x.clone(),
        };
        let (cache, h_next, c_next) = step(x, h, c, p);
        steps.push(cache);
        h = h_next;
        c = c_next;
    }
    Ok(SequenceTrace { steps, h })
}

impl SequenceTrace {
    pub fn output(&self) -> &Vector {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Backpropagation through time from `dh` on the final hidden state.
    /// Parameter gradients are accumulated into `grad`. When `dxs` is given
    /// it receives the gradient with respect to each (masked) input vector.
    pub fn backward(
        &self,
        dh: &[f64],
        p: &LstmParams,
        grad: &mut LstmParams,
        mut dxs: Option<&mut Vec<Vector>>,
    ) {
        let hidden = p.hidden_dim();
        let input = p.input_dim();
        if let Some(d) = dxs.as_deref_mut() {
            d.clear();
            d.resize(self.steps.len(), Vector::zeros(input));
        }
        let mut dh_next: Vec<f64> = dh.to_vec();
        let mut dc_next = vec![0.0; hidden];
        let mut dpre = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
        for (t, s) in self.steps.iter().enumerate().rev() {
            let [gi, gf, go, gg] = &s.gates;
            for j in 0..hidden {
                let tc = s.tanh_c[j];
                let d_o = dh_next[j] * tc;
                let dc = dc_next[j] + dh_next[j] * go[j] * (1.0 - tc * tc);
                dc_next[j] = dc * gf[j];
                dpre[GATE_INPUT][j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                dpre[GATE_FORGET][j] = dc * s.c_prev[j] * gf[j] * (1.0 - gf[j]);
                dpre[GATE_OUTPUT][j] = d_o * go[j] * (1.0 - go[j]);
                dpre[GATE_CELL][j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..4 {
                let w = p.w[k].as_slice();
                let gw = grad.w[k].as_mut_slice();
                for (j, &d) in dpre[k].iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.b[k][j] += d;
                    let gw_row = &mut gw[j * input..(j + 1) * input];
                    for &c in &s.nz {
                        gw_row[c] += d * s.x[c];
                    }
                    let r_row = p.r[k].row(j);
                    let gr_row = grad.r[k].row_mut(j);
                    for c in 0..hidden {
                        gr_row[c] += d * s.h_prev[c];
                        dh_next[c] += r_row[c] * d;
                    }
                    if let Some(dxs) = dxs.as_deref_mut() {
                        let w_row = &w[j * input..(j + 1) * input];
                        for (dx, wv) in dxs[t].iter_mut().zip(w_row) {
                            *dx += wv * d;
                        }
                    }
                }
            }
        }
    }
}

/// Static encoder `σ(Hᵀ m)`; `h` is `static_dim x latent_static_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticParams {
    pub h: Matrix,
}

impl StaticParams {
    pub fn zeros(static_dim: usize, latent_dim: usize) -> Self {
        StaticParams {
            h: Matrix::zeros(static_dim, latent_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(static_dim: usize, latent_dim: usize, rng: &mut R) -> Self {
        StaticParams {
            h: glorot_uniform(static_dim, latent_dim, static_dim, latent_dim, rng),
        }
    }

    pub fn static_dim(&self) -> usize {
        self.h.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.h.cols()
    }
}

pub fn encode_static(m: &[f64], p: &StaticParams) -> Result<Vector> {
    let mut pre = p.h.matvec_t(m)?;
    pre.iter_mut().for_each(|v| *v = sigmoid(*v));
    Ok(pre)
}

/// Accumulates `∂/∂H` given the gradient on the static encoding `s`.
pub(crate) fn static_backward(m: &[f64], s: &[f64], ds: &[f64], grad: &mut StaticParams) {
    let dpre: Vec<f64> = s
        .iter()
        .zip(ds)
        .map(|(s, d)| d * s * (1.0 - s))
        .collect();
    for (i, &mi) in m.iter().enumerate() {
        if mi == 0.0 {
            continue;
        }
        for (g, d) in grad.h.row_mut(i).iter_mut().zip(&dpre) {
            *g += mi * d;
        }
    }
}

/// Concatenated representation `[h_T ; σ(Hᵀ m)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRep {
    pub values: Vector,
    pub hidden_dim: usize,
    pub provenance: Option<Provenance>,
}

impl LatentRep {
    pub fn sequence_part(&self) -> &[f64] {
        &self.values[..self.hidden_dim]
    }

    pub fn static_part(&self) -> &[f64] {
        &self.values[self.hidden_dim..]
    }
}

pub fn build_representation(
    history: &[Vector],
    m: &[f64],
    lstm: &LstmParams,
    st: &StaticParams,
) -> Result<LatentRep> {
    let h = encode_sequence(history, lstm)?;
    let s = encode_static(m, st)?;
    Ok(LatentRep {
        values: h.concat(&s),
        hidden_dim: lstm.hidden_dim(),
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    fn random_params(input: usize, hidden: usize, seed: u64) -> LstmParams {
        let mut rng = seeded_rng(seed);
        let mut p = LstmParams::init(input, hidden, &mut rng);
        for b in &mut p.b {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        p
    }

    fn random_vec(len: usize, rng: &mut crate::Rng) -> Vector {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>().into()
    }

    fn scalar_sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Gate-by-gate scalar evaluation of one LSTM step.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let hidden = p.hidden_dim();
        let mut h_out = vec![0.0; hidden];
        let mut c_out = vec![0.0; hidden];
        for j in 0..hidden {
            let pre = |k: usize| {
                let mut s = p.b[k][j];
                for (i, xi) in x.iter().enumerate() {
                    s += p.w[k].get(j, i) * xi;
                }
                for (i, hi) in h.iter().enumerate() {
                    s += p.r[k].get(j, i) * hi;
                }
                s
            };
            let i_g = scalar_sigmoid(pre(0));
            let f_g = scalar_sigmoid(pre(1));
            let o_g = scalar_sigmoid(pre(2));
            let cand = pre(3).tanh();
            c_out[j] = f_g * c[j] + i_g * cand;
            h_out[j] = o_g * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(4, 3);
        let (h, c) = lstm_step(&[1.0, 2.0, 3.0, 4.0], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(&*h, &[0.0; 3]);
        assert_eq!(&*c, &[0.0; 3]);
    }

    #[test]
    fn zero_params_carry_half_the_cell() {
        let p = LstmParams::zeros(2, 3);
        let v = [0.4, -1.2, 3.0];
        let (h, c) = lstm_step(&[0.7, 0.1], &[0.0; 3], &v, &p).unwrap();
        for j in 0..3 {
            assert_eq!(c[j], 0.5 * v[j]);
            assert!((h[j] - 0.5 * (0.5 * v[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn step_matches_scalar_reference() {
        let p = random_params(5, 4, 7);
        let mut rng = seeded_rng(8);
        for _ in 0..20 {
            let x = random_vec(5, &mut rng);
            let h = random_vec(4, &mut rng);
            let c = random_vec(4, &mut rng);
            let (h1, c1) = lstm_step(&x, &h, &c, &p).unwrap();
            let (h2, c2) = reference_step(&x, &h, &c, &p);
            for j in 0..4 {
                assert!((h1[j] - h2[j]).abs() < 1e-12);
                assert!((c1[j] - c2[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_rejects_bad_dims() {
        let p = LstmParams::zeros(2, 3);
        assert!(lstm_step(&[1.0], &[0.0; 3], &[0.0; 3], &p).is_err());
        assert!(lstm_step(&[1.0, 1.0], &[0.0; 2], &[0.0; 3], &p).is_err());
    }

    #[test]
    fn sequence_unrolls_as_composition() {
        let p = random_params(3, 4, 11);
        let mut rng = seeded_rng(12);
        let xs: Vec<Vector> = (0..3).map(|_| random_vec(3, &mut rng)).collect();
        assert_eq!(encode_sequence(&[], &p).unwrap(), Vector::zeros(4));
        let (h1, c1) = lstm_step(&xs[0], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert_eq!(encode_sequence(&xs[..1], &p).unwrap(), h1);
        let (h2, c2) = reference_step(&xs[1], &h1, &c1, &p);
        let (h3, _) = reference_step(&xs[2], &h2, &c2, &p);
        let got = encode_sequence(&xs, &p).unwrap();
        for j in 0..4 {
            assert!((got[j] - h3[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_is_bounded_and_deterministic() {
        let mut p = random_params(3, 5, 2);
        p.w.iter_mut()
            .for_each(|w| w.as_mut_slice().iter_mut().for_each(|v| *v *= 20.0));
        let mut rng = seeded_rng(3);
        let xs: Vec<Vector> = (0..6).map(|_| random_vec(3, &mut rng)).collect();
        let a = encode_sequence(&xs, &p).unwrap();
        let b = encode_sequence(&xs, &p).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1.0));
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn static_encoder_cases() {
        let mut rng = seeded_rng(5);
        let zero = StaticParams::zeros(6, 3);
        let m = random_vec(6, &mut rng);
        assert_eq!(&*encode_static(&m, &zero).unwrap(), &[0.5; 3]);
        let p = StaticParams::init(6, 3, &mut rng);
        assert_eq!(&*encode_static(&[0.0; 6], &p).unwrap(), &[0.5; 3]);
        let got = encode_static(&m, &p).unwrap();
        for l in 0..3 {
            let mut s = 0.0;
            for i in 0..6 {
                s += p.h.get(i, l) * m[i];
            }
            assert!((got[l] - scalar_sigmoid(s)).abs() < 1e-14);
        }
        assert!(encode_static(&[1.0; 5], &p).is_err());
    }

    #[test]
    fn representation_layout() {
        let lstm = LstmParams::init(182, 25, &mut seeded_rng(1));
        let st = StaticParams::zeros(114, 15);
        let rep = build_representation(&[], &[1.0; 114], &lstm, &st).unwrap();
        assert_eq!(rep.values.len(), 40);
        assert!(rep.sequence_part().iter().all(|&v| v == 0.0));
        assert!(rep.static_part().iter().all(|&v| v == 0.5));

        let lstm = random_params(4, 3, 9);
        let mut rng = seeded_rng(10);
        let st = StaticParams::init(5, 2, &mut rng);
        let hist: Vec<Vector> = (0..2).map(|_| random_vec(4, &mut rng)).collect();
        let m = random_vec(5, &mut rng);
        let rep = build_representation(&hist, &m, &lstm, &st).unwrap();
        assert_eq!(rep.sequence_part(), &*encode_sequence(&hist, &lstm).unwrap());
        assert_eq!(rep.static_part(), &*encode_static(&m, &st).unwrap());
    }
}
