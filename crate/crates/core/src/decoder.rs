//! Joint decision targets and the two scoring heads: the Tucker-3 joint
//! model and the log-linear marginal model with its rank-1 pseudo-joint.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::glorot_uniform;
use crate::error::{check_len, Error, Result};
use crate::tensor::{dot, outer_product, sigmoid, Matrix, Tensor3, Vector};

/// Number of values each decision target can take.
pub const N_CLASSES: usize = 3;
/// Number of (intention, type) pairs.
pub const N_PAIRS: usize = N_CLASSES * N_CLASSES;

pub const INTENTION_LABELS: [&str; N_CLASSES] = ["curative", "palliative", "unknown"];
pub const TYPE_LABELS: [&str; N_CLASSES] = ["percutaneous", "brachytherapy", "unknown"];

/// A documented decision: one intention class and one therapy-type class.
/// Its matrix form is the one-hot outer product `y ⊗ z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointTarget {
    pub intention: usize,
    pub therapy_type: usize,
}

impl JointTarget {
    pub fn new(intention: usize, therapy_type: usize) -> Result<Self> {
        if intention >= N_CLASSES || therapy_type >= N_CLASSES {
            return Err(Error::Validation(format!(
                "decision class out of range: ({intention}, {therapy_type})"
            )));
        }
        Ok(JointTarget {
            intention,
            therapy_type,
        })
    }

    pub fn matrix(&self) -> Matrix {
        let mut u = Matrix::zeros(N_CLASSES, N_CLASSES);
        u.set(self.intention, self.therapy_type, 1.0);
        u
    }

    /// Row-major index of the true pair among the 9 labels.
    pub fn flat_index(&self) -> usize {
        self.intention * N_CLASSES + self.therapy_type
    }

    pub fn intention_vec(&self) -> Vector {
        Vector::unit(N_CLASSES, self.intention)
    }

    pub fn type_vec(&self) -> Vector {
        Vector::unit(N_CLASSES, self.therapy_type)
    }
}

fn one_hot_index(v: &[f64], what: &str) -> Result<usize> {
    if v.len() != N_CLASSES {
        return Err(Error::Validation(format!(
            "{what} must have {N_CLASSES} entries, got {}",
            v.len()
        )));
    }
    let ones: Vec<usize> = (0..v.len()).filter(|&i| v[i] == 1.0).collect();
    let zeros = v.iter().filter(|&&x| x == 0.0).count();
    match ones.as_slice() {
        [i] if zeros == N_CLASSES - 1 => Ok(*i),
        _ => Err(Error::Validation(format!("{what} is not one-hot: {v:?}"))),
    }
}

/// Validates two dummy-coded target vectors and forms `U = y ⊗ z`.
pub fn build_joint_target(y: &[f64], z: &[f64]) -> Result<JointTarget> {
    let j = one_hot_index(y, "intention vector")?;
    let k = one_hot_index(z, "type vector")?;
    let t = JointTarget::new(j, k)?;
    debug_assert_eq!(outer_product(y, z), t.matrix());
    Ok(t)
}

/// Core tensor (`latent x rank x rank`) and the target factor matrices whose
/// rows are the per-class factor vectors `b_j`, `c_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerParams {
    pub core: Tensor3,
    pub b: Matrix,
    pub c: Matrix,
}

impl TuckerParams {
    pub fn zeros(latent_dim: usize, rank: usize) -> Self {
        TuckerParams {
            core: Tensor3::zeros(latent_dim, rank, rank),
            b: Matrix::zeros(N_CLASSES, rank),
            c: Matrix::zeros(N_CLASSES, rank),
        }
    }

    /// Glorot-uniform entries; the core's fan-in is the latent size and its
    /// fan-out the `rank²` slice count.
    pub fn init<R: Rng + ?Sized>(latent_dim: usize, rank: usize, rng: &mut R) -> Self {
        let core = glorot_uniform(latent_dim, rank * rank, latent_dim, rank * rank, rng);
        TuckerParams {
            core: Tensor3::from_vec((latent_dim, rank, rank), core.as_slice().to_vec())
                .expect("sizes agree"),
            b: glorot_uniform(N_CLASSES, rank, rank, N_CLASSES, rng),
            c: glorot_uniform(N_CLASSES, rank, rank, N_CLASSES, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.core.dims().0
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        let (d1, d2, d3) = self.core.dims();
        check_len("tucker(a)", d1, a.len())?;
        check_len("tucker(B)", d2, self.b.cols())?;
        check_len("tucker(C)", d3, self.c.cols())?;
        check_len("tucker(B rows)", N_CLASSES, self.b.rows())?;
        check_len("tucker(C rows)", N_CLASSES, self.c.rows())
    }
}

/// Intermediate values of one joint scoring pass.
#[derive(Clone, Debug)]
pub struct TuckerTrace {
    /// `G ×₁ a`, `rank x rank`.
    pub projected: Matrix,
    /// Sigmoid outputs `û(j, k)`.
    pub probs: Matrix,
}

pub fn tucker_forward(a: &[f64], p: &TuckerParams) -> Result<TuckerTrace> {
    p.check(a)?;
    let projected = p.core.mode1_contract(a)?;
    let rank = p.rank();
    let mut probs = Matrix::zeros(N_CLASSES, N_CLASSES);
    // (M c_k) for each k, then b_j · (M c_k).
    for k in 0..N_CLASSES {
        let mc: Vec<f64> = (0..rank).map(|q| dot(projected.row(q), p.c.row(k))).collect();
        for j in 0..N_CLASSES {
            probs.set(j, k, sigmoid(dot(p.b.row(j), &mc)));
        }
    }
    Ok(TuckerTrace { projected, probs })
}

/// Given `∂L/∂logit(j,k)`, accumulates parameter gradients into `grad` and
/// returns `∂L/∂a`.
pub fn tucker_backward(
    a: &[f64],
    trace: &TuckerTrace,
    dlogits: &Matrix,
    p: &TuckerParams,
    grad: &mut TuckerParams,
) -> Vector {
    let rank = p.rank();
    let m = &trace.projected;
    // dM(q,r) = Σ_jk dl(j,k) B(j,q) C(k,r)
    let mut dm = Matrix::zeros(rank, rank);
    for j in 0..N_CLASSES {
        for k in 0..N_CLASSES {
            let d = dlogits.get(j, k);
            if d == 0.0 {
                continue;
            }
            let bj = p.b.row(j);
            let ck = p.c.row(k);
            for q in 0..rank {
                let dq = d * bj[q];
                for (v, c) in dm.row_mut(q).iter_mut().zip(ck) {
                    *v += dq * c;
                }
            }
            // dB(j,q) += d Σ_r M(q,r) C(k,r); dC(k,r) += d Σ_q B(j,q) M(q,r)
            for q in 0..rank {
                let mq = m.row(q);
                grad.b.row_mut(j)[q] += d * dot(mq, ck);
                let bq = bj[q];
                for (gc, mv) in grad.c.row_mut(k).iter_mut().zip(mq) {
                    *gc += d * bq * mv;
                }
            }
        }
    }
    let mut da = Vector::zeros(a.len());
    for r in 0..rank {
        for q in 0..rank {
            let d = dm.get(q, r);
            if d == 0.0 {
                continue;
            }
            for (g, av) in grad.core.fibre_mut(q, r).iter_mut().zip(a) {
                *g += d * av;
            }
            for (dv, gv) in da.iter_mut().zip(p.core.fibre(q, r)) {
                *dv += d * gv;
            }
        }
    }
    da
}

/// `û(j, k) = σ(⟦G; a, b_j, c_k⟧)` for all 9 pairs.
pub fn score_joint(a: &[f64], p: &TuckerParams) -> Result<Matrix> {
    Ok(tucker_forward(a, p)?.probs)
}

/// Log-linear marginal head: `p_y = σ(W_yᵀ a)`, `p_z = σ(W_zᵀ a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalParams {
    /// `latent x 3`.
    pub w_y: Matrix,
    /// `latent x 3`.
    pub w_z: Matrix,
}

impl MarginalParams {
    pub fn zeros(latent_dim: usize) -> Self {
        MarginalParams {
            w_y: Matrix::zeros(latent_dim, N_CLASSES),
            w_z: Matrix::zeros(latent_dim, N_CLASSES),
        }
    }

    pub fn init<R: Rng + ?Sized>(latent_dim: usize, rng: &mut R) -> Self {
        MarginalParams {
            w_y: glorot_uniform(latent_dim, N_CLASSES, latent_dim, N_CLASSES, rng),
            w_z: glorot_uniform(latent_dim, N_CLASSES, latent_dim, N_CLASSES, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w_y.rows()
    }
}

pub fn score_marginal(a: &[f64], p: &MarginalParams) -> Result<(Vector, Vector)> {
    let squash = |mut v: Vector| {
        v.iter_mut().for_each(|x| *x = sigmoid(*x));
        v
    };
    Ok((squash(p.w_y.matvec_t(a)?), squash(p.w_z.matvec_t(a)?)))
}

/// Gradient of the marginal head given `∂L/∂logit` for both outputs.
pub fn marginal_backward(
    a: &[f64],
    dy: &[f64],
    dz: &[f64],
    p: &MarginalParams,
    grad: &mut MarginalParams,
) -> Vector {
    let mut da = Vector::zeros(a.len());
    for (i, &ai) in a.iter().enumerate() {
        for c in 0..N_CLASSES {
            grad.w_y.row_mut(i)[c] += ai * dy[c];
            grad.w_z.row_mut(i)[c] += ai * dz[c];
        }
        da[i] = dot(p.w_y.row(i), dy) + dot(p.w_z.row(i), dz);
    }
    da
}

/// Rank-1 stand-in for a joint distribution: `p_y ⊗ p_z`.
pub fn pseudo_joint(p_y: &[f64], p_z: &[f64]) -> Matrix {
    outer_product(p_y, p_z)
}

/// The `n` highest-scoring pairs, best first; ties go to the
/// lexicographically smaller `(j, k)`.
pub fn top_n_pairs(scores: &Matrix, n: usize) -> Result<Vec<((usize, usize), f64)>> {
    let total = scores.rows() * scores.cols();
    if n == 0 || n > total {
        return Err(Error::Validation(format!("top-n must be in 1..={total}, got {n}")));
    }
    let mut pairs: Vec<((usize, usize), f64)> = (0..scores.rows())
        .flat_map(|j| (0..scores.cols()).map(move |k| (j, k)))
        .map(|(j, k)| ((j, k), scores.get(j, k)))
        .collect();
    // Stable sort keeps the row-major (lexicographic) order among ties.
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
    pairs.truncate(n);
    Ok(pairs)
}
