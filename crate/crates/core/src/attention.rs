//! Scaled dot-product self-attention with timestep-gated key/value
//! injection from a reference stream.
//!
//! The gate is a hard switch, never a blend: below or at the threshold the
//! output is the generation's own attention, above it the keys and values
//! come from the reference while queries stay with the generation. Both
//! branches run through the same code path, so the chosen branch is
//! bit-exact with the corresponding plain evaluation.
//!
//! Timesteps here are progress indices: larger means later in denoising
//! (closer to the final image). The default threshold opens the gate for
//! the final fifth of the steps.

use crate::linalg::Mat;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("attention inputs contain non-finite values")]
    NonFinite,
}

/// Per-layer query/key/value matrices, each `n_tokens x d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionFeatures {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
}

impl AttentionFeatures {
    pub fn validate(&self) -> Result<(), AttentionError> {
        if self.q.cols() != self.k.cols() {
            return Err(AttentionError::ShapeMismatch(format!(
                "q is {}x{} but k is {}x{}",
                self.q.rows(),
                self.q.cols(),
                self.k.rows(),
                self.k.cols()
            )));
        }
        if self.k.rows() != self.v.rows() {
            return Err(AttentionError::ShapeMismatch(format!(
                "k has {} rows but v has {}",
                self.k.rows(),
                self.v.rows()
            )));
        }
        Ok(())
    }
}

/// Timestep gate for reference injection: open strictly above the
/// threshold. `current_t` and `t_start_style` are progress indices in
/// `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectionGate {
    pub t_start_style: usize,
    pub current_t: usize,
}

impl InjectionGate {
    pub fn new(t_start_style: usize, current_t: usize) -> Self {
        InjectionGate {
            t_start_style,
            current_t,
        }
    }

    pub fn is_open(&self) -> bool {
        self.current_t > self.t_start_style
    }
}

/// Numerically stable row softmax (subtracts the row max first).
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut out = Mat::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let mut exps = vec![0.0; row.len()];
        for (c, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            exps[c] = e;
            sum += e;
        }
        for (c, e) in exps.into_iter().enumerate() {
            out.set(r, c, e / sum);
        }
    }
    out
}

/// `softmax(q k^T / sqrt(d_k)) v` with row-wise softmax.
pub fn attend(q: &Mat, k: &Mat, v: &Mat) -> Result<Mat, AttentionError> {
    let features = AttentionFeatures {
        q: q.clone(),
        k: k.clone(),
        v: v.clone(),
    };
    features.validate()?;
    if !q.is_finite() || !k.is_finite() || !v.is_finite() {
        return Err(AttentionError::NonFinite);
    }
    let d_k = q.cols() as f64;
    let logits = q.matmul_transposed(k).scale(1.0 / d_k.sqrt());
    Ok(softmax_rows(&logits).matmul(v))
}

/// Gated attention: generation-only below the threshold, reference keys
/// and values above it. Queries always come from the generation stream.
pub fn gated_attend(
    gen: &AttentionFeatures,
    reference: &AttentionFeatures,
    gate: InjectionGate,
) -> Result<Mat, AttentionError> {
    if gate.is_open() {
        attend(&gen.q, &reference.k, &reference.v)
    } else {
        attend(&gen.q, &gen.k, &gen.v)
    }
}
