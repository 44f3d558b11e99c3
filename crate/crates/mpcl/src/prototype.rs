//! Slot-addressed prototype memory banks and cross-view relation
//! distillation.
//!
//! A bank holds two `[M x D]` matrices: addresses (keys used to score an
//! embedding against each prototype) and memories (the content mixed by the
//! resulting weights). Addressing an embedding `z` gives
//!
//! ```text
//! A       = softmax_rows(beta_addr * z W_address^T)     beta_addr = 1/sqrt(D)
//! z_proto = A W_memory
//! ```
//!
//! which is exactly one Hopfield retrieval with separate key and content
//! banks.
//!
//! Two banks are trained, one per view (physiological / behavioral), and the
//! relation-distillation loss keeps their internal structure aligned: each
//! bank's semantic correlation matrix `S = softmax_rows(W_memory W_address^T
//! / tau)` describes how its prototypes relate, and for every sample the row
//! of one view's `S` at that view's dominant prototype supervises the other
//! view's pooled addressing distribution. Teacher rows are constants
//! (distillation convention); gradients flow only into the student
//! addressing.

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix, Rng};
use crate::tape::{ParamSet, SlotId, Tape, Var};

/// Parameter slots of one prototype bank.
#[derive(Debug, Clone)]
pub struct BankSlots {
    pub w_address: SlotId,
    pub w_memory: SlotId,
    pub prototypes: usize,
    pub embed_dim: usize,
}

impl BankSlots {
    /// Addressing sharpness `1/sqrt(D)`.
    pub fn beta_addr(&self) -> f64 {
        1.0 / (self.embed_dim as f64).sqrt()
    }
}

/// Register a bank under `prefix`, both matrices `uniform(-1/sqrt(D),
/// 1/sqrt(D))`.
pub fn register_bank(
    params: &mut ParamSet,
    prefix: &str,
    prototypes: usize,
    embed_dim: usize,
    rng: &mut Rng,
) -> Result<BankSlots> {
    if prototypes == 0 || embed_dim == 0 {
        return Err(Error::Config(format!(
            "prototype bank needs positive sizes, got M={prototypes}, D={embed_dim}"
        )));
    }
    let bound = 1.0 / (embed_dim as f64).sqrt();
    let init = |rng: &mut Rng| {
        let mut m = Matrix::zeros(prototypes, embed_dim);
        for v in m.as_mut_slice().iter_mut() {
            *v = rng.uniform(-bound, bound);
        }
        m
    };
    let w_address = params.add(format!("{prefix}.w_address"), init(rng))?;
    let w_memory = params.add(format!("{prefix}.w_memory"), init(rng))?;
    Ok(BankSlots { w_address, w_memory, prototypes, embed_dim })
}

/// Address `z` against the bank: returns the addressing distribution
/// `A [K x M]` and the retrieved prototype mixture `z_proto [K x D]`.
pub fn address(
    tape: &mut Tape,
    params: &ParamSet,
    bank: &BankSlots,
    z: Var,
) -> Result<(Var, Var)> {
    let w_address = tape.param(params, bank.w_address);
    let w_memory = tape.param(params, bank.w_memory);
    let scores = tape.matmul_nt(z, w_address)?;
    let a = tape.softmax_rows(scores, bank.beta_addr())?;
    let z_proto = tape.matmul(a, w_memory)?;
    Ok((a, z_proto))
}

/// Semantic correlation matrix `S [M x M]` of a bank, computed on plain
/// matrices (it is consumed as a gradient-detached teacher).
pub fn semantic_correlation(params: &ParamSet, bank: &BankSlots, tau_dist: f64) -> Result<Matrix> {
    if !(tau_dist > 0.0) || !tau_dist.is_finite() {
        return Err(Error::parameter(
            "semantic_correlation",
            format!("temperature must be positive and finite, got {tau_dist}"),
        ));
    }
    let prod = numeric::matmul_nt(params.value(bank.w_memory), params.value(bank.w_address))?;
    numeric::softmax_rows(&prod, 1.0 / tau_dist)
}

/// Dominant prototype of an addressing matrix: argmax of the column mean,
/// ties resolved toward the lowest index.
pub fn pseudo_label(a: &Matrix) -> Result<usize> {
    if a.is_empty() {
        return Err(Error::parameter("pseudo_label", "empty addressing matrix"));
    }
    let pooled = numeric::mean_rows(a)?;
    let mut best = 0;
    let mut best_val = pooled.get(0, 0);
    for j in 1..pooled.cols() {
        let v = pooled.get(0, j);
        if v > best_val {
            best = j;
            best_val = v;
        }
    }
    Ok(best)
}

fn check_row_simplex(op: &'static str, m: &Matrix, tol: f64) -> Result<()> {
    for r in 0..m.rows() {
        let mut sum = 0.0;
        for v in m.row(r) {
            if *v < 0.0 {
                return Err(Error::Contract {
                    op,
                    msg: format!("row {r} has negative entry {v}"),
                });
            }
            sum += *v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::Contract { op, msg: format!("row {r} sums to {sum}, not 1") });
        }
    }
    Ok(())
}

/// Relation-distillation loss over a batch.
///
/// `a_phy[i]` / `a_beha[i]` are the per-sample addressing matrices on the
/// tape; `s_phy` / `s_beha` the two semantic correlation matrices, consumed
/// as constants. Per sample, each view's pooled addressing is supervised by
/// the other view's correlation row at that other view's dominant prototype;
/// the two divergences are averaged and the result is averaged over the
/// batch.
pub fn prd_loss(
    tape: &mut Tape,
    a_phy: &[Var],
    a_beha: &[Var],
    s_phy: &Matrix,
    s_beha: &Matrix,
) -> Result<Var> {
    if a_phy.len() != a_beha.len() || a_phy.is_empty() {
        return Err(Error::parameter(
            "prd_loss",
            format!("need matching nonempty batches, got {} and {}", a_phy.len(), a_beha.len()),
        ));
    }
    check_row_simplex("prd_loss", s_phy, 1e-8)?;
    check_row_simplex("prd_loss", s_beha, 1e-8)?;

    let n = a_phy.len();
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        check_row_simplex("prd_loss", tape.value(a_phy[i]), 1e-8)?;
        check_row_simplex("prd_loss", tape.value(a_beha[i]), 1e-8)?;
        // Index selection is detached: computed from values, not recorded.
        let p_star = pseudo_label(tape.value(a_beha[i]))?;
        let q_star = pseudo_label(tape.value(a_phy[i]))?;

        let pooled_phy = tape.mean_rows(a_phy[i])?;
        let pooled_beha = tape.mean_rows(a_beha[i])?;
        let kl_a = crate::metrics::kl_tape(tape, s_beha.row(p_star), pooled_phy)?;
        let kl_b = crate::metrics::kl_tape(tape, s_phy.row(q_star), pooled_beha)?;
        let pair = tape.add(kl_a, kl_b)?;
        terms.push(pair);
    }
    let total = tape.sum_scalars(&terms)?;
    tape.scale(total, 0.5 / n as f64)
}
