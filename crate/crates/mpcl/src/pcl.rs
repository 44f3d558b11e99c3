//! Prototypical co-occurrence learning: batch-level cross-view retrieval and
//! the leave-one-out contrastive loss.
//!
//! Each sample's view is first enhanced with its prototype mixture
//! (`z_tilde = z + z_proto`, kept at `[K x D]` for the compression stage) and
//! mean-pooled to a unit vector. The pooled physiological vectors of the
//! current batch form the store `U`, the behavioral ones the store `V`, and
//! both views retrieve from both stores with a sharp Hopfield step. That
//! produces four aligned sets of unit vectors; samples that co-occur with
//! similar mixtures retrieve similar content, which the loss then amplifies:
//!
//! ```text
//! L = -1/N sum_i ln[ exp(t u_phy_i . u_beha_i) / sum_{j!=i} exp(t u_phy_i . u_beha_j) ]
//!     -1/N sum_i ln[ exp(t v_phy_i . v_beha_i) / sum_{j!=i} exp(t v_phy_j . v_beha_i) ]
//! ```
//!
//! The positive pair is *excluded* from its denominator (leave-one-out), so
//! unlike InfoNCE the loss is unbounded below; strongly separated batches
//! drive it negative. Both terms need at least two samples.

use crate::error::{Error, Result};
use crate::hopfield::hopfield_op_tape;
use crate::tape::{Tape, Var};

/// Prototype-enhanced batch, plus everything the later stages need.
pub struct PclBatch {
    /// Per-sample enhanced physiological view, unpooled `[K x D]`.
    pub z_tilde_phy: Vec<Var>,
    /// Per-sample enhanced behavioral view, unpooled `[K x D]`.
    pub z_tilde_beha: Vec<Var>,
    /// Pooled unit-norm physiological embeddings, stacked `[N x D]`.
    pub pooled_phy: Var,
    /// Pooled unit-norm behavioral embeddings, stacked `[N x D]`.
    pub pooled_beha: Var,
    /// Samples whose enhanced views cancelled to zero and fell back to the
    /// pre-enhancement pooled embedding.
    pub degenerate: usize,
}

/// Enhance one view and pool it to a unit row.
///
/// Returns `(z_tilde, pooled_unit, degenerate)`. If `z + z_proto` pools to an
/// exactly zero vector the pre-enhancement pooled `z` is used instead, and
/// the sample is flagged degenerate.
pub fn enhance_pool(tape: &mut Tape, z: Var, z_proto: Var) -> Result<(Var, Var, bool)> {
    let z_tilde = tape.add(z, z_proto)?;
    let mut pooled = tape.mean_rows(z_tilde)?;
    let mut degenerate = false;
    if tape.value(pooled).as_slice().iter().all(|v| *v == 0.0) {
        degenerate = true;
        pooled = tape.mean_rows(z)?;
    }
    let unit = tape.normalize_rows(pooled);
    Ok((z_tilde, unit, degenerate))
}

/// Batched retrieval: every row of `queries` retrieves from `store` (keys
/// and content alike) and is re-normalized to unit length.
pub fn retrieve(tape: &mut Tape, queries: Var, store: Var, beta: f64) -> Result<Var> {
    if tape.value(store).rows() < 2 {
        return Err(Error::parameter(
            "pcl_retrieve",
            format!("store needs at least 2 rows, got {}", tape.value(store).rows()),
        ));
    }
    let mixed = hopfield_op_tape(tape, queries, store, store, beta)?;
    Ok(tape.normalize_rows(mixed))
}

/// The four cross-view retrievals of one batch.
pub struct RetrievedBatch {
    pub u_from_phy: Var,
    pub u_from_beha: Var,
    pub v_from_phy: Var,
    pub v_from_beha: Var,
}

/// Run all four retrievals from the two pooled stores.
pub fn retrieve_all(
    tape: &mut Tape,
    pooled_phy: Var,
    pooled_beha: Var,
    beta: f64,
) -> Result<RetrievedBatch> {
    Ok(RetrievedBatch {
        u_from_phy: retrieve(tape, pooled_phy, pooled_phy, beta)?,
        u_from_beha: retrieve(tape, pooled_beha, pooled_phy, beta)?,
        v_from_phy: retrieve(tape, pooled_phy, pooled_beha, beta)?,
        v_from_beha: retrieve(tape, pooled_beha, pooled_beha, beta)?,
    })
}

/// `-1/N sum_i [ M_ii - ln sum_{j!=i} exp(M_ij) ]` for a square score
/// matrix: the row-wise leave-one-out negative log ratio.
fn loo_nll_rows(tape: &mut Tape, m: Var) -> Result<Var> {
    let n = tape.value(m).rows();
    if tape.value(m).cols() != n || n < 2 {
        return Err(Error::parameter(
            "semloob_loss",
            format!(
                "scores must be square with side >= 2, got {}x{}",
                n,
                tape.value(m).cols()
            ),
        ));
    }
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let row = tape.slice_rows(m, i, 1)?;
        let diag = tape.slice_cols(row, i, 1)?;
        let rest = if i == 0 {
            tape.slice_cols(row, 1, n - 1)?
        } else if i == n - 1 {
            tape.slice_cols(row, 0, n - 1)?
        } else {
            let left = tape.slice_cols(row, 0, i)?;
            let right = tape.slice_cols(row, i + 1, n - 1 - i)?;
            tape.concat_cols(&[left, right])?
        };
        let denom = tape.lse(rest, 1.0)?;
        let neg = tape.scale(denom, -1.0)?;
        terms.push(tape.add(diag, neg)?);
    }
    let sum = tape.sum_scalars(&terms)?;
    tape.scale(sum, -1.0 / n as f64)
}

/// Leave-one-out contrastive loss over the four retrieved sets.
///
/// The first term is row-wise (negatives vary over the behavioral index),
/// the second column-wise (negatives vary over the physiological index),
/// matching the asymmetric denominators above.
pub fn semloob_loss(tape: &mut Tape, r: &RetrievedBatch, tau_inv: f64) -> Result<Var> {
    if !(tau_inv > 0.0) || !tau_inv.is_finite() {
        return Err(Error::parameter(
            "semloob_loss",
            format!("inverse temperature must be positive and finite, got {tau_inv}"),
        ));
    }
    let u_scores = tape.matmul_nt(r.u_from_phy, r.u_from_beha)?;
    let u_scores = tape.scale(u_scores, tau_inv)?;
    let u_term = loo_nll_rows(tape, u_scores)?;

    // Column-wise LOO on V_phy . V_beha^T == row-wise on V_beha . V_phy^T.
    let v_scores = tape.matmul_nt(r.v_from_beha, r.v_from_phy)?;
    let v_scores = tape.scale(v_scores, tau_inv)?;
    let v_term = loo_nll_rows(tape, v_scores)?;

    tape.add(u_term, v_term)
}

/// Full module forward for one batch: enhance both views of every sample,
/// retrieve, and score. `z_*[i]` and `z_proto_*[i]` are the per-sample
/// `[K x D]` embeddings and prototype mixtures already on the tape.
pub fn pcl_forward(
    tape: &mut Tape,
    z_phy: &[Var],
    z_proto_phy: &[Var],
    z_beha: &[Var],
    z_proto_beha: &[Var],
    beta: f64,
    tau_inv: f64,
) -> Result<(Var, PclBatch)> {
    let n = z_phy.len();
    if n < 2 {
        return Err(Error::parameter(
            "pcl_forward",
            format!("batch must hold at least 2 samples, got {n}"),
        ));
    }
    if z_proto_phy.len() != n || z_beha.len() != n || z_proto_beha.len() != n {
        return Err(Error::parameter("pcl_forward", "per-sample lists must have equal length"));
    }

    let mut z_tilde_phy = Vec::with_capacity(n);
    let mut z_tilde_beha = Vec::with_capacity(n);
    let mut pooled_phy_rows = Vec::with_capacity(n);
    let mut pooled_beha_rows = Vec::with_capacity(n);
    let mut degenerate = 0;
    for i in 0..n {
        let (zt, pooled, degen) = enhance_pool(tape, z_phy[i], z_proto_phy[i])?;
        z_tilde_phy.push(zt);
        pooled_phy_rows.push(pooled);
        degenerate += degen as usize;
        let (zt, pooled, degen) = enhance_pool(tape, z_beha[i], z_proto_beha[i])?;
        z_tilde_beha.push(zt);
        pooled_beha_rows.push(pooled);
        degenerate += degen as usize;
    }
    let pooled_phy = tape.concat_rows(&pooled_phy_rows)?;
    let pooled_beha = tape.concat_rows(&pooled_beha_rows)?;

    let retrieved = retrieve_all(tape, pooled_phy, pooled_beha, beta)?;
    let loss = semloob_loss(tape, &retrieved, tau_inv)?;
    Ok((loss, PclBatch { z_tilde_phy, z_tilde_beha, pooled_phy, pooled_beha, degenerate }))
}
