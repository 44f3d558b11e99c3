//! Hierarchical semantic compression and the classification head.
//!
//! The two prototype-enhanced views are row-concatenated to a `[2K x D]`
//! sequence and pushed through `L` compression blocks. Each block first
//! abstracts every row against a learned slot memory (a Hopfield lookup with
//! separate key and content matrices), then mixes rows with multi-head
//! self-attention; both stages are residual:
//!
//! ```text
//! h_tilde = hopfield(h, w_lookup, w_content, beta) + h
//! h_out   = MHSA(h_tilde) + h_tilde
//! ```
//!
//! Slot capacity shrinks geometrically across blocks, from the prototype
//! count `M` down to the number of emotions `E`, so later blocks are forced
//! to express the sequence in increasingly class-like terms. The first
//! block's content matrix starts as a copy of the physiological prototype
//! memories, giving compression a semantically meaningful starting
//! vocabulary. A mean-pool plus affine-softmax head turns the final rows
//! into an emotion distribution.

use crate::error::{Error, Result};
use crate::hopfield::hopfield_op_tape;
use crate::numeric::{Matrix, Rng};
use crate::tape::{ParamSet, SlotId, Tape, Var};

/// Geometric slot schedule from `m` down to `e` over `l` blocks.
///
/// The first entry is exactly `m`, the last exactly `e`, interior values are
/// rounded geometric interpolants, and the sequence is non-increasing. A
/// single-block schedule is only valid when `m == e`.
pub fn slot_schedule(m: usize, e: usize, l: usize) -> Result<Vec<usize>> {
    if l == 0 {
        return Err(Error::Config("slot schedule needs at least one block".into()));
    }
    if m == 0 || e == 0 {
        return Err(Error::Config("slot schedule endpoints must be positive".into()));
    }
    if e > m {
        return Err(Error::Config(format!(
            "slot schedule must shrink: start {m} is below end {e}"
        )));
    }
    if l == 1 {
        if m != e {
            return Err(Error::Config(format!(
                "single-block schedule requires equal endpoints, got {m} and {e}"
            )));
        }
        return Ok(vec![m]);
    }
    let ratio = e as f64 / m as f64;
    let mut caps = Vec::with_capacity(l);
    for i in 0..l {
        let t = i as f64 / (l - 1) as f64;
        let v = (m as f64 * ratio.powf(t)).round() as usize;
        let prev = caps.last().copied().unwrap_or(m);
        caps.push(v.min(prev).max(e));
    }
    caps[0] = m;
    caps[l - 1] = e;
    Ok(caps)
}

/// Parameter slots of one attention stage.
#[derive(Debug, Clone)]
pub struct AttentionSlots {
    pub wq: SlotId,
    pub wk: SlotId,
    pub wv: SlotId,
    pub wo: SlotId,
    pub heads: usize,
    pub embed_dim: usize,
}

/// Parameter slots of one compression block.
#[derive(Debug, Clone)]
pub struct BlockSlots {
    pub w_lookup: SlotId,
    pub w_content: SlotId,
    pub attn: AttentionSlots,
    pub capacity: usize,
}

/// Parameter slots of the whole compression stack plus classifier head.
#[derive(Debug, Clone)]
pub struct HscLayout {
    pub blocks: Vec<BlockSlots>,
    pub head_w: SlotId,
    pub head_b: SlotId,
    pub embed_dim: usize,
    pub emotions: usize,
    /// Lookup sharpness, `1/sqrt(D)` by convention.
    pub beta: f64,
}

fn register_attention(
    params: &mut ParamSet,
    prefix: &str,
    embed_dim: usize,
    heads: usize,
    rng: &mut Rng,
) -> Result<AttentionSlots> {
    if heads == 0 || embed_dim % heads != 0 {
        return Err(Error::Config(format!(
            "embedding width {embed_dim} must be divisible by head count {heads}"
        )));
    }
    let scale = 1.0 / (embed_dim as f64).sqrt();
    let mat = |rng: &mut Rng| rng.normal_matrix(embed_dim, embed_dim, scale);
    let wq = params.add(format!("{prefix}.wq"), mat(rng))?;
    let wk = params.add(format!("{prefix}.wk"), mat(rng))?;
    let wv = params.add(format!("{prefix}.wv"), mat(rng))?;
    let wo = params.add(format!("{prefix}.wo"), mat(rng))?;
    Ok(AttentionSlots { wq, wk, wv, wo, heads, embed_dim })
}

/// Register the compression stack. Block 1's content matrix is initialized
/// as a verbatim copy of `bank_memory` (the physiological prototype bank);
/// everything else is seeded-random. The classifier head starts at zero so
/// an untrained model predicts the uniform distribution.
pub fn register_hsc(
    params: &mut ParamSet,
    bank_memory: &Matrix,
    schedule: &[usize],
    heads: usize,
    emotions: usize,
    rng: &mut Rng,
) -> Result<HscLayout> {
    let embed_dim = bank_memory.cols();
    if let Some(first) = schedule.first() {
        if *first != bank_memory.rows() {
            return Err(Error::Config(format!(
                "schedule starts at {first} slots but the bank holds {} prototypes",
                bank_memory.rows()
            )));
        }
    }
    for w in schedule.windows(2) {
        if w[1] > w[0] {
            return Err(Error::Config("slot schedule must be non-increasing".into()));
        }
    }
    if emotions == 0 {
        return Err(Error::Config("need at least one emotion".into()));
    }

    let bound = 1.0 / (embed_dim as f64).sqrt();
    let mut blocks = Vec::with_capacity(schedule.len());
    for (l, capacity) in schedule.iter().enumerate() {
        let uniform = |rng: &mut Rng| {
            let mut m = Matrix::zeros(*capacity, embed_dim);
            for v in m.as_mut_slice().iter_mut() {
                *v = rng.uniform(-bound, bound);
            }
            m
        };
        let w_lookup = params.add(format!("hsc.{l}.w_lookup"), uniform(rng))?;
        let content = if l == 0 { bank_memory.clone() } else { uniform(rng) };
        let w_content = params.add(format!("hsc.{l}.w_content"), content)?;
        let attn = register_attention(params, &format!("hsc.{l}.attn"), embed_dim, heads, rng)?;
        blocks.push(BlockSlots { w_lookup, w_content, attn, capacity: *capacity });
    }

    let head_w = params.add("head.w", Matrix::zeros(embed_dim, emotions))?;
    let head_b = params.add("head.b", Matrix::zeros(1, emotions))?;
    Ok(HscLayout {
        blocks,
        head_w,
        head_b,
        embed_dim,
        emotions,
        beta: 1.0 / (embed_dim as f64).sqrt(),
    })
}

/// Multi-head scaled dot-product self-attention, no biases, no dropout.
pub fn mhsa(tape: &mut Tape, params: &ParamSet, attn: &AttentionSlots, h: Var) -> Result<Var> {
    let wq = tape.param(params, attn.wq);
    let wk = tape.param(params, attn.wk);
    let wv = tape.param(params, attn.wv);
    let wo = tape.param(params, attn.wo);
    let q = tape.matmul(h, wq)?;
    let k = tape.matmul(h, wk)?;
    let v = tape.matmul(h, wv)?;
    let dh = attn.embed_dim / attn.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut per_head = Vec::with_capacity(attn.heads);
    for head in 0..attn.heads {
        let qh = tape.slice_cols(q, head * dh, dh)?;
        let kh = tape.slice_cols(k, head * dh, dh)?;
        let vh = tape.slice_cols(v, head * dh, dh)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let weights = tape.softmax_rows(scores, scale)?;
        per_head.push(tape.matmul(weights, vh)?);
    }
    let cat = if per_head.len() == 1 { per_head[0] } else { tape.concat_cols(&per_head)? };
    tape.matmul(cat, wo)
}

/// One compression block: residual slot lookup, then residual attention.
pub fn block_forward(
    tape: &mut Tape,
    params: &ParamSet,
    block: &BlockSlots,
    h: Var,
    beta: f64,
) -> Result<Var> {
    let w_lookup = tape.param(params, block.w_lookup);
    let w_content = tape.param(params, block.w_content);
    let looked_up = hopfield_op_tape(tape, h, w_lookup, w_content, beta)?;
    let h_tilde = tape.add(looked_up, h)?;
    let attended = mhsa(tape, params, &block.attn, h_tilde)?;
    tape.add(attended, h_tilde)
}

/// Concatenate the two enhanced views and run the block stack. With zero
/// blocks this is a plain concatenation (the compression-off ablation).
pub fn hsc_forward(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &HscLayout,
    z_tilde_phy: Var,
    z_tilde_beha: Var,
) -> Result<Var> {
    let mut h = tape.concat_rows(&[z_tilde_phy, z_tilde_beha])?;
    for block in &layout.blocks {
        h = block_forward(tape, params, block, h, layout.beta)?;
    }
    Ok(h)
}

/// Mean-pool the final rows and map them to an emotion distribution.
pub fn predict(tape: &mut Tape, params: &ParamSet, layout: &HscLayout, h: Var) -> Result<Var> {
    let pooled = tape.mean_rows(h)?;
    let w = tape.param(params, layout.head_w);
    let b = tape.param(params, layout.head_b);
    let logits = tape.matmul(pooled, w)?;
    let logits = tape.add(logits, b)?;
    tape.softmax_rows(logits, 1.0)
}
