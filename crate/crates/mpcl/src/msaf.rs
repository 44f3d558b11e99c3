//! Modality encoders and multi-scale associative fusion.
//!
//! Each raw modality vector is lifted by a small encoder (affine -> tanh ->
//! affine, reshaped to a sequence of `D`-dimensional rows). The physiological
//! side then fuses every auxiliary modality into the primary one with the
//! Hopfield operator at several inverse temperatures: sharp scales align
//! fine-grained rows, soft scales mix broad context. Per auxiliary `m` and
//! scale `beta`:
//!
//! ```text
//! h_beta      = hopfield(h_pri, h_m, h_m, beta)        (one per scale)
//! z_phy^m     = h_pri + concat_cols(h_beta ...) W_proj (residual projection)
//! z_phy       = concat_rows(z_phy^m ...)               (declared aux order)
//! ```
//!
//! The behavioral modality is encoded directly to `K = |aux| * C` rows so the
//! two views are row-aligned downstream. Disabling fusion (the "fusion off"
//! ablation) swaps each residual projection for a plain row concatenation
//! `[h_pri; h_m]`, keeping encoders trainable while removing the associative
//! mixing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopfield::hopfield_op_tape;
use crate::numeric::{Matrix, Rng};
use crate::tape::{ParamSet, SlotId, Tape, Var};

/// Where a modality sits in the fusion graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// The physiological anchor every auxiliary modality is fused into.
    Primary,
    /// Physiological modalities fused into the primary one.
    Auxiliary,
    /// The single behavioral modality forming the second view.
    Behavioral,
}

/// Declaration of one input modality.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    pub name: String,
    /// Length of the raw feature vector in sample files (manifest key `dim`).
    #[serde(rename = "dim")]
    pub raw_dim: usize,
    /// Channel count of the upstream recording; metadata only.
    pub channels: usize,
    pub role: Role,
}

/// Check the modality set as a whole: exactly one primary, at least one
/// auxiliary, exactly one behavioral, unique names, nonzero dims.
pub fn validate_modalities(mods: &[ModalityConfig]) -> Result<()> {
    let mut primary = 0;
    let mut auxiliary = 0;
    let mut behavioral = 0;
    for (i, m) in mods.iter().enumerate() {
        if m.raw_dim == 0 {
            return Err(Error::Config(format!("modality {:?} has raw_dim 0", m.name)));
        }
        if m.channels == 0 {
            return Err(Error::Config(format!("modality {:?} has channels 0", m.name)));
        }
        if mods[..i].iter().any(|o| o.name == m.name) {
            return Err(Error::Config(format!("duplicate modality name {:?}", m.name)));
        }
        match m.role {
            Role::Primary => primary += 1,
            Role::Auxiliary => auxiliary += 1,
            Role::Behavioral => behavioral += 1,
        }
    }
    if primary != 1 {
        return Err(Error::Config(format!("need exactly one primary modality, found {primary}")));
    }
    if auxiliary == 0 {
        return Err(Error::Config("need at least one auxiliary modality".into()));
    }
    if behavioral != 1 {
        return Err(Error::Config(format!(
            "need exactly one behavioral modality, found {behavioral}"
        )));
    }
    Ok(())
}

/// Check a scale set: nonempty, strictly increasing, all positive.
pub fn validate_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::Config("scale set must be nonempty".into()));
    }
    for (i, b) in scales.iter().enumerate() {
        if !(*b > 0.0) || !b.is_finite() {
            return Err(Error::Config(format!("scale {b} is not a positive finite number")));
        }
        if i > 0 && scales[i - 1] >= *b {
            return Err(Error::Config("scales must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// Parameter slots of one modality encoder.
#[derive(Debug, Clone)]
pub struct EncoderSlots {
    pub w1: SlotId,
    pub b1: SlotId,
    pub w2: SlotId,
    pub b2: SlotId,
    /// Rows of the output sequence (`C` for physiological, `K` behavioral).
    pub out_rows: usize,
    pub embed_dim: usize,
    pub raw_dim: usize,
}

/// Register one encoder's parameters under `prefix`.
pub fn register_encoder(
    params: &mut ParamSet,
    prefix: &str,
    raw_dim: usize,
    out_rows: usize,
    embed_dim: usize,
    rng: &mut Rng,
) -> Result<EncoderSlots> {
    let w1 = params.add(
        format!("{prefix}.w1"),
        rng.normal_matrix(raw_dim, embed_dim, 1.0 / (raw_dim as f64).sqrt()),
    )?;
    let b1 = params.add(format!("{prefix}.b1"), Matrix::zeros(1, embed_dim))?;
    let w2 = params.add(
        format!("{prefix}.w2"),
        rng.normal_matrix(embed_dim, out_rows * embed_dim, 1.0 / (embed_dim as f64).sqrt()),
    )?;
    let b2 = params.add(format!("{prefix}.b2"), Matrix::zeros(1, out_rows * embed_dim))?;
    Ok(EncoderSlots { w1, b1, w2, b2, out_rows, embed_dim, raw_dim })
}

/// Encode one raw feature vector to an `[out_rows x D]` embedding.
pub fn encode(tape: &mut Tape, params: &ParamSet, enc: &EncoderSlots, x: &[f64]) -> Result<Var> {
    if x.len() != enc.raw_dim {
        return Err(Error::Dimension {
            op: "encode",
            left_rows: 1,
            left_cols: x.len(),
            right_rows: enc.raw_dim,
            right_cols: enc.embed_dim,
        });
    }
    let x = tape.constant(Matrix::row_vector(x)?);
    let w1 = tape.param(params, enc.w1);
    let b1 = tape.param(params, enc.b1);
    let w2 = tape.param(params, enc.w2);
    let b2 = tape.param(params, enc.b2);
    let h = tape.matmul(x, w1)?;
    let h = tape.add(h, b1)?;
    let h = tape.tanh(h);
    let y = tape.matmul(h, w2)?;
    let y = tape.add(y, b2)?;
    tape.reshape(y, enc.out_rows, enc.embed_dim)
}

/// One fusion step at a single scale: retrieve from the auxiliary rows using
/// the primary rows as queries.
pub fn fuse_scale(tape: &mut Tape, h_pri: Var, h_m: Var, beta: f64) -> Result<Var> {
    hopfield_op_tape(tape, h_pri, h_m, h_m, beta)
}

/// Fuse one auxiliary modality into the primary at every scale, project the
/// concatenated retrievals back to `D`, and add the primary residually.
pub fn fuse_modality(
    tape: &mut Tape,
    params: &ParamSet,
    h_pri: Var,
    h_m: Var,
    scales: &[f64],
    w_proj: SlotId,
) -> Result<Var> {
    validate_scales(scales)?;
    let mut per_scale = Vec::with_capacity(scales.len());
    for beta in scales {
        per_scale.push(fuse_scale(tape, h_pri, h_m, *beta)?);
    }
    let cat = tape.concat_cols(&per_scale)?;
    let w = tape.param(params, w_proj);
    let proj = tape.matmul(cat, w)?;
    tape.add(h_pri, proj)
}

/// Parameter slots and configuration of the full fusion front end.
#[derive(Debug, Clone)]
pub struct MsafLayout {
    pub primary: EncoderSlots,
    /// Auxiliary encoders plus their projection matrices, in declared order.
    pub auxiliaries: Vec<(String, EncoderSlots, SlotId)>,
    pub behavioral: EncoderSlots,
    pub primary_name: String,
    pub behavioral_name: String,
    pub scales: Vec<f64>,
    /// When false, fusion degrades to row concatenation (ablation switch).
    pub fusion_enabled: bool,
    pub seq_len: usize,
    pub embed_dim: usize,
}

impl MsafLayout {
    /// Rows of the behavioral view: `K = |aux| * C`.
    pub fn behavioral_rows(&self) -> usize {
        self.auxiliaries.len() * self.seq_len
    }

    /// Rows of the physiological view (depends on the ablation switch).
    pub fn physiological_rows(&self) -> usize {
        if self.fusion_enabled {
            self.auxiliaries.len() * self.seq_len
        } else {
            2 * self.auxiliaries.len() * self.seq_len
        }
    }
}

/// Register encoders and fusion projections for a validated modality set.
pub fn register_msaf(
    params: &mut ParamSet,
    mods: &[ModalityConfig],
    seq_len: usize,
    embed_dim: usize,
    scales: &[f64],
    fusion_enabled: bool,
    rng: &mut Rng,
) -> Result<MsafLayout> {
    validate_modalities(mods)?;
    validate_scales(scales)?;
    if seq_len == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let n_aux = mods.iter().filter(|m| matches!(m.role, Role::Auxiliary)).count();
    let k = n_aux * seq_len;

    let primary_cfg = mods.iter().find(|m| matches!(m.role, Role::Primary)).unwrap();
    let primary = register_encoder(
        params,
        &format!("enc.{}", primary_cfg.name),
        primary_cfg.raw_dim,
        seq_len,
        embed_dim,
        rng,
    )?;

    let mut auxiliaries = Vec::new();
    for m in mods.iter().filter(|m| matches!(m.role, Role::Auxiliary)) {
        let enc = register_encoder(
            params,
            &format!("enc.{}", m.name),
            m.raw_dim,
            seq_len,
            embed_dim,
            rng,
        )?;
        let w_proj = params.add(
            format!("fuse.{}.w_proj", m.name),
            rng.normal_matrix(
                scales.len() * embed_dim,
                embed_dim,
                1.0 / ((scales.len() * embed_dim) as f64).sqrt(),
            ),
        )?;
        auxiliaries.push((m.name.clone(), enc, w_proj));
    }

    let behavioral_cfg = mods.iter().find(|m| matches!(m.role, Role::Behavioral)).unwrap();
    let behavioral = register_encoder(
        params,
        &format!("enc.{}", behavioral_cfg.name),
        behavioral_cfg.raw_dim,
        k,
        embed_dim,
        rng,
    )?;

    Ok(MsafLayout {
        primary,
        auxiliaries,
        behavioral,
        primary_name: primary_cfg.name.clone(),
        behavioral_name: behavioral_cfg.name.clone(),
        scales: scales.to_vec(),
        fusion_enabled,
        seq_len,
        embed_dim,
    })
}

/// Encode and fuse one sample's features into the two views
/// `(z_phy, z_beha)`.
pub fn msaf_forward(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &MsafLayout,
    features: &BTreeMap<String, Vec<f64>>,
) -> Result<(Var, Var)> {
    let get = |name: &str| -> Result<&Vec<f64>> {
        features.get(name).ok_or_else(|| Error::Contract {
            op: "msaf_forward",
            msg: format!("features are missing modality {name:?}"),
        })
    };

    let h_pri = encode(tape, params, &layout.primary, get(&layout.primary_name)?)?;
    let mut fused = Vec::with_capacity(layout.auxiliaries.len());
    for (name, enc, w_proj) in &layout.auxiliaries {
        let h_m = encode(tape, params, enc, get(name)?)?;
        let z_m = if layout.fusion_enabled {
            fuse_modality(tape, params, h_pri, h_m, &layout.scales, *w_proj)?
        } else {
            tape.concat_rows(&[h_pri, h_m])?
        };
        fused.push(z_m);
    }
    let z_phy = if fused.len() == 1 { fused[0] } else { tape.concat_rows(&fused)? };
    let z_beha = encode(tape, params, &layout.behavioral, get(&layout.behavioral_name)?)?;
    Ok((z_phy, z_beha))
}
