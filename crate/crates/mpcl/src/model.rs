//! Whole-model assembly: configuration profiles, parameter registration,
//! the training forward pass combining the three losses, and forward-only
//! prediction.
//!
//! Layer order (also the checkpoint block order): modality encoders and
//! fusion projections, the two prototype banks, the compression stack, the
//! classifier head. The relation-distillation teachers are semantic
//! correlation matrices computed outside the tape from the current bank
//! parameters - they supervise without receiving gradient, so each training
//! step distills from a frozen snapshot of itself.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::hsc::{self, HscLayout};
use crate::metrics::{task_loss_tape, EmotionDistribution};
use crate::msaf::{self, ModalityConfig, MsafLayout};
use crate::numeric::{Matrix, Rng};
use crate::pcl;
use crate::prototype::{self, BankSlots};
use crate::tape::{ParamSet, Tape, Var};

/// Module switches; `true` means the module is active. Disabling `msaf`
/// replaces associative fusion with concatenation, `prd` and `pcl` drop
/// their loss terms (and `pcl` the prototype enhancement), `hsc` empties the
/// compression stack.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub msaf: bool,
    pub prd: bool,
    pub pcl: bool,
    pub hsc: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags { msaf: true, prd: true, pcl: true, hsc: true }
    }
}

impl AblationFlags {
    /// Apply a `module=off` (or `=on`) override from the CLI.
    pub fn set(&mut self, module: &str, enabled: bool) -> Result<()> {
        match module {
            "msaf" => self.msaf = enabled,
            "prd" => self.prd = enabled,
            "pcl" => self.pcl = enabled,
            "hsc" => self.hsc = enabled,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation target {other:?} (expected msaf, prd, pcl, or hsc)"
                )))
            }
        }
        Ok(())
    }
}

/// Architecture hyperparameters (the training loop adds optimizer knobs on
/// top of these).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding width `D`.
    pub embed_dim: usize,
    /// Rows per physiological encoder output (`C`).
    pub seq_len: usize,
    /// Prototypes per bank (`M`).
    pub prototypes: usize,
    /// Inverse temperatures of the multi-scale fusion.
    pub scales: Vec<f64>,
    /// Temperature of the semantic correlation softmax.
    pub tau_dist: f64,
    /// Inverse temperature of the co-occurrence retrievals.
    pub beta_pcl: f64,
    /// Inverse temperature of the contrastive scores.
    pub tau_pcl_inv: f64,
    /// Compression blocks (`L`).
    pub hsc_blocks: usize,
    /// Attention heads per block.
    pub hsc_heads: usize,
    /// Slot capacity of the final block.
    pub hsc_min_slots: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Small profile for laptops and CI: every structural element present,
    /// sizes cut far down.
    pub fn desk() -> ModelConfig {
        ModelConfig {
            embed_dim: 32,
            seq_len: 4,
            prototypes: 16,
            scales: vec![8.0, 14.3, 22.0],
            tau_dist: 0.07,
            beta_pcl: 14.3,
            tau_pcl_inv: 50.0,
            hsc_blocks: 3,
            hsc_heads: 4,
            hsc_min_slots: 10,
        }
    }

    /// Full-scale profile matching the reference experiments.
    pub fn paper() -> ModelConfig {
        ModelConfig {
            embed_dim: 128,
            seq_len: 4,
            prototypes: 100,
            scales: vec![8.0, 14.3, 22.0],
            tau_dist: 0.07,
            beta_pcl: 14.3,
            tau_pcl_inv: 50.0,
            hsc_blocks: 10,
            hsc_heads: 4,
            hsc_min_slots: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.seq_len == 0 || self.prototypes == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if self.hsc_heads == 0 || self.embed_dim % self.hsc_heads != 0 {
            return Err(Error::Config(format!(
                "embedding width {} must be divisible by head count {}",
                self.embed_dim, self.hsc_heads
            )));
        }
        if self.hsc_blocks == 0 {
            return Err(Error::Config("need at least one compression block".into()));
        }
        if self.hsc_min_slots == 0 || self.hsc_min_slots > self.prototypes {
            return Err(Error::Config(format!(
                "final slot capacity {} must lie in [1, {}]",
                self.hsc_min_slots, self.prototypes
            )));
        }
        msaf::validate_scales(&self.scales)?;
        for (name, v) in
            [("tau_dist", self.tau_dist), ("beta_pcl", self.beta_pcl), ("tau_pcl_inv", self.tau_pcl_inv)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Slot handles of a registered model.
#[derive(Debug, Clone)]
pub struct ModelLayout {
    pub msaf: MsafLayout,
    pub bank_phy: BankSlots,
    pub bank_beha: BankSlots,
    pub hsc: HscLayout,
    pub config: ModelConfig,
    pub ablation: AblationFlags,
    pub emotions: usize,
}

/// Register every parameter block in checkpoint order and return the layout.
pub fn register_model(
    params: &mut ParamSet,
    config: &ModelConfig,
    ablation: AblationFlags,
    modalities: &[ModalityConfig],
    emotions: usize,
    rng: &mut Rng,
) -> Result<ModelLayout> {
    config.validate()?;
    if emotions < 2 {
        return Err(Error::Config(format!("need at least 2 emotions, got {emotions}")));
    }
    let msaf = msaf::register_msaf(
        params,
        modalities,
        config.seq_len,
        config.embed_dim,
        &config.scales,
        ablation.msaf,
        rng,
    )?;
    let bank_phy = prototype::register_bank(params, "bank.phy", config.prototypes, config.embed_dim, rng)?;
    let bank_beha =
        prototype::register_bank(params, "bank.beha", config.prototypes, config.embed_dim, rng)?;
    let schedule = if ablation.hsc {
        hsc::slot_schedule(config.prototypes, config.hsc_min_slots, config.hsc_blocks)?
    } else {
        Vec::new()
    };
    let bank_memory = params.value(bank_phy.w_memory).clone();
    let hsc = hsc::register_hsc(params, &bank_memory, &schedule, config.hsc_heads, emotions, rng)?;
    Ok(ModelLayout { msaf, bank_phy, bank_beha, hsc, config: config.clone(), ablation, emotions })
}

/// Gradient-detached relation-distillation teachers: the two semantic
/// correlation matrices, frozen from the parameter values they were computed
/// at.
#[derive(Debug, Clone)]
pub struct TeacherSnapshot {
    pub s_phy: Matrix,
    pub s_beha: Matrix,
}

/// Capture the teachers at the current parameter values.
pub fn snapshot_teachers(params: &ParamSet, layout: &ModelLayout) -> Result<TeacherSnapshot> {
    Ok(TeacherSnapshot {
        s_phy: prototype::semantic_correlation(params, &layout.bank_phy, layout.config.tau_dist)?,
        s_beha: prototype::semantic_correlation(params, &layout.bank_beha, layout.config.tau_dist)?,
    })
}

/// Losses and diagnostics of one training batch.
pub struct BatchOutput {
    /// The differentiable total objective.
    pub total: Var,
    /// Per-sample predictions, each `1 x E`, still on the tape.
    pub preds: Vec<Var>,
    pub task: f64,
    pub prd: f64,
    pub semloob: f64,
    /// Samples whose enhanced embedding pooled to zero (fell back).
    pub degenerate: usize,
}

/// Full training forward for one batch.
///
/// `teachers` supplies the detached distillation targets; pass `None` to
/// snapshot the current parameters (the normal training path - each step
/// distills from itself at the step's starting point).
pub fn batch_forward(
    tape: &mut Tape,
    params: &ParamSet,
    layout: &ModelLayout,
    batch: &[&Sample],
    teachers: Option<&TeacherSnapshot>,
) -> Result<BatchOutput> {
    if batch.is_empty() {
        return Err(Error::parameter("batch_forward", "empty batch"));
    }
    if layout.ablation.pcl && batch.len() < 2 {
        return Err(Error::parameter(
            "batch_forward",
            format!("the contrastive loss needs at least 2 samples, got {}", batch.len()),
        ));
    }
    let need_banks = layout.ablation.prd || layout.ablation.pcl;

    let mut z_phy = Vec::with_capacity(batch.len());
    let mut z_beha = Vec::with_capacity(batch.len());
    let mut zp_phy = Vec::with_capacity(batch.len());
    let mut zp_beha = Vec::with_capacity(batch.len());
    let mut a_phy = Vec::with_capacity(batch.len());
    let mut a_beha = Vec::with_capacity(batch.len());
    for sample in batch {
        let (p, b) = msaf::msaf_forward(tape, params, &layout.msaf, &sample.features)?;
        if need_banks {
            let (a, zp) = prototype::address(tape, params, &layout.bank_phy, p)?;
            a_phy.push(a);
            zp_phy.push(zp);
            let (a, zp) = prototype::address(tape, params, &layout.bank_beha, b)?;
            a_beha.push(a);
            zp_beha.push(zp);
        }
        z_phy.push(p);
        z_beha.push(b);
    }

    // Relation distillation against the detached teachers.
    let mut prd_val = 0.0;
    let mut prd_term = None;
    if layout.ablation.prd {
        let snapshot;
        let teachers = match teachers {
            Some(t) => t,
            None => {
                snapshot = snapshot_teachers(params, layout)?;
                &snapshot
            }
        };
        let loss = prototype::prd_loss(tape, &a_phy, &a_beha, &teachers.s_phy, &teachers.s_beha)?;
        prd_val = tape.scalar(loss)?;
        prd_term = Some(loss);
    }

    // Prototype enhancement plus the contrastive term; without it the raw
    // fused views feed the compressor directly.
    let mut semloob_val = 0.0;
    let mut semloob_term = None;
    let mut degenerate = 0;
    let (h_phy, h_beha): (Vec<Var>, Vec<Var>) = if layout.ablation.pcl {
        let (loss, pcl_batch) = pcl::pcl_forward(
            tape,
            &z_phy,
            &zp_phy,
            &z_beha,
            &zp_beha,
            layout.config.beta_pcl,
            layout.config.tau_pcl_inv,
        )?;
        semloob_val = tape.scalar(loss)?;
        semloob_term = Some(loss);
        degenerate = pcl_batch.degenerate;
        (pcl_batch.z_tilde_phy, pcl_batch.z_tilde_beha)
    } else {
        (z_phy, z_beha)
    };

    let mut preds = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for (i, sample) in batch.iter().enumerate() {
        let h = hsc::hsc_forward(tape, params, &layout.hsc, h_phy[i], h_beha[i])?;
        preds.push(hsc::predict(tape, params, &layout.hsc, h)?);
        targets.push(sample.label.clone());
    }
    let task = task_loss_tape(tape, &targets, &preds)?;
    let task_val = tape.scalar(task)?;

    let mut total = task;
    if let Some(t) = prd_term {
        total = tape.add(total, t)?;
    }
    if let Some(t) = semloob_term {
        total = tape.add(total, t)?;
    }
    let total_val = tape.scalar(total)?;
    if !total_val.is_finite() {
        return Err(Error::Training {
            context: "batch_forward".into(),
            msg: format!(
                "non-finite loss (task {task_val}, prd {prd_val}, semloob {semloob_val})"
            ),
        });
    }
    Ok(BatchOutput { total, preds, task: task_val, prd: prd_val, semloob: semloob_val, degenerate })
}

/// Forward-only prediction for one sample (no batch stores, no losses).
/// Deterministic: equal parameters and features give equal outputs.
pub fn predict_sample(
    params: &ParamSet,
    layout: &ModelLayout,
    sample: &Sample,
) -> Result<EmotionDistribution> {
    let mut tape = Tape::new(params);
    let (z_phy, z_beha) = msaf::msaf_forward(&mut tape, params, &layout.msaf, &sample.features)?;
    let (h_phy, h_beha) = if layout.ablation.pcl {
        let (_, zp_phy) = prototype::address(&mut tape, params, &layout.bank_phy, z_phy)?;
        let (_, zp_beha) = prototype::address(&mut tape, params, &layout.bank_beha, z_beha)?;
        (tape.add(z_phy, zp_phy)?, tape.add(z_beha, zp_beha)?)
    } else {
        (z_phy, z_beha)
    };
    let h = hsc::hsc_forward(&mut tape, params, &layout.hsc, h_phy, h_beha)?;
    let out = hsc::predict(&mut tape, params, &layout.hsc, h)?;
    let row = tape.value(out).row(0).to_vec();
    EmotionDistribution::new(row)
        .map_err(|e| Error::Evaluation(format!("prediction left the simplex: {e}")))
}
