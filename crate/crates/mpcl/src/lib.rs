//! Memory-guided prototypical co-occurrence learning for mixed-emotion
//! distribution prediction.
//!
//! This crate trains a multimodal model that maps physiological and
//! behavioral feature vectors to a probability distribution over emotions,
//! with explicit machinery for *mixed* emotions - the co-occurrence of
//! several feelings at once. The pipeline:
//!
//! 1. [`msaf`] - per-modality encoders plus multi-scale associative fusion
//!    of the auxiliary physiological signals into the primary one.
//! 2. [`prototype`] - slot-addressed prototype banks for each view, with a
//!    relation-distillation loss aligning the two banks' structure.
//! 3. [`pcl`] - prototype-enhanced cross-view retrieval and the
//!    leave-one-out contrastive objective over pooled embeddings.
//! 4. [`hsc`] - stacked associative-lookup + self-attention blocks that
//!    compress the fused sequence down to emotion logits.
//!
//! Everything differentiable is recorded on a reverse-mode [`tape`], and the
//! retrieval primitive shared by all of the above lives in [`hopfield`].
//! The [`data`] module defines the on-disk dataset format and a synthetic
//! benchmark generator with planted co-occurrence structure; [`train`] runs
//! deterministic Adam training over subject-aware splits; [`metrics`]
//! implements the six standard distribution-comparison measures plus rank
//! and correlation diagnostics.
//!
//! The `examples/` directory is the guided tour: each example is a small
//! runnable program exercising one capability. The `mpcl` binary wraps the
//! same library calls behind subcommands (`synth`, `train`, `eval`,
//! `gradcheck`, `ablate`, `report`).

pub mod cli;
pub mod data;
pub mod error;
pub mod hopfield;
pub mod hsc;
pub mod metrics;
pub mod model;
pub mod msaf;
pub mod numeric;
pub mod pcl;
pub mod prototype;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
