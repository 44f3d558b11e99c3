//! Adam optimizer, the training loop, binary checkpoints, the evaluation
//! driver, and the cross-validation protocol runner.
//!
//! Everything here is deterministic given `(seed, config, data)`: each fold
//! derives its own generator seed, batch shuffles come from that generator,
//! and fold-level parallelism only distributes work - results are aggregated
//! in fold order. Checkpoints capture parameters, optimizer moments, the
//! generator state, and the config hash, so a resumed run continues
//! bit-identically.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Sample, SplitMode, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{
    label_correlation, metric_suite, EmotionDistribution, LabelCorrelation, MetricReport,
};
use crate::model::{
    batch_forward, predict_sample, register_model, AblationFlags, ModelConfig, ModelLayout,
};
use crate::numeric::{Matrix, Rng};
use crate::tape::{Gradients, ParamSet, Tape};

/// Full training configuration: optimizer knobs plus the architecture and
/// ablation switches. The `desk` profile is the default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Training share per subject in the subject-dependent protocol.
    pub train_frac: f64,
    pub model: ModelConfig,
    pub ablation: AblationFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Small, fast profile (laptop/CI scale).
    pub fn desk() -> TrainConfig {
        TrainConfig {
            lr: 0.001,
            batch_size: 8,
            epochs: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 7,
            train_frac: 0.8,
            model: ModelConfig::desk(),
            ablation: AblationFlags::default(),
        }
    }

    /// Full-scale profile matching the reference experiments.
    pub fn paper() -> TrainConfig {
        TrainConfig {
            lr: 0.001,
            batch_size: 128,
            epochs: 400,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 7,
            train_frac: 0.8,
            model: ModelConfig::paper(),
            ablation: AblationFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size {} must be at least 2 (the contrastive loss needs pairs)",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be positive".into()));
        }
        for (name, v, lo, hi) in
            [("beta1", self.beta1, 0.0, 1.0), ("beta2", self.beta2, 0.0, 1.0)]
        {
            if !(v > lo && v < hi) {
                return Err(Error::Config(format!("{name} = {v} outside ({lo}, {hi})")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} must lie strictly between 0 and 1",
                self.train_frac
            )));
        }
        self.model.validate()
    }
}

/// Named configuration profile.
pub fn profile(name: &str) -> Result<TrainConfig> {
    match name {
        "desk" => Ok(TrainConfig::desk()),
        "paper" => Ok(TrainConfig::paper()),
        other => Err(Error::Config(format!("unknown profile {other:?} (expected desk or paper)"))),
    }
}

pub(crate) fn merge_toml(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_toml_literal(raw: &str) -> toml::Value {
    // `FromStr` on `toml::Value` parses a single value expression; anything
    // that is not a valid literal is taken as a bare string.
    raw.parse::<toml::Value>().unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

/// Set a dotted-path override (`model.embed_dim=16`) inside a TOML tree,
/// creating intermediate tables as needed.
pub(crate) fn set_dotted(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} crosses a non-table value")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {key:?} crosses a non-table value")))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_toml_literal(raw));
    Ok(())
}

/// Resolve a configuration: start from a named profile, merge an optional
/// TOML file over it, then apply `key=value` overrides (which win). Unknown
/// keys anywhere are rejected.
pub fn resolve_config(
    profile_name: &str,
    file_text: Option<&str>,
    overrides: &[(String, String)],
) -> Result<TrainConfig> {
    let base = profile(profile_name)?;
    let mut tree = toml::Value::try_from(&base)
        .map_err(|e| Error::Config(format!("profile serialization: {e}")))?;
    if let Some(text) = file_text {
        let file: toml::Value =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        merge_toml(&mut tree, file);
    }
    for (key, value) in overrides {
        set_dotted(&mut tree, key, value)?;
    }
    let cfg: TrainConfig =
        tree.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// FNV-1a hash of arbitrary bytes; used to name run directories.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Canonical text of a run setup (written verbatim to `run.<hash>/config`);
/// the run hash is the FNV-1a of exactly these bytes.
pub fn canonical_run_config(
    cfg: &TrainConfig,
    mode: SplitMode,
    dataset_name: &str,
) -> Result<String> {
    #[derive(Serialize)]
    struct RunRecord<'a> {
        dataset: &'a str,
        mode: &'a str,
        config: &'a TrainConfig,
    }
    let mode = match mode {
        SplitMode::Dependent => "dep",
        SplitMode::Loso => "loso",
    };
    toml::to_string_pretty(&RunRecord { dataset: dataset_name, mode, config: cfg })
        .map_err(|e| Error::Config(format!("config serialization: {e}")))
}

/// Seed for fold `k`, spread across the u64 space so folds are independent.
pub fn fold_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)
}

/// Adam first/second moments, one pair per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> AdamState {
        let zeros: Vec<Matrix> =
            params.iter().map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols())).collect();
        AdamState { t: 0, m: zeros.clone(), v: zeros }
    }
}

/// One Adam update with bias correction. Slots without a gradient receive a
/// zero gradient (their moments decay). Non-finite gradients abort with the
/// offending slot named.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let ids: Vec<_> = params.iter().map(|(id, _, _)| id).collect();
    for (k, id) in ids.into_iter().enumerate() {
        if let Some(g) = grads.get(id) {
            if g.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    context: "adam_step".into(),
                    msg: format!("non-finite gradient in slot {:?}", params.name(id)),
                });
            }
        }
        let zero;
        let g = match grads.get(id) {
            Some(g) => g,
            None => {
                zero = Matrix::zeros(state.m[k].rows(), state.m[k].cols());
                &zero
            }
        };
        let p = params.value_mut(id);
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.as_slice().len() {
            let gi = g.as_slice()[i];
            let mi = beta1 * m.as_slice()[i] + (1.0 - beta1) * gi;
            let vi = beta2 * v.as_slice()[i] + (1.0 - beta2) * gi * gi;
            m.as_mut_slice()[i] = mi;
            v.as_mut_slice()[i] = vi;
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            p.as_mut_slice()[i] -= update;
        }
    }
    Ok(())
}

/// Mean losses of one epoch (sample-weighted over its batches).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub task: f64,
    pub prd: f64,
    pub semloob: f64,
    pub total: f64,
}

/// A model mid-training: parameters, optimizer, generator, progress.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: ParamSet,
    pub layout: ModelLayout,
    pub adam: AdamState,
    pub rng: Rng,
    pub next_epoch: usize,
    pub history: Vec<EpochStats>,
}

impl Trainer {
    /// Build a fresh model for one fold. `seed` should come from
    /// [`fold_seed`] so folds are independent.
    pub fn new(cfg: &TrainConfig, manifest: &DatasetManifest, seed: u64) -> Result<Trainer> {
        cfg.validate()?;
        let mut rng = Rng::seed_from(seed);
        let mut params = ParamSet::new();
        let layout = register_model(
            &mut params,
            &cfg.model,
            cfg.ablation,
            &manifest.modalities,
            manifest.emotion_count(),
            &mut rng,
        )?;
        let adam = AdamState::new(&params);
        Ok(Trainer {
            cfg: cfg.clone(),
            params,
            layout,
            adam,
            rng,
            next_epoch: 0,
            history: Vec::new(),
        })
    }

    /// One pass over the training indices: seeded shuffle, fixed-size
    /// batches (a trailing batch of fewer than 2 samples is dropped), one
    /// Adam step per batch.
    pub fn run_epoch(&mut self, samples: &[Sample], train_idx: &[usize]) -> Result<EpochStats> {
        let mut order: Vec<usize> = train_idx.to_vec();
        if order.len() < 2 {
            return Err(Error::Training {
                context: format!("epoch {}", self.next_epoch),
                msg: format!("need at least 2 training samples, got {}", order.len()),
            });
        }
        self.rng.shuffle(&mut order);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut counted = 0usize;
        for (batch_id, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // trailing remainder, documented drop
            }
            let batch: Vec<&Sample> = chunk.iter().map(|i| &samples[*i]).collect();
            let mut tape = Tape::new(&self.params);
            let out = batch_forward(&mut tape, &self.params, &self.layout, &batch, None)
                .map_err(|e| Error::Training {
                    context: format!("epoch {}, batch {batch_id}", self.next_epoch),
                    msg: e.to_string(),
                })?;
            let total = tape.scalar(out.total)?;
            let grads = tape.backward(out.total)?;
            adam_step(
                &mut self.params,
                &grads,
                &mut self.adam,
                self.cfg.lr,
                self.cfg.beta1,
                self.cfg.beta2,
                self.cfg.eps,
            )?;
            let w = chunk.len() as f64;
            sums.0 += out.task * w;
            sums.1 += out.prd * w;
            sums.2 += out.semloob * w;
            sums.3 += total * w;
            counted += chunk.len();
        }
        if counted == 0 {
            return Err(Error::Training {
                context: format!("epoch {}", self.next_epoch),
                msg: "every batch was dropped (all below 2 samples)".into(),
            });
        }
        let n = counted as f64;
        let stats = EpochStats {
            epoch: self.next_epoch,
            task: sums.0 / n,
            prd: sums.1 / n,
            semloob: sums.2 / n,
            total: sums.3 / n,
        };
        self.next_epoch += 1;
        self.history.push(stats);
        Ok(stats)
    }

    /// Run the remaining epochs (up to `cfg.epochs`).
    pub fn train(&mut self, samples: &[Sample], train_idx: &[usize]) -> Result<()> {
        while self.next_epoch < self.cfg.epochs {
            self.run_epoch(samples, train_idx)?;
        }
        Ok(())
    }
}

/// Forward-only evaluation over the test indices: per-sample predictions
/// plus the averaged metric suite.
pub fn evaluate(
    params: &ParamSet,
    layout: &ModelLayout,
    samples: &[Sample],
    test_idx: &[usize],
) -> Result<(MetricReport, Vec<EmotionDistribution>)> {
    if test_idx.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let mut preds = Vec::with_capacity(test_idx.len());
    let mut truths = Vec::with_capacity(test_idx.len());
    for i in test_idx {
        preds.push(predict_sample(params, layout, &samples[*i])?);
        truths.push(samples[*i].label.clone());
    }
    Ok((metric_suite(&preds, &truths)?, preds))
}

/// Metric suite of the uniform predictor against the given truths - the
/// no-information baseline used by the training-progress checks.
pub fn uniform_baseline(truths: &[EmotionDistribution]) -> Result<MetricReport> {
    if truths.is_empty() {
        return Err(Error::Evaluation("empty truth set".into()));
    }
    let e = truths[0].len();
    let uniform = EmotionDistribution::new(vec![1.0 / e as f64; e])?;
    let preds = vec![uniform; truths.len()];
    metric_suite(&preds, truths)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MPCLCKPT";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Serialize trainer state (parameters, moments, epoch, generator state,
/// config hash) and write it atomically (temp file + rename).
pub fn save_checkpoint(path: &Path, trainer: &Trainer, config_hash: u64) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u64(&mut out, config_hash);
    put_u64(&mut out, trainer.next_epoch as u64);
    for s in trainer.rng.state() {
        put_u64(&mut out, s);
    }
    put_u64(&mut out, trainer.adam.t);
    put_u32(&mut out, trainer.params.len() as u32);
    for (k, (_, name, value)) in trainer.params.iter().enumerate() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u64(&mut out, value.rows() as u64);
        put_u64(&mut out, value.cols() as u64);
        put_f64s(&mut out, value.as_slice());
        put_f64s(&mut out, trainer.adam.m[k].as_slice());
        put_f64s(&mut out, trainer.adam.v[k].as_slice());
    }
    let io = |e: std::io::Error| Error::io(path, e);
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&out).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

/// Restore trainer state saved by [`save_checkpoint`]. The trainer must
/// have been built from the same configuration (same blocks, same shapes);
/// `expected_hash`, when given, must match the stored config hash.
pub fn load_checkpoint(
    path: &Path,
    trainer: &mut Trainer,
    expected_hash: Option<u64>,
) -> Result<()> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let stored_hash = r.u64()?;
    if let Some(expected) = expected_hash {
        if stored_hash != expected {
            return Err(Error::Checkpoint(format!(
                "config hash {stored_hash:016x} does not match current {expected:016x}"
            )));
        }
    }
    let epoch = r.u64()? as usize;
    let rng_state = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
    let adam_t = r.u64()?;
    let blocks = r.u32()? as usize;
    if blocks != trainer.params.len() {
        return Err(Error::Checkpoint(format!(
            "{blocks} parameter blocks stored, model has {}",
            trainer.params.len()
        )));
    }
    let ids: Vec<_> = trainer.params.iter().map(|(id, _, _)| id).collect();
    for (k, id) in ids.into_iter().enumerate() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        if name != trainer.params.name(id) {
            return Err(Error::Checkpoint(format!(
                "block {k} is {name:?}, model expects {:?}",
                trainer.params.name(id)
            )));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let shape = (trainer.params.value(id).rows(), trainer.params.value(id).cols());
        if (rows, cols) != shape {
            return Err(Error::Checkpoint(format!(
                "block {name:?} is {rows}x{cols}, model expects {}x{}",
                shape.0, shape.1
            )));
        }
        let n = rows * cols;
        let p = r.f64s(n)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        trainer.params.value_mut(id).as_mut_slice().copy_from_slice(&p);
        trainer.adam.m[k].as_mut_slice().copy_from_slice(&m);
        trainer.adam.v[k].as_mut_slice().copy_from_slice(&v);
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    trainer.next_epoch = epoch;
    trainer.rng = Rng::from_state(rng_state);
    trainer.adam.t = adam_t;
    trainer.history.clear();
    Ok(())
}

/// Result of one trained and evaluated fold.
pub struct FoldOutcome {
    pub name: String,
    pub report: MetricReport,
    pub history: Vec<EpochStats>,
    pub preds: Vec<EmotionDistribution>,
    pub truths: Vec<EmotionDistribution>,
}

/// Aggregated outcome of a full protocol run.
pub struct ProtocolResult {
    pub folds: Vec<FoldOutcome>,
    pub mean: MetricReport,
    /// Correlation structure of the pooled test predictions.
    pub correlation: LabelCorrelation,
    pub run_dir: Option<PathBuf>,
    pub config_hash: u64,
}

fn run_fold(
    cfg: &TrainConfig,
    manifest: &DatasetManifest,
    samples: &[Sample],
    fold_idx: usize,
    fold: &crate::data::Fold,
    checkpoint: Option<(&Path, u64)>,
) -> Result<FoldOutcome> {
    let mut trainer = Trainer::new(cfg, manifest, fold_seed(cfg.seed, fold_idx))?;
    trainer.train(samples, &fold.train).map_err(|e| Error::Training {
        context: format!("fold {} ({})", fold_idx, fold.name),
        msg: e.to_string(),
    })?;
    if let Some((dir, hash)) = checkpoint {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join("checkpoint.bin"), &trainer, hash)?;
    }
    let (report, preds) = evaluate(&trainer.params, &trainer.layout, samples, &fold.test)?;
    let truths = fold.test.iter().map(|i| samples[*i].label.clone()).collect();
    Ok(FoldOutcome {
        name: fold.name.clone(),
        report,
        history: std::mem::take(&mut trainer.history),
        preds,
        truths,
    })
}

/// Train and evaluate every fold of the plan, optionally with fold-level
/// parallelism, and (when `out` is given) write the run directory:
/// `run.<hash>/config`, `run.<hash>/fold-<k>/metrics`, `run.<hash>/history`,
/// and `run.<hash>/label_correlation`.
pub fn run_protocol(
    manifest: &DatasetManifest,
    samples: &[Sample],
    plan: &SplitPlan,
    cfg: &TrainConfig,
    out: Option<&Path>,
    jobs: usize,
) -> Result<ProtocolResult> {
    cfg.validate()?;
    if plan.folds.is_empty() {
        return Err(Error::Split("plan has no folds".into()));
    }
    let canonical = canonical_run_config(cfg, plan.mode, &manifest.name)?;
    let config_hash = fnv1a(canonical.as_bytes());
    let dir = out.map(|o| o.join(format!("run.{config_hash:016x}")));
    let fold_dir =
        |k: usize| dir.as_ref().map(|d| (d.join(format!("fold-{k}")), config_hash));

    let workers = jobs.max(1).min(plan.folds.len());
    let mut outcomes: Vec<Option<Result<FoldOutcome>>> =
        (0..plan.folds.len()).map(|_| None).collect();
    if workers <= 1 {
        for (k, fold) in plan.folds.iter().enumerate() {
            let ckpt = fold_dir(k);
            let ckpt = ckpt.as_ref().map(|(d, h)| (d.as_path(), *h));
            outcomes[k] = Some(run_fold(cfg, manifest, samples, k, fold, ckpt));
        }
    } else {
        let results = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for tid in 0..workers {
                let results = &results;
                let folds = &plan.folds;
                let fold_dir = &fold_dir;
                scope.spawn(move || {
                    for k in (tid..folds.len()).step_by(workers) {
                        let ckpt = fold_dir(k);
                        let ckpt = ckpt.as_ref().map(|(d, h)| (d.as_path(), *h));
                        let outcome = run_fold(cfg, manifest, samples, k, &folds[k], ckpt);
                        results.lock().unwrap().push((k, outcome));
                    }
                });
            }
        });
        for (k, outcome) in results.into_inner().unwrap() {
            outcomes[k] = Some(outcome);
        }
    }
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (k, slot) in outcomes.into_iter().enumerate() {
        match slot {
            Some(Ok(outcome)) => folds.push(outcome),
            Some(Err(e)) => return Err(e),
            None => {
                return Err(Error::Training {
                    context: format!("fold {k}"),
                    msg: "worker produced no result".into(),
                })
            }
        }
    }

    let reports: Vec<MetricReport> = folds.iter().map(|f| f.report.clone()).collect();
    let mean = MetricReport::mean_of(&reports)?;
    let pooled: Vec<EmotionDistribution> =
        folds.iter().flat_map(|f| f.preds.iter().cloned()).collect();
    let correlation = label_correlation(&pooled)?;

    let mut run_dir = None;
    if let Some(dir) = dir {
        let io = |p: &Path| {
            let path = p.to_path_buf();
            move |e: std::io::Error| Error::io(path.clone(), e)
        };
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        std::fs::write(dir.join("config"), &canonical).map_err(io(&dir.join("config")))?;
        let mut history = String::new();
        for (k, fold) in folds.iter().enumerate() {
            let fold_dir = dir.join(format!("fold-{k}"));
            std::fs::create_dir_all(&fold_dir).map_err(io(&fold_dir))?;
            std::fs::write(fold_dir.join("metrics"), fold.report.to_text_record())
                .map_err(io(&fold_dir.join("metrics")))?;
            for st in &fold.history {
                history.push_str(&format!(
                    "{k} {} {} {} {} {}\n",
                    st.epoch, st.task, st.prd, st.semloob, st.total
                ));
            }
        }
        std::fs::write(dir.join("history"), &history).map_err(io(&dir.join("history")))?;
        let mut grid = String::new();
        for r in 0..correlation.matrix.rows() {
            let row: Vec<String> =
                correlation.matrix.row(r).iter().map(|v| format!("{v}")).collect();
            grid.push_str(&row.join(" "));
            grid.push('\n');
        }
        std::fs::write(dir.join("label_correlation"), &grid)
            .map_err(io(&dir.join("label_correlation")))?;
        std::fs::write(dir.join("mean_metrics"), mean.to_text_record())
            .map_err(io(&dir.join("mean_metrics")))?;
        run_dir = Some(dir);
    }

    Ok(ProtocolResult { folds, mean, correlation, run_dir, config_hash })
}
