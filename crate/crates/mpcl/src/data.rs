//! Dataset manifests, sample files, split protocols, and the synthetic
//! mixed-emotion benchmark generator.
//!
//! A dataset is a TOML manifest plus one plain-text feature file per sample.
//! The manifest declares the emotion inventory (each tagged with a valence),
//! the modality schema, and the sample index; feature files hold one
//! comma-separated vector per modality and a final `label:` line. Two
//! evaluation protocols are provided: subject-dependent (per-subject
//! train/test split, one fold per subject) and leave-one-subject-out.
//!
//! The generator plants a known co-occurrence structure: a latent valence
//! mixture drives all emotions of one valence up and the other down, a shared
//! per-valence factor (strength `rho`) correlates same-valence emotions
//! beyond that, and feature vectors are fixed random linear maps of the label
//! logits plus subject offsets and noise. Ground truth for the
//! correlation-recovery checks is therefore known by construction.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EmotionDistribution;
use crate::msaf::{validate_modalities, ModalityConfig, Role};
use crate::numeric::{Matrix, Rng};

/// Valence tag of one emotion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
}

/// One entry of the ordered emotion inventory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionDecl {
    pub name: String,
    pub valence: Valence,
}

/// One row of the manifest's sample index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub subject: String,
    pub path: String,
}

/// The dataset manifest (TOML on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub emotions: Vec<EmotionDecl>,
    /// When true, label lines may arrive unnormalized and are projected onto
    /// the simplex at load time; otherwise bad labels fail loudly.
    #[serde(default)]
    pub renormalize_labels: bool,
    pub modalities: Vec<ModalityConfig>,
    #[serde(default)]
    pub samples: Vec<SampleEntry>,
    /// Present on generated datasets: the full recipe (including the seed),
    /// sufficient to regenerate the files bit-identically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

impl DatasetManifest {
    pub fn emotion_count(&self) -> usize {
        self.emotions.len()
    }

    /// Valence tag per emotion, inventory order.
    pub fn valences(&self) -> Vec<Valence> {
        self.emotions.iter().map(|e| e.valence).collect()
    }
}

/// Structural checks on a manifest: at least two uniquely named emotions and
/// a coherent modality set.
pub fn validate_manifest(m: &DatasetManifest) -> Result<()> {
    if m.emotions.len() < 2 {
        return Err(Error::Schema(format!(
            "manifest {:?} declares {} emotions, need at least 2",
            m.name,
            m.emotions.len()
        )));
    }
    for (i, e) in m.emotions.iter().enumerate() {
        if m.emotions[..i].iter().any(|o| o.name == e.name) {
            return Err(Error::Schema(format!("duplicate emotion name {:?}", e.name)));
        }
    }
    validate_modalities(&m.modalities)?;
    Ok(())
}

/// One loaded sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub subject_id: String,
    pub features: BTreeMap<String, Vec<f64>>,
    pub label: EmotionDistribution,
}

/// Parse one feature file: `modality: v1,v2,...` lines and a final
/// `label: p1,...,pE` line. Every declared modality must be present with its
/// declared width; unknown keys are rejected.
pub fn parse_sample_text(
    text: &str,
    manifest: &DatasetManifest,
    context: &str,
) -> Result<(BTreeMap<String, Vec<f64>>, EmotionDistribution)> {
    let mut features: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut label: Option<Vec<f64>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| {
            Error::Schema(format!("{context}: line {} has no `name:` prefix", lineno + 1))
        })?;
        let key = key.trim();
        let mut values = Vec::new();
        for tok in rest.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| {
                Error::Schema(format!("{context}: bad number {tok:?} in {key:?} vector"))
            })?;
            if !v.is_finite() {
                return Err(Error::Schema(format!("{context}: non-finite value in {key:?}")));
            }
            values.push(v);
        }
        if key == "label" {
            if label.is_some() {
                return Err(Error::Schema(format!("{context}: duplicate label line")));
            }
            label = Some(values);
        } else {
            let decl = manifest.modalities.iter().find(|m| m.name == key).ok_or_else(|| {
                Error::Schema(format!("{context}: unknown modality {key:?}"))
            })?;
            if values.len() != decl.raw_dim {
                return Err(Error::Schema(format!(
                    "{context}: modality {key:?} has {} values, expected {}",
                    values.len(),
                    decl.raw_dim
                )));
            }
            if features.insert(key.to_string(), values).is_some() {
                return Err(Error::Schema(format!("{context}: duplicate modality {key:?}")));
            }
        }
    }
    for m in &manifest.modalities {
        if !features.contains_key(&m.name) {
            return Err(Error::Schema(format!("{context}: missing modality {:?}", m.name)));
        }
    }
    let raw = label.ok_or_else(|| Error::Schema(format!("{context}: missing label line")))?;
    if raw.len() != manifest.emotion_count() {
        return Err(Error::Label(format!(
            "{context}: label has {} entries, expected {}",
            raw.len(),
            manifest.emotion_count()
        )));
    }
    let label = if manifest.renormalize_labels {
        EmotionDistribution::from_unnormalized(raw)
    } else {
        EmotionDistribution::new(raw)
    }
    .map_err(|e| Error::Label(format!("{context}: {e}")))?;
    Ok((features, label))
}

/// Load a manifest and every indexed sample. Sample paths are resolved
/// relative to the manifest's directory; the returned list is ordered by
/// `(subject_id, manifest position)`.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<Sample>)> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: DatasetManifest =
        toml::from_str(&text).map_err(|e| Error::Schema(format!("manifest parse: {e}")))?;
    validate_manifest(&manifest)?;
    if manifest.samples.is_empty() {
        return Err(Error::Schema(format!("manifest {:?} indexes no samples", manifest.name)));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut indexed: Vec<(usize, Sample)> = Vec::with_capacity(manifest.samples.len());
    for (i, entry) in manifest.samples.iter().enumerate() {
        let path = base.join(&entry.path);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let context = format!("sample {:?} ({})", entry.subject, entry.path);
        let (features, label) = parse_sample_text(&text, &manifest, &context)?;
        indexed.push((i, Sample { subject_id: entry.subject.clone(), features, label }));
    }
    indexed.sort_by(|(ia, a), (ib, b)| (&a.subject_id, ia).cmp(&(&b.subject_id, ib)));
    Ok((manifest, indexed.into_iter().map(|(_, s)| s).collect()))
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// One fold per subject; that subject's samples are split train/test.
    Dependent,
    /// Leave-one-subject-out: test on one subject, train on the rest.
    Loso,
}

/// Index sets (into the sample list) of one fold.
#[derive(Debug, Clone)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A full cross-validation plan.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Build a split plan. Subject-dependent mode shuffles each subject's
/// samples with the seeded generator and keeps `train_frac` for training
/// (every subject needs at least 5 samples so the held-out part is
/// nonempty); LOSO needs at least 2 subjects and ignores `train_frac`.
pub fn make_splits(
    samples: &[Sample],
    mode: SplitMode,
    seed: u64,
    train_frac: f64,
) -> Result<SplitPlan> {
    if samples.is_empty() {
        return Err(Error::Split("cannot split an empty sample list".into()));
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_subject.entry(&s.subject_id).or_default().push(i);
    }
    let mut rng = Rng::seed_from(seed);
    let mut folds = Vec::with_capacity(by_subject.len());
    match mode {
        SplitMode::Dependent => {
            if !(train_frac > 0.0 && train_frac < 1.0) {
                return Err(Error::Split(format!(
                    "train fraction {train_frac} must lie strictly between 0 and 1"
                )));
            }
            for (subject, mut idx) in by_subject {
                if idx.len() < 5 {
                    return Err(Error::Split(format!(
                        "subject {subject:?} has {} samples; dependent mode needs at least 5",
                        idx.len()
                    )));
                }
                rng.shuffle(&mut idx);
                let n_train = ((idx.len() as f64) * train_frac).floor() as usize;
                if n_train == 0 || n_train == idx.len() {
                    return Err(Error::Split(format!(
                        "train fraction {train_frac} leaves an empty side for subject {subject:?}"
                    )));
                }
                let test = idx.split_off(n_train);
                folds.push(Fold { name: subject.to_string(), train: idx, test });
            }
        }
        SplitMode::Loso => {
            if by_subject.len() < 2 {
                return Err(Error::Split(format!(
                    "LOSO needs at least 2 subjects, found {}",
                    by_subject.len()
                )));
            }
            let subjects: Vec<&str> = by_subject.keys().copied().collect();
            for held_out in &subjects {
                let test = by_subject[held_out].clone();
                let train: Vec<usize> = subjects
                    .iter()
                    .filter(|s| *s != held_out)
                    .flat_map(|s| by_subject[s].iter().copied())
                    .collect();
                folds.push(Fold { name: held_out.to_string(), train, test });
            }
        }
    }
    Ok(SplitPlan { mode, seed, folds })
}

/// Recipe for the synthetic benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Dataset name recorded in the manifest.
    pub name: String,
    /// Number of positive-valence emotions (listed first).
    pub positive: usize,
    /// Number of negative-valence emotions.
    pub negative: usize,
    pub subjects: usize,
    pub samples_per_subject: usize,
    /// Co-occurrence strength in `[0, 1]`: weight of the shared per-valence
    /// factor versus independent per-emotion noise.
    pub rho: f64,
    /// Standard deviation of the feature noise.
    pub sigma: f64,
    pub seed: u64,
    /// Modality schema; feature maps are drawn to these widths.
    pub modalities: Vec<ModalityConfig>,
}

impl GeneratorConfig {
    /// The benchmark used throughout the test suite: 10 emotions (5 positive,
    /// 5 negative), 6 subjects, 60 samples each, strong planted
    /// co-occurrence, small desk-sized modalities.
    pub fn default_benchmark(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            name: "synthetic-mixed-emotion".into(),
            positive: 5,
            negative: 5,
            subjects: 6,
            samples_per_subject: 60,
            rho: 0.7,
            sigma: 0.1,
            seed,
            modalities: vec![
                ModalityConfig { name: "eeg".into(), raw_dim: 24, channels: 6, role: Role::Primary },
                ModalityConfig { name: "gsr".into(), raw_dim: 12, channels: 2, role: Role::Auxiliary },
                ModalityConfig { name: "resp".into(), raw_dim: 12, channels: 2, role: Role::Auxiliary },
                ModalityConfig {
                    name: "video".into(),
                    raw_dim: 32,
                    channels: 1,
                    role: Role::Behavioral,
                },
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.positive == 0 || self.negative == 0 {
            return Err(Error::Config(
                "generator needs at least one emotion of each valence".into(),
            ));
        }
        if self.subjects == 0 || self.samples_per_subject == 0 {
            return Err(Error::Config("generator needs subjects and samples".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma {} must be a finite nonnegative", self.sigma)));
        }
        validate_modalities(&self.modalities)?;
        Ok(())
    }
}

/// Swing of the latent valence mixture on the logits.
const VALENCE_AMPLITUDE: f64 = 2.0;
/// Scale of the independent per-emotion logit noise (weighted by `1 - rho`).
const EMOTION_NOISE: f64 = 0.8;
/// Scale of per-emotion base offsets and per-subject feature offsets.
const OFFSET_SCALE: f64 = 0.5;

/// Generate the synthetic benchmark.
///
/// Per sample, a latent mixture `w ~ U[0,1]` sets the positive/negative
/// balance; logit `j` is
///
/// ```text
/// l_j = b_j + A * t_j * (2w - 1) + rho * g_{v(j)} + (1 - rho) * lambda * e_j
/// ```
///
/// with `t_j = +1` for positive valence and `-1` for negative, `g_v` a
/// shared per-valence draw, and `e_j` independent noise; the label is
/// `softmax(l)`. Feature vectors are `P_m l + o_{m,subject} + sigma * n`
/// with all maps and offsets drawn once from the seeded generator, so equal
/// seeds give bit-identical datasets.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<(DatasetManifest, Vec<Sample>)> {
    cfg.validate()?;
    let e = cfg.positive + cfg.negative;
    let mut rng = Rng::seed_from(cfg.seed);

    // Fixed draws, in documented order: base logit offsets, per-modality
    // feature maps, per-subject per-modality offsets.
    let base: Vec<f64> = (0..e).map(|_| OFFSET_SCALE * rng.normal()).collect();
    let maps: Vec<Matrix> = cfg
        .modalities
        .iter()
        .map(|m| rng.normal_matrix(m.raw_dim, e, 1.0 / (e as f64).sqrt()))
        .collect();
    let subject_offsets: Vec<Vec<Vec<f64>>> = (0..cfg.subjects)
        .map(|_| {
            cfg.modalities
                .iter()
                .map(|m| (0..m.raw_dim).map(|_| OFFSET_SCALE * rng.normal()).collect())
                .collect()
        })
        .collect();

    let valence_sign =
        |j: usize| -> f64 { if j < cfg.positive { 1.0 } else { -1.0 } };

    let subject_name = |s: usize| format!("s{s:02}");
    let mut samples = Vec::with_capacity(cfg.subjects * cfg.samples_per_subject);
    let mut entries = Vec::with_capacity(samples.capacity());
    for s in 0..cfg.subjects {
        for t in 0..cfg.samples_per_subject {
            let w = rng.next_f64();
            let g_pos = rng.normal();
            let g_neg = rng.normal();
            let mut logits = Vec::with_capacity(e);
            for (j, b) in base.iter().enumerate() {
                let g = if valence_sign(j) > 0.0 { g_pos } else { g_neg };
                let eps = rng.normal();
                logits.push(
                    b + VALENCE_AMPLITUDE * valence_sign(j) * (2.0 * w - 1.0)
                        + cfg.rho * g
                        + (1.0 - cfg.rho) * EMOTION_NOISE * eps,
                );
            }
            let label = softmax_vec(&logits);

            let mut features = BTreeMap::new();
            for (m_idx, m) in cfg.modalities.iter().enumerate() {
                let mut x = Vec::with_capacity(m.raw_dim);
                for r in 0..m.raw_dim {
                    let mut v = subject_offsets[s][m_idx][r];
                    for (j, l) in logits.iter().enumerate() {
                        v += maps[m_idx].get(r, j) * l;
                    }
                    v += cfg.sigma * rng.normal();
                    x.push(v);
                }
                features.insert(m.name.clone(), x);
            }
            samples.push(Sample {
                subject_id: subject_name(s),
                features,
                label: EmotionDistribution::new(label)
                    .map_err(|e| Error::Label(format!("generated label invalid: {e}")))?,
            });
            entries.push(SampleEntry {
                subject: subject_name(s),
                path: format!("samples/{}-{t:03}.txt", subject_name(s)),
            });
        }
    }

    let emotions: Vec<EmotionDecl> = (0..e)
        .map(|j| {
            if j < cfg.positive {
                EmotionDecl { name: format!("pos{j}"), valence: Valence::Positive }
            } else {
                EmotionDecl { name: format!("neg{}", j - cfg.positive), valence: Valence::Negative }
            }
        })
        .collect();
    let manifest = DatasetManifest {
        name: cfg.name.clone(),
        emotions,
        renormalize_labels: false,
        modalities: cfg.modalities.clone(),
        samples: entries,
        generator: Some(cfg.clone()),
    };
    validate_manifest(&manifest)?;
    Ok((manifest, samples))
}

fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|v| v / z).collect()
}

/// Serialize one sample to the feature-file text format: modality lines in
/// manifest order, label last. Floats use the shortest round-trip form, so
/// written files parse back to bit-identical values.
pub fn sample_to_text(sample: &Sample, manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    for m in &manifest.modalities {
        let values = &sample.features[&m.name];
        let joined: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("{}: {}\n", m.name, joined.join(",")));
    }
    let label: Vec<String> = sample.label.as_slice().iter().map(|v| format!("{v}")).collect();
    out.push_str(&format!("label: {}\n", label.join(",")));
    out
}

/// Write a dataset (manifest plus sample files) under `out_dir`, using the
/// paths recorded in the manifest's sample index.
pub fn write_dataset(
    out_dir: &Path,
    manifest: &DatasetManifest,
    samples: &[Sample],
) -> Result<PathBuf> {
    if manifest.samples.len() != samples.len() {
        return Err(Error::Schema(format!(
            "manifest indexes {} samples but {} were provided",
            manifest.samples.len(),
            samples.len()
        )));
    }
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |e: std::io::Error| Error::io(path.clone(), e)
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    for (entry, sample) in manifest.samples.iter().zip(samples) {
        let path = out_dir.join(&entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        let mut f = std::fs::File::create(&path).map_err(io(&path))?;
        f.write_all(sample_to_text(sample, manifest).as_bytes()).map_err(io(&path))?;
    }
    let manifest_path = out_dir.join("manifest.toml");
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::Schema(format!("manifest serialize: {e}")))?;
    std::fs::write(&manifest_path, text).map_err(io(&manifest_path))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::label_correlation;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn toy_manifest() -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            emotions: vec![
                EmotionDecl { name: "joy".into(), valence: Valence::Positive },
                EmotionDecl { name: "sad".into(), valence: Valence::Negative },
            ],
            renormalize_labels: false,
            modalities: vec![
                ModalityConfig { name: "eeg".into(), raw_dim: 3, channels: 1, role: Role::Primary },
                ModalityConfig {
                    name: "gsr".into(),
                    raw_dim: 2,
                    channels: 1,
                    role: Role::Auxiliary,
                },
                ModalityConfig {
                    name: "video".into(),
                    raw_dim: 2,
                    channels: 1,
                    role: Role::Behavioral,
                },
            ],
            samples: vec![],
            generator: None,
        }
    }

    #[test]
    fn manifest_validation() {
        let good = toy_manifest();
        assert!(validate_manifest(&good).is_ok());

        let mut one_emotion = toy_manifest();
        one_emotion.emotions.truncate(1);
        assert!(validate_manifest(&one_emotion).is_err());

        let mut dup = toy_manifest();
        dup.emotions[1].name = "joy".into();
        assert!(validate_manifest(&dup).is_err());
    }

    #[test]
    fn full_scale_manifest_validates() {
        let manifest = DatasetManifest {
            name: "full-scale".into(),
            emotions: (0..10)
                .map(|j| EmotionDecl {
                    name: format!("e{j}"),
                    valence: if j < 5 { Valence::Positive } else { Valence::Negative },
                })
                .collect(),
            renormalize_labels: false,
            modalities: vec![
                ModalityConfig {
                    name: "eeg".into(),
                    raw_dim: 90,
                    channels: 18,
                    role: Role::Primary,
                },
                ModalityConfig {
                    name: "gsr".into(),
                    raw_dim: 28,
                    channels: 4,
                    role: Role::Auxiliary,
                },
                ModalityConfig {
                    name: "ppg".into(),
                    raw_dim: 27,
                    channels: 3,
                    role: Role::Auxiliary,
                },
                ModalityConfig {
                    name: "video".into(),
                    raw_dim: 768,
                    channels: 1,
                    role: Role::Behavioral,
                },
            ],
            samples: vec![],
            generator: None,
        };
        assert!(validate_manifest(&manifest).is_ok());
        assert_eq!(manifest.emotion_count(), 10);
    }

    #[test]
    fn sample_text_parses_and_round_trips() {
        let manifest = toy_manifest();
        let text = "eeg: 1.0, 2.0, 3.0\ngsr: 0.5,0.5\nvideo: -1.0, 0.25\nlabel: 0.75, 0.25\n";
        let (features, label) = parse_sample_text(text, &manifest, "t").unwrap();
        assert_eq!(features["eeg"], vec![1.0, 2.0, 3.0]);
        assert_eq!(label.as_slice(), &[0.75, 0.25]);

        let sample = Sample { subject_id: "s".into(), features, label };
        let rendered = sample_to_text(&sample, &manifest);
        let (back, label2) = parse_sample_text(&rendered, &manifest, "t").unwrap();
        assert_eq!(back, sample.features);
        assert_eq!(label2.as_slice(), sample.label.as_slice());
    }

    #[test]
    fn sample_text_error_cases() {
        let manifest = toy_manifest();
        // Missing modality named in the error.
        let text = "eeg: 1,2,3\nvideo: 0,0\nlabel: 1,0\n";
        let err = parse_sample_text(text, &manifest, "sample-x").unwrap_err().to_string();
        assert!(err.contains("gsr") && err.contains("sample-x"), "{err}");
        // Wrong width.
        let text = "eeg: 1,2\ngsr: 0,0\nvideo: 0,0\nlabel: 1,0\n";
        assert!(parse_sample_text(text, &manifest, "t").is_err());
        // Unknown modality.
        let text = "eeg: 1,2,3\ngsr: 0,0\nvideo: 0,0\nemg: 1\nlabel: 1,0\n";
        assert!(parse_sample_text(text, &manifest, "t").is_err());
        // Non-simplex label fails without the renormalize flag...
        let text = "eeg: 1,2,3\ngsr: 0,0\nvideo: 0,0\nlabel: 2,2\n";
        assert!(matches!(parse_sample_text(text, &manifest, "t"), Err(Error::Label(_))));
        // ...and is projected with it.
        let mut lax = toy_manifest();
        lax.renormalize_labels = true;
        let (_, label) = parse_sample_text(text, &lax, "t").unwrap();
        assert_eq!(label.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn load_dataset_round_trip_via_disk() {
        let dir = std::env::temp_dir().join(format!("mpcl-data-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let mut cfg = GeneratorConfig::default_benchmark(11);
        cfg.subjects = 2;
        cfg.samples_per_subject = 3;
        let (manifest, samples) = generate_synthetic(&cfg).unwrap();
        let manifest_path = write_dataset(&dir, &manifest, &samples).unwrap();

        let (loaded_manifest, loaded) = load_dataset(&manifest_path).unwrap();
        assert_eq!(loaded_manifest.name, manifest.name);
        assert_eq!(loaded.len(), samples.len());
        // Generated order is already (subject, index), so loading preserves it.
        for (a, b) in samples.iter().zip(&loaded) {
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.features, b.features);
            assert_eq!(a.label.as_slice(), b.label.as_slice());
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn load_rejects_empty_sample_index() {
        let dir = std::env::temp_dir().join(format!("mpcl-data-empty-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let manifest = toy_manifest();
        let path = dir.join("manifest.toml");
        std::fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Schema(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn synthetic_samples(subjects: usize, per_subject: usize, seed: u64) -> Vec<Sample> {
        let mut cfg = GeneratorConfig::default_benchmark(seed);
        cfg.subjects = subjects;
        cfg.samples_per_subject = per_subject;
        generate_synthetic(&cfg).unwrap().1
    }

    #[test]
    fn dependent_split_sizes() {
        let samples = synthetic_samples(3, 10, 5);
        let plan = make_splits(&samples, SplitMode::Dependent, 1, 0.8).unwrap();
        assert_eq!(plan.folds.len(), 3);
        for fold in &plan.folds {
            assert_eq!(fold.train.len(), 8);
            assert_eq!(fold.test.len(), 2);
            // All indices belong to the fold's subject.
            for i in fold.train.iter().chain(&fold.test) {
                assert_eq!(samples[*i].subject_id, fold.name);
            }
        }
    }

    #[test]
    fn loso_split_structure() {
        let samples = synthetic_samples(3, 6, 6);
        let plan = make_splits(&samples, SplitMode::Loso, 9, 0.8).unwrap();
        assert_eq!(plan.folds.len(), 3);
        for fold in &plan.folds {
            assert_eq!(fold.test.len(), 6);
            assert_eq!(fold.train.len(), 12);
            for i in &fold.test {
                assert_eq!(samples[*i].subject_id, fold.name);
            }
            for i in &fold.train {
                assert_ne!(samples[*i].subject_id, fold.name);
            }
        }
    }

    #[test]
    fn split_preconditions() {
        let samples = synthetic_samples(1, 8, 7);
        assert!(matches!(
            make_splits(&samples, SplitMode::Loso, 0, 0.8),
            Err(Error::Split(_))
        ));
        let few = synthetic_samples(2, 4, 7);
        assert!(matches!(
            make_splits(&few, SplitMode::Dependent, 0, 0.8),
            Err(Error::Split(_))
        ));
        assert!(make_splits(&samples, SplitMode::Dependent, 0, 1.5).is_err());
    }

    #[test]
    fn splits_are_disjoint_covering_and_seed_deterministic() {
        let samples = synthetic_samples(4, 10, 8);
        for seed in 0..20 {
            for mode in [SplitMode::Dependent, SplitMode::Loso] {
                let plan = make_splits(&samples, mode, seed, 0.8).unwrap();
                let mut covered = vec![false; samples.len()];
                for fold in &plan.folds {
                    let mut seen = std::collections::BTreeSet::new();
                    for i in fold.train.iter().chain(&fold.test) {
                        assert!(seen.insert(*i), "index {i} duplicated within fold");
                    }
                    for i in &fold.test {
                        covered[*i] = true;
                    }
                    if mode == SplitMode::Dependent {
                        for i in &fold.train {
                            covered[*i] = true;
                        }
                    }
                }
                assert!(covered.iter().all(|c| *c), "some sample never appears");
            }
            let a = make_splits(&samples, SplitMode::Dependent, seed, 0.8).unwrap();
            let b = make_splits(&samples, SplitMode::Dependent, seed, 0.8).unwrap();
            for (fa, fb) in a.folds.iter().zip(&b.folds) {
                assert_eq!(fa.train, fb.train);
                assert_eq!(fa.test, fb.test);
            }
        }
    }

    #[test]
    fn generator_is_bit_identical_per_seed() {
        let cfg = {
            let mut c = GeneratorConfig::default_benchmark(21);
            c.subjects = 2;
            c.samples_per_subject = 4;
            c
        };
        let (m1, s1) = generate_synthetic(&cfg).unwrap();
        let (m2, s2) = generate_synthetic(&cfg).unwrap();
        assert_eq!(toml::to_string(&m1).unwrap(), toml::to_string(&m2).unwrap());
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.label.as_slice(), b.label.as_slice());
        }
        // A different seed changes the data.
        let mut other = cfg.clone();
        other.seed = 22;
        let (_, s3) = generate_synthetic(&other).unwrap();
        assert_ne!(s1[0].label.as_slice(), s3[0].label.as_slice());
    }

    #[test]
    fn generator_rejects_bad_config() {
        let mut cfg = GeneratorConfig::default_benchmark(1);
        cfg.rho = 1.5;
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let mut cfg = GeneratorConfig::default_benchmark(1);
        cfg.positive = 0;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = GeneratorConfig::default_benchmark(1);
        cfg.sigma = -0.1;
        assert!(generate_synthetic(&cfg).is_err());
    }

    /// Mean within-valence and cross-valence correlation of a label set.
    fn valence_correlation_gap(samples: &[Sample], positive: usize) -> f64 {
        let labels: Vec<EmotionDistribution> = samples.iter().map(|s| s.label.clone()).collect();
        let lc = label_correlation(&labels).unwrap();
        let e = labels[0].len();
        let mut within = (0.0, 0usize);
        let mut cross = (0.0, 0usize);
        for j in 0..e {
            for k in 0..e {
                if j == k {
                    continue;
                }
                let same = (j < positive) == (k < positive);
                if same {
                    within = (within.0 + lc.matrix.get(j, k), within.1 + 1);
                } else {
                    cross = (cross.0 + lc.matrix.get(j, k), cross.1 + 1);
                }
            }
        }
        within.0 / within.1 as f64 - cross.0 / cross.1 as f64
    }

    #[test]
    fn planted_correlation_exceeds_threshold_at_benchmark_settings() {
        // Monte-Carlo check of the planted structure: rho = 0.6, sigma = 0.1,
        // 5000+ samples.
        let mut cfg = GeneratorConfig::default_benchmark(31);
        cfg.rho = 0.6;
        cfg.subjects = 10;
        cfg.samples_per_subject = 500;
        let (_, samples) = generate_synthetic(&cfg).unwrap();
        assert!(samples.len() >= 5000);
        let gap = valence_correlation_gap(&samples, cfg.positive);
        assert!(gap > 0.2, "within-cross correlation gap {gap} too small");
    }

    #[test]
    fn rho_one_gives_rank_correlated_same_valence_labels() {
        let mut cfg = GeneratorConfig::default_benchmark(32);
        cfg.rho = 1.0;
        cfg.sigma = 0.0;
        cfg.subjects = 2;
        cfg.samples_per_subject = 50;
        let (_, samples) = generate_synthetic(&cfg).unwrap();
        // With no independent noise, same-valence label components are
        // monotone transforms of one another: their orderings agree exactly.
        let e = cfg.positive;
        for pair in [(0usize, 1usize), (1, 3)] {
            let mut order_a: Vec<usize> = (0..samples.len()).collect();
            let mut order_b = order_a.clone();
            order_a.sort_by(|x, y| {
                samples[*x].label.as_slice()[pair.0]
                    .partial_cmp(&samples[*y].label.as_slice()[pair.0])
                    .unwrap()
            });
            order_b.sort_by(|x, y| {
                samples[*x].label.as_slice()[pair.1]
                    .partial_cmp(&samples[*y].label.as_slice()[pair.1])
                    .unwrap()
            });
            assert_eq!(order_a, order_b, "positive pair {pair:?} disagrees");
            // Same check on the negative side, offset by E+.
            let np = (pair.0 + e, pair.1 + e);
            order_a.sort_by(|x, y| {
                samples[*x].label.as_slice()[np.0]
                    .partial_cmp(&samples[*y].label.as_slice()[np.0])
                    .unwrap()
            });
            order_b.sort_by(|x, y| {
                samples[*x].label.as_slice()[np.1]
                    .partial_cmp(&samples[*y].label.as_slice()[np.1])
                    .unwrap()
            });
            assert_eq!(order_a, order_b, "negative pair {np:?} disagrees");
        }
    }

    #[test]
    fn rho_zero_gap_matches_mixture_only_oracle() {
        // At rho = 0 the only coupling is the shared valence mixture w. An
        // independent oracle: regenerate the same structure directly (same
        // formula, fresh seed) and require the two gaps to agree within
        // Monte-Carlo error.
        let mut cfg = GeneratorConfig::default_benchmark(33);
        cfg.rho = 0.0;
        cfg.sigma = 0.0;
        cfg.subjects = 8;
        cfg.samples_per_subject = 625;
        let (_, samples) = generate_synthetic(&cfg).unwrap();
        let gap = valence_correlation_gap(&samples, cfg.positive);

        let mut oracle_rng = Rng::seed_from(999);
        let mut oracle_labels = Vec::new();
        let base: Vec<f64> = (0..10).map(|_| OFFSET_SCALE * oracle_rng.normal()).collect();
        for _ in 0..5000 {
            let w = oracle_rng.next_f64();
            let logits: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let t = if j < 5 { 1.0 } else { -1.0 };
                    b + VALENCE_AMPLITUDE * t * (2.0 * w - 1.0)
                        + EMOTION_NOISE * oracle_rng.normal()
                })
                .collect();
            oracle_labels.push(EmotionDistribution::new(softmax_vec(&logits)).unwrap());
        }
        let oracle_samples: Vec<Sample> = oracle_labels
            .into_iter()
            .map(|label| Sample {
                subject_id: "o".into(),
                features: BTreeMap::new(),
                label,
            })
            .collect();
        let oracle_gap = valence_correlation_gap(&oracle_samples, 5);
        assert_close(gap, oracle_gap, 0.1);
        assert!(gap > 0.0);
    }

    #[test]
    fn generated_labels_are_valid_simplex_points() {
        let mut cfg = GeneratorConfig::default_benchmark(34);
        cfg.subjects = 3;
        cfg.samples_per_subject = 40;
        for rho in [0.0, 0.5, 1.0] {
            cfg.rho = rho;
            let (_, samples) = generate_synthetic(&cfg).unwrap();
            for s in &samples {
                // Construction via EmotionDistribution::new already enforces
                // this; assert explicitly against drift.
                let sum: f64 = s.label.as_slice().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
                assert!(s.label.as_slice().iter().all(|v| *v >= 0.0));
            }
        }
    }
}
