//! Task loss, the six distribution-comparison metrics, rank aggregation,
//! and label-correlation analysis.
//!
//! Predictions and ground truths are probability distributions over `E`
//! emotions. Training minimizes `KL(y || y_hat)`; evaluation reports four
//! distances (Chebyshev, Clark, Canberra, KL - lower is better) and two
//! similarities (cosine, intersection - higher is better), each averaged
//! over samples. `average_rank` aggregates several methods' reports into
//! direction-aware fractional ranks, and `label_correlation` measures which
//! emotions rise and fall together across a set of predictions - the
//! co-occurrence structure the model is supposed to capture.
//!
//! Conventions used throughout: `0 ln 0 := 0`, a `1e-12` floor inside every
//! logarithm, natural log, and Clark/Canberra terms with `p + q = 0`
//! contribute zero.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, LOG_FLOOR};
use crate::tape::{Tape, Var};

/// A point on the `E`-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionDistribution {
    p: Vec<f64>,
}

impl EmotionDistribution {
    /// Validate and wrap: entries nonnegative and finite, sum within `1e-9`
    /// of one.
    pub fn new(p: Vec<f64>) -> Result<EmotionDistribution> {
        if p.is_empty() {
            return Err(Error::Contract {
                op: "emotion_distribution",
                msg: "empty distribution".into(),
            });
        }
        let mut sum = 0.0;
        for v in &p {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Contract {
                    op: "emotion_distribution",
                    msg: format!("invalid probability {v}"),
                });
            }
            sum += *v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract {
                op: "emotion_distribution",
                msg: format!("probabilities sum to {sum}, not 1"),
            });
        }
        Ok(EmotionDistribution { p })
    }

    /// Normalize a nonnegative vector to the simplex (for label files whose
    /// rows are allowed to arrive unnormalized).
    pub fn from_unnormalized(mut p: Vec<f64>) -> Result<EmotionDistribution> {
        let mut sum = 0.0;
        for v in &p {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Contract {
                    op: "emotion_distribution",
                    msg: format!("invalid probability mass {v}"),
                });
            }
            sum += *v;
        }
        if sum <= 0.0 {
            return Err(Error::Contract {
                op: "emotion_distribution",
                msg: "cannot normalize zero mass".into(),
            });
        }
        for v in p.iter_mut() {
            *v /= sum;
        }
        EmotionDistribution::new(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Tape-level `KL(target || approx)` where `target` is a constant
/// distribution and `approx` a `1 x E` variable. Uses the `0 ln 0 := 0`
/// convention and the log floor, so agreement yields exactly zero.
pub fn kl_tape(tape: &mut Tape, target: &[f64], approx: Var) -> Result<Var> {
    let av = tape.value(approx);
    if av.rows() != 1 || av.cols() != target.len() {
        return Err(Error::Dimension {
            op: "kl_tape",
            left_rows: 1,
            left_cols: target.len(),
            right_rows: av.rows(),
            right_cols: av.cols(),
        });
    }
    // Constant teacher-side entropy term, same floor as the student side so
    // that target == approx cancels term by term.
    let mut entropy = 0.0;
    for t in target {
        if *t > 0.0 {
            entropy += t * t.max(LOG_FLOOR).ln();
        }
    }
    let t_row = tape.constant(Matrix::row_vector(target)?);
    let log_approx = tape.log_floored(approx);
    let cross = tape.matmul_nt(t_row, log_approx)?;
    let neg_cross = tape.scale(cross, -1.0)?;
    let c = tape.constant(Matrix::from_vec(1, 1, vec![entropy])?);
    tape.add(c, neg_cross)
}

/// Batch-averaged task loss `KL(y || y_hat)` with constant targets.
///
/// Every prediction must be a strictly positive distribution (softmax
/// output); targets may contain zeros.
pub fn task_loss_tape(
    tape: &mut Tape,
    targets: &[EmotionDistribution],
    preds: &[Var],
) -> Result<Var> {
    if targets.len() != preds.len() || targets.is_empty() {
        return Err(Error::parameter(
            "task_loss",
            format!("need matching nonempty batches, got {} and {}", targets.len(), preds.len()),
        ));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (y, pred) in targets.iter().zip(preds) {
        let pv = tape.value(*pred);
        if pv.as_slice().iter().any(|v| *v <= 0.0) {
            return Err(Error::Contract {
                op: "task_loss",
                msg: "prediction has a non-positive entry".into(),
            });
        }
        let sum: f64 = pv.as_slice().iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract {
                op: "task_loss",
                msg: format!("prediction sums to {sum}, not 1"),
            });
        }
        terms.push(kl_tape(tape, y.as_slice(), *pred)?);
    }
    let total = tape.sum_scalars(&terms)?;
    tape.scale(total, 1.0 / preds.len() as f64)
}

/// Plain scalar KL with the crate's conventions, for evaluation.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (pj, qj) in p.iter().zip(q) {
        if *pj > 0.0 {
            kl += pj * (pj.max(LOG_FLOOR).ln() - qj.max(LOG_FLOOR).ln());
        }
    }
    kl
}

/// Total objective: unweighted sum of the three terms (disabled modules
/// contribute zero upstream).
pub fn total_loss(task: f64, prd: f64, semloob: f64) -> f64 {
    task + prd + semloob
}

/// Averaged evaluation metrics over a prediction/truth pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub chebyshev: f64,
    pub clark: f64,
    pub canberra: f64,
    pub kl: f64,
    pub cosine: f64,
    pub intersection: f64,
    /// Number of samples averaged.
    pub samples: usize,
}

/// Metric names in report order, shared by the text record and the CLI
/// tables.
pub const METRIC_NAMES: [&str; 6] =
    ["chebyshev", "clark", "canberra", "kl", "cosine", "intersection"];

impl MetricReport {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 6] {
        [self.chebyshev, self.clark, self.canberra, self.kl, self.cosine, self.intersection]
    }

    /// True for metrics where lower is better (the four distances).
    pub fn lower_is_better(index: usize) -> bool {
        index < 4
    }

    /// Flat `name value` text record, one metric per line.
    pub fn to_text_record(&self) -> String {
        let mut out = String::new();
        for (name, value) in METRIC_NAMES.iter().zip(self.values()) {
            out.push_str(&format!("{name} {value:.17}\n"));
        }
        out.push_str(&format!("samples {}\n", self.samples));
        out
    }

    /// Parse the record produced by [`MetricReport::to_text_record`].
    pub fn parse_text_record(text: &str) -> Result<MetricReport> {
        let mut values = [None::<f64>; 6];
        let mut samples = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).ok_or_else(|| {
                Error::Evaluation(format!("malformed metric line {line:?}"))
            })?;
            let value = value.trim();
            if key == "samples" {
                samples = Some(value.parse::<usize>().map_err(|_| {
                    Error::Evaluation(format!("bad sample count {value:?}"))
                })?);
            } else if let Some(idx) = METRIC_NAMES.iter().position(|n| *n == key) {
                values[idx] = Some(value.parse::<f64>().map_err(|_| {
                    Error::Evaluation(format!("bad value for {key}: {value:?}"))
                })?);
            } else {
                return Err(Error::Evaluation(format!("unknown metric {key:?}")));
            }
        }
        let mut v = [0.0; 6];
        for (i, slot) in values.iter().enumerate() {
            v[i] = slot.ok_or_else(|| {
                Error::Evaluation(format!("metric {} missing from record", METRIC_NAMES[i]))
            })?;
        }
        Ok(MetricReport {
            chebyshev: v[0],
            clark: v[1],
            canberra: v[2],
            kl: v[3],
            cosine: v[4],
            intersection: v[5],
            samples: samples
                .ok_or_else(|| Error::Evaluation("sample count missing from record".into()))?,
        })
    }

    /// Mean of several reports (used for cross-fold aggregation); sample
    /// counts accumulate.
    pub fn mean_of(reports: &[MetricReport]) -> Result<MetricReport> {
        if reports.is_empty() {
            return Err(Error::Evaluation("cannot average zero reports".into()));
        }
        let n = reports.len() as f64;
        Ok(MetricReport {
            chebyshev: reports.iter().map(|r| r.chebyshev).sum::<f64>() / n,
            clark: reports.iter().map(|r| r.clark).sum::<f64>() / n,
            canberra: reports.iter().map(|r| r.canberra).sum::<f64>() / n,
            kl: reports.iter().map(|r| r.kl).sum::<f64>() / n,
            cosine: reports.iter().map(|r| r.cosine).sum::<f64>() / n,
            intersection: reports.iter().map(|r| r.intersection).sum::<f64>() / n,
            samples: reports.iter().map(|r| r.samples).sum(),
        })
    }
}

/// Compute all six metrics averaged over a batch of predictions.
pub fn metric_suite(
    preds: &[EmotionDistribution],
    truths: &[EmotionDistribution],
) -> Result<MetricReport> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Dimension {
            op: "metric_suite",
            left_rows: preds.len(),
            left_cols: 1,
            right_rows: truths.len(),
            right_cols: 1,
        });
    }
    let mut acc = [0.0; 6];
    for (pred, truth) in preds.iter().zip(truths) {
        let p = truth.as_slice();
        let q = pred.as_slice();
        if p.len() != q.len() {
            return Err(Error::Dimension {
                op: "metric_suite",
                left_rows: 1,
                left_cols: p.len(),
                right_rows: 1,
                right_cols: q.len(),
            });
        }
        let mut cheb: f64 = 0.0;
        let mut clark = 0.0;
        let mut canberra = 0.0;
        let mut dot = 0.0;
        let mut pp = 0.0;
        let mut qq = 0.0;
        let mut inter = 0.0;
        for (pj, qj) in p.iter().zip(q) {
            let diff = (pj - qj).abs();
            cheb = cheb.max(diff);
            let denom = pj + qj;
            if denom > 0.0 {
                clark += (diff / denom) * (diff / denom);
                canberra += diff / denom;
            }
            dot += pj * qj;
            pp += pj * pj;
            qq += qj * qj;
            inter += pj.min(*qj);
        }
        acc[0] += cheb;
        acc[1] += clark.sqrt();
        acc[2] += canberra;
        acc[3] += kl_divergence(p, q);
        acc[4] += dot / (pp * qq).sqrt();
        acc[5] += inter;
    }
    let n = preds.len() as f64;
    Ok(MetricReport {
        chebyshev: acc[0] / n,
        clark: acc[1] / n,
        canberra: acc[2] / n,
        kl: acc[3] / n,
        cosine: acc[4] / n,
        intersection: acc[5] / n,
        samples: preds.len(),
    })
}

/// One method's row in a rank table.
#[derive(Debug, Clone)]
pub struct RankedMethod {
    pub name: String,
    /// Fractional rank per metric, [`METRIC_NAMES`] order.
    pub per_metric: [f64; 6],
    /// Mean of the six ranks.
    pub average: f64,
}

/// Direction-aware fractional ranking of several methods.
///
/// Distances rank ascending, similarities descending; ties receive the
/// average of the positions they span. The result keeps input order.
pub fn average_rank(entries: &[(String, MetricReport)]) -> Result<Vec<RankedMethod>> {
    if entries.len() < 2 {
        return Err(Error::parameter(
            "average_rank",
            format!("need at least 2 methods, got {}", entries.len()),
        ));
    }
    let n = entries.len();
    let mut per_metric = vec![[0.0; 6]; n];
    for metric in 0..6 {
        let mut order: Vec<usize> = (0..n).collect();
        let key = |i: usize| entries[i].1.values()[metric];
        order.sort_by(|a, b| {
            let (va, vb) = (key(*a), key(*b));
            if MetricReport::lower_is_better(metric) {
                va.partial_cmp(&vb).unwrap()
            } else {
                vb.partial_cmp(&va).unwrap()
            }
        });
        // Walk tie groups and assign each the mean of its positions.
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && key(order[j + 1]) == key(order[i]) {
                j += 1;
            }
            let rank = (i + 1 + j + 1) as f64 / 2.0;
            for k in i..=j {
                per_metric[order[k]][metric] = rank;
            }
            i = j + 1;
        }
    }
    Ok(entries
        .iter()
        .enumerate()
        .map(|(i, (name, _))| RankedMethod {
            name: name.clone(),
            per_metric: per_metric[i],
            average: per_metric[i].iter().sum::<f64>() / 6.0,
        })
        .collect())
}

/// Pearson correlation between emotion components across a set of
/// distributions.
#[derive(Debug, Clone)]
pub struct LabelCorrelation {
    /// `[E x E]` correlation matrix; entries involving a zero-variance
    /// component are 0.
    pub matrix: Matrix,
    /// Emotion indices whose component had zero variance.
    pub zero_variance: Vec<usize>,
}

/// Correlate emotion components across samples.
pub fn label_correlation(preds: &[EmotionDistribution]) -> Result<LabelCorrelation> {
    if preds.len() < 2 {
        return Err(Error::parameter(
            "label_correlation",
            format!("need at least 2 distributions, got {}", preds.len()),
        ));
    }
    let e = preds[0].len();
    if preds.iter().any(|p| p.len() != e) {
        return Err(Error::parameter("label_correlation", "mixed distribution lengths"));
    }
    let n = preds.len() as f64;
    let mut mean = vec![0.0; e];
    for p in preds {
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = Matrix::zeros(e, e);
    for p in preds {
        let d: Vec<f64> = p.as_slice().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for j in 0..e {
            for k in 0..e {
                cov.set(j, k, cov.get(j, k) + d[j] * d[k] / n);
            }
        }
    }
    let zero_variance: Vec<usize> = (0..e).filter(|j| cov.get(*j, *j) <= 0.0).collect();
    let mut matrix = Matrix::zeros(e, e);
    for j in 0..e {
        for k in 0..e {
            let denom = (cov.get(j, j) * cov.get(k, k)).sqrt();
            if denom > 0.0 {
                matrix.set(j, k, (cov.get(j, k) / denom).clamp(-1.0, 1.0));
            }
        }
    }
    Ok(LabelCorrelation { matrix, zero_variance })
}
