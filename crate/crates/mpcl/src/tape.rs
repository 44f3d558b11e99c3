//! Reverse-mode automatic differentiation over a fixed operation vocabulary.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes; calling
//! [`Tape::backward`] on a scalar output walks the list in reverse and
//! accumulates adjoints into a [`Gradients`] table aligned with the
//! [`ParamSet`] that supplied the leaves. The vocabulary is deliberately
//! small - matrix products, concatenation/slicing, row softmax, tempered
//! log-sum-exp, row normalization, means, `tanh`, reshape, and a floored
//! logarithm - because every layer in the model is a composition of exactly
//! these pieces. Keeping the set closed is what makes the finite-difference
//! checker in [`grad_check`] an exhaustive test of the training math.
//!
//! Parameters are memoized: asking for the same slot twice on one tape
//! returns the same variable, so all uses of a weight matrix share one leaf
//! and their adjoints accumulate in a single place.

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix, LOG_FLOOR};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Handle to a named parameter matrix inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotId(usize);

impl SlotId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of trainable matrices.
///
/// Slot order is insertion order and is part of the checkpoint format, so
/// model builders must register parameters deterministically.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Register a parameter; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<SlotId> {
        let name = name.into();
        if self.names.iter().any(|n| *n == name) {
            return Err(Error::parameter("param_set", format!("duplicate slot name {name:?}")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(SlotId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: SlotId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: SlotId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: SlotId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<SlotId> {
        self.names.iter().position(|n| n == name).map(SlotId)
    }

    /// Iterate `(id, name, value)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (SlotId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (SlotId(i), n.as_str(), v))
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }
}

/// Per-slot gradient table produced by [`Tape::backward`].
///
/// Slots that did not participate in the computation hold `None`.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    fn new(n: usize) -> Gradients {
        Gradients { grads: vec![None; n] }
    }

    /// An all-`None` table sized for `params`; entries can then be filled
    /// with [`Gradients::set`] (used to drive the optimizer directly).
    pub fn zeros_for(params: &ParamSet) -> Gradients {
        Gradients::new(params.len())
    }

    pub fn get(&self, id: SlotId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Overwrite one slot's gradient.
    pub fn set(&mut self, id: SlotId, g: Matrix) {
        self.grads[id.0] = Some(g);
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    fn accumulate(&mut self, id: SlotId, adj: &Matrix) -> Result<()> {
        match &mut self.grads[id.0] {
            Some(g) => g.add_assign(adj),
            slot => {
                *slot = Some(adj.clone());
                Ok(())
            }
        }
    }
}

enum Op {
    /// Constant (no gradient flows into it).
    Const,
    /// Leaf bound to a parameter slot.
    Param(SlotId),
    /// `a * b`.
    MatMul(Var, Var),
    /// `a * b^T`.
    MatMulNT(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    /// Row softmax of `beta * a`.
    SoftmaxRows(Var, f64),
    /// Tempered log-sum-exp of a single-row input; output is `1 x 1`.
    Lse(Var, f64),
    /// Row L2 normalization; zero rows pass through with identity gradient.
    NormalizeRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var),
    Tanh(Var),
    Reshape(Var),
    /// Elementwise `ln(max(x, LOG_FLOOR))`.
    LogFloored(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Forward-recording tape. One tape per forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    n_slots: usize,
    param_vars: Vec<Option<Var>>,
}

impl Tape {
    /// Create a tape able to differentiate with respect to `params`.
    pub fn new(params: &ParamSet) -> Tape {
        Tape {
            nodes: Vec::new(),
            n_slots: params.len(),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Value computed for a variable.
    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Record a constant (gradients do not flow into it).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const)
    }

    /// Record a parameter leaf. Repeated requests for the same slot return
    /// the same variable.
    pub fn param(&mut self, params: &ParamSet, id: SlotId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = numeric::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a * b^T` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = numeric::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = numeric::add(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        if !k.is_finite() {
            return Err(Error::parameter("scale", format!("non-finite factor {k}")));
        }
        let value = numeric::scale(self.value(a), k);
        Ok(self.push(value, Op::Scale(a, k)))
    }

    pub fn softmax_rows(&mut self, a: Var, beta: f64) -> Result<Var> {
        let value = numeric::softmax_rows(self.value(a), beta)?;
        Ok(self.push(value, Op::SoftmaxRows(a, beta)))
    }

    /// Tempered log-sum-exp over a single-row variable; yields `1 x 1`.
    pub fn lse(&mut self, a: Var, beta: f64) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != 1 {
            return Err(Error::parameter(
                "lse",
                format!("expects a single row, got {} rows", m.rows()),
            ));
        }
        let value = numeric::log_sum_exp(m.row(0), beta)?;
        let value = Matrix::from_vec(1, 1, vec![value])?;
        Ok(self.push(value, Op::Lse(a, beta)))
    }

    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let normalized = numeric::normalize_rows(self.value(a));
        self.push(normalized.matrix, Op::NormalizeRows(a, normalized.zero_rows))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|v| self.value(*v)).collect();
        let value = numeric::concat_rows(&values)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|v| self.value(*v)).collect();
        let value = numeric::concat_cols(&values)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = numeric::slice_rows(self.value(a), start, len)?;
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = numeric::slice_cols(self.value(a), start, len)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let value = numeric::mean_rows(self.value(a))?;
        Ok(self.push(value, Op::MeanRows(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = numeric::tanh(self.value(a));
        self.push(value, Op::Tanh(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).reshape(rows, cols)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Elementwise floored logarithm; the floor keeps `ln` finite on
    /// probabilities that underflowed to zero.
    pub fn log_floored(&mut self, a: Var) -> Var {
        let value = numeric::log_floored(self.value(a));
        self.push(value, Op::LogFloored(a))
    }

    /// Sum a list of `1 x 1` variables.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = match terms.first() {
            Some(v) => *v,
            None => return Err(Error::parameter("sum_scalars", "no terms")),
        };
        for t in &terms[1..] {
            acc = self.add(acc, *t)?;
        }
        Ok(acc)
    }

    /// Scalar value of a `1 x 1` variable.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v);
        if m.rows() != 1 || m.cols() != 1 {
            return Err(Error::parameter(
                "scalar",
                format!("expected 1x1, got {}x{}", m.rows(), m.cols()),
            ));
        }
        Ok(m.get(0, 0))
    }

    /// Reverse sweep from a scalar root. Returns one gradient per parameter
    /// slot (`None` for slots the computation never touched).
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_val = self.value(root);
        if root_val.rows() != 1 || root_val.cols() != 1 {
            return Err(Error::parameter(
                "backward",
                format!("root must be 1x1, got {}x{}", root_val.rows(), root_val.cols()),
            ));
        }
        let mut adjoints: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[root.0] = Some(Matrix::from_vec(1, 1, vec![1.0])?);
        let mut grads = Gradients::new(self.n_slots);

        for i in (0..=root.0).rev() {
            let adj = match adjoints[i].take() {
                Some(a) => a,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => grads.accumulate(*id, &adj)?,
                Op::MatMul(a, b) => {
                    let da = numeric::matmul_nt(&adj, self.value(*b))?;
                    let db = numeric::matmul_tn(self.value(*a), &adj)?;
                    accumulate(&mut adjoints, *a, da)?;
                    accumulate(&mut adjoints, *b, db)?;
                }
                Op::MatMulNT(a, b) => {
                    let da = numeric::matmul(&adj, self.value(*b))?;
                    let db = numeric::matmul_tn(&adj, self.value(*a))?;
                    accumulate(&mut adjoints, *a, da)?;
                    accumulate(&mut adjoints, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, *a, adj.clone())?;
                    accumulate(&mut adjoints, *b, adj)?;
                }
                Op::Scale(a, k) => {
                    accumulate(&mut adjoints, *a, numeric::scale(&adj, *k))?;
                }
                Op::SoftmaxRows(a, beta) => {
                    // dx = beta * y (.) (g - <g, y> 1) per row.
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = adj.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        let dr = da.row_mut(r);
                        for c in 0..yr.len() {
                            dr[c] = beta * yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::Lse(a, beta) => {
                    // d/dx_j lse_beta(x) = softmax(beta x)_j.
                    let g = adj.get(0, 0);
                    let soft = numeric::softmax_rows(self.value(*a), *beta)?;
                    accumulate(&mut adjoints, *a, numeric::scale(&soft, g))?;
                }
                Op::NormalizeRows(a, zero_rows) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let gr = adj.row(r);
                        if zero_rows.contains(&r) {
                            // Zero rows passed through unchanged.
                            da.row_mut(r).copy_from_slice(gr);
                            continue;
                        }
                        let xr = x.row(r);
                        let yr = y.row(r);
                        let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        let dr = da.row_mut(r);
                        for c in 0..xr.len() {
                            dr[c] = (gr[c] - dot * yr[c]) / norm;
                        }
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).rows();
                        let part_adj = numeric::slice_rows(&adj, start, n)?;
                        accumulate(&mut adjoints, *p, part_adj)?;
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).cols();
                        let part_adj = numeric::slice_cols(&adj, start, n)?;
                        accumulate(&mut adjoints, *p, part_adj)?;
                        start += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..adj.rows() {
                        da.row_mut(start + r).copy_from_slice(adj.row(r));
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..adj.rows() {
                        let src = adj.row(r);
                        da.row_mut(r)[*start..start + src.len()].copy_from_slice(src);
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let k = 1.0 / x.rows() as f64;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        for c in 0..x.cols() {
                            da.set(r, c, k * adj.get(0, c));
                        }
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut da = adj.clone();
                    for (d, yv) in da.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= 1.0 - yv * yv;
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::Reshape(a) => {
                    let x = self.value(*a);
                    let da = adj.reshape(x.rows(), x.cols())?;
                    accumulate(&mut adjoints, *a, da)?;
                }
                Op::LogFloored(a) => {
                    // Below the floor the output is constant, so the local
                    // derivative is zero there.
                    let x = self.value(*a);
                    let mut da = adj.clone();
                    for (d, xv) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d = if *xv > LOG_FLOOR { *d / *xv } else { 0.0 };
                    }
                    accumulate(&mut adjoints, *a, da)?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adjoints: &mut [Option<Matrix>], v: Var, adj: Matrix) -> Result<()> {
    match &mut adjoints[v.0] {
        Some(existing) => existing.add_assign(&adj),
        slot => {
            *slot = Some(adj);
            Ok(())
        }
    }
}

/// Settings for [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Relative-error tolerance.
    pub tol: f64,
    /// Cap on probed elements per slot (probes are spread deterministically).
    pub max_probes_per_slot: usize,
    /// Denominators at or below this magnitude pass automatically; relative
    /// error is meaningless against roundoff noise.
    pub abs_threshold: f64,
    /// Test hook: scale this slot's analytic gradient by 1.5 so the check
    /// must fail. Exercised by the negative-control path of the CLI.
    pub corrupt_slot: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            max_probes_per_slot: 16,
            abs_threshold: 1e-6,
            corrupt_slot: None,
        }
    }
}

/// Verdict for one parameter slot.
#[derive(Debug, Clone)]
pub struct SlotCheck {
    pub name: String,
    pub probes: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Full gradient-check report: one entry per parameter slot, in registration
/// order.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub slots: Vec<SlotCheck>,
}

impl GradCheckReport {
    pub fn all_pass(&self) -> bool {
        self.slots.iter().all(|s| s.pass)
    }
}

/// Compare the tape's analytic gradients against central finite differences.
///
/// `build` must replay the same forward computation for any parameter values;
/// it is invoked once to obtain analytic gradients and twice per probed
/// element for the `f(x + eps)` / `f(x - eps)` evaluations. Every slot is
/// reported exactly once. A probe passes when the relative error
/// `|a - fd| / max(|a|, |fd|)` is at most `tol`, or when both magnitudes sit
/// at or below `abs_threshold`.
pub fn grad_check<F>(params: &mut ParamSet, build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new(params);
        let root = build(&mut tape, params)?;
        let v = tape.scalar(root)?;
        if !v.is_finite() {
            return Err(Error::parameter("grad_check", format!("non-finite loss {v}")));
        }
        Ok(v)
    };

    // Analytic pass.
    let mut tape = Tape::new(params);
    let root = build(&mut tape, params)?;
    let base = tape.scalar(root)?;
    if !base.is_finite() {
        return Err(Error::parameter("grad_check", format!("non-finite loss {base}")));
    }
    let grads = tape.backward(root)?;

    let slot_ids: Vec<SlotId> = params.iter().map(|(id, _, _)| id).collect();
    let mut slots = Vec::with_capacity(slot_ids.len());
    for id in slot_ids {
        let name = params.name(id).to_string();
        let len = params.value(id).len();
        let analytic = grads.get(id).cloned();
        let corrupt = cfg.corrupt_slot.as_deref() == Some(name.as_str());

        // Spread probes across the slot deterministically.
        let n_probes = len.min(cfg.max_probes_per_slot);
        let mut max_rel_err: f64 = 0.0;
        let mut pass = true;
        for p in 0..n_probes {
            let idx = p * len / n_probes;
            let mut a = analytic.as_ref().map_or(0.0, |g| g.as_slice()[idx]);
            if corrupt {
                a *= 1.5;
            }
            let orig = params.value(id).as_slice()[idx];
            params.value_mut(id).as_mut_slice()[idx] = orig + cfg.eps;
            let f_plus = eval(params)?;
            params.value_mut(id).as_mut_slice()[idx] = orig - cfg.eps;
            let f_minus = eval(params)?;
            params.value_mut(id).as_mut_slice()[idx] = orig;
            let fd = (f_plus - f_minus) / (2.0 * cfg.eps);

            let denom = a.abs().max(fd.abs());
            if denom <= cfg.abs_threshold {
                continue;
            }
            let rel = (a - fd).abs() / denom;
            max_rel_err = max_rel_err.max(rel);
            if rel > cfg.tol {
                pass = false;
            }
        }
        slots.push(SlotCheck { name, probes: n_probes, max_rel_err, pass });
    }
    Ok(GradCheckReport { slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn params_one(name: &str, m: Matrix) -> (ParamSet, SlotId) {
        let mut p = ParamSet::new();
        let id = p.add(name, m).unwrap();
        (p, id)
    }

    #[test]
    fn square_function_gradient() {
        // f(x) = x^2 at x = 3 -> df/dx = 6.
        let (mut params, id) = params_one("x", Matrix::from_vec(1, 1, vec![3.0]).unwrap());
        let mut tape = Tape::new(&params);
        let x = tape.param(&params, id);
        let y = tape.matmul_nt(x, x).unwrap();
        assert_eq!(tape.scalar(y).unwrap(), 9.0);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(id).unwrap().get(0, 0), 6.0);

        let report = grad_check(
            &mut params,
            |tape, p| {
                let x = tape.param(p, id);
                tape.matmul_nt(x, x)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.all_pass());
    }

    #[test]
    fn param_memoization_shares_leaves() {
        let (params, id) = params_one("w", Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap());
        let mut tape = Tape::new(&params);
        let a = tape.param(&params, id);
        let b = tape.param(&params, id);
        assert_eq!(a, b);
    }

    /// Every op in the vocabulary, exercised through a nontrivial composite
    /// and validated against central differences.
    #[test]
    fn grad_check_covers_full_vocabulary() {
        let mut rng = Rng::seed_from(11);
        let mut params = ParamSet::new();
        let w1 = params.add("w1", rng.normal_matrix(3, 4, 0.5)).unwrap();
        let w2 = params.add("w2", rng.normal_matrix(5, 4, 0.5)).unwrap();
        let w3 = params.add("w3", rng.normal_matrix(2, 10, 0.5)).unwrap();

        let build = |tape: &mut Tape, p: &ParamSet| -> Result<Var> {
            let a = tape.param(p, w1); // 3x4
            let b = tape.param(p, w2); // 5x4
            let c = tape.param(p, w3); // 2x10

            let scores = tape.matmul_nt(a, b)?; // 3x5
            let attn = tape.softmax_rows(scores, 1.7)?; // 3x5
            let mix = tape.matmul(attn, b)?; // 3x4
            let t = tape.tanh(mix); // 3x4
            let n = tape.normalize_rows(t); // 3x4
            let cat = tape.concat_rows(&[n, a])?; // 6x4
            let left = tape.slice_cols(cat, 0, 2)?; // 6x2
            let right = tape.slice_cols(cat, 2, 2)?; // 6x2
            let wide = tape.concat_cols(&[left, right])?; // 6x4
            let top = tape.slice_rows(wide, 0, 5)?; // 5x4
            let mu = tape.mean_rows(top)?; // 1x4
            let flat = tape.reshape(top, 2, 10)?; // 2x10
            let prod = tape.matmul_nt(flat, c)?; // 2x2
            let soft = tape.softmax_rows(prod, 0.9)?; // 2x2
            let lg = tape.log_floored(soft); // 2x2
            let lrow = tape.reshape(lg, 1, 4)?; // 1x4
            let scaled = tape.scale(lrow, -0.3)?; // 1x4
            let both = tape.add(scaled, mu)?; // 1x4
            let l = tape.lse(both, 2.3)?; // 1x1
            let mu2 = tape.mean_rows(both)?; // 1x4
            let dot = tape.matmul_nt(mu2, mu2)?; // 1x1
            tape.sum_scalars(&[l, dot])
        };

        let report = grad_check(&mut params, build, &GradCheckConfig::default()).unwrap();
        for slot in &report.slots {
            assert!(slot.pass, "slot {} failed with rel err {}", slot.name, slot.max_rel_err);
            assert!(slot.probes > 0);
        }
    }

    #[test]
    fn normalize_rows_zero_row_gets_identity_gradient() {
        let (params, id) = params_one("x", Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap());
        let mut tape = Tape::new(&params);
        let x = tape.param(&params, id);
        let n = tape.normalize_rows(x);
        let ones = tape.constant(Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap());
        let root = tape.matmul_nt(n, ones).unwrap();
        let grads = tape.backward(root).unwrap();
        // Sum of a passed-through zero row: gradient is 1 per entry.
        for v in grads.get(id).unwrap().as_slice() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        // The finite-difference check cannot see the pass-through convention
        // at the exact zero point (the true function is not differentiable
        // there), so only the analytic convention is asserted.
        drop(params);
    }

    #[test]
    fn log_floored_is_flat_below_the_floor() {
        let (params, id) = params_one("x", Matrix::from_vec(1, 2, vec![0.5, 0.0]).unwrap());
        let mut tape = Tape::new(&params);
        let x = tape.param(&params, id);
        let lg = tape.log_floored(x);
        let ones = tape.constant(Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap());
        let root = tape.matmul_nt(lg, ones).unwrap();
        let grads = tape.backward(root).unwrap();
        let g = grads.get(id).unwrap();
        assert!((g.get(0, 0) - 2.0).abs() < 1e-15); // d ln(x) = 1/0.5
        assert_eq!(g.get(0, 1), 0.0); // below the floor: flat
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let (params, id) = params_one("x", Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap());
        let mut tape = Tape::new(&params);
        let x = tape.param(&params, id);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn untouched_slot_has_no_gradient() {
        let mut params = ParamSet::new();
        let used = params.add("used", Matrix::from_vec(1, 1, vec![2.0]).unwrap()).unwrap();
        let unused = params.add("unused", Matrix::from_vec(1, 1, vec![5.0]).unwrap()).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.param(&params, used);
        let y = tape.matmul_nt(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(used).is_some());
        assert!(grads.get(unused).is_none());
    }

    #[test]
    fn corrupt_hook_forces_failure() {
        let (mut params, id) = params_one("x", Matrix::from_vec(1, 1, vec![3.0]).unwrap());
        let cfg = GradCheckConfig { corrupt_slot: Some("x".into()), ..Default::default() };
        let report = grad_check(
            &mut params,
            |tape, p| {
                let x = tape.param(p, id);
                tape.matmul_nt(x, x)
            },
            &cfg,
        )
        .unwrap();
        assert!(!report.all_pass());
        let _ = id;
    }

    #[test]
    fn duplicate_slot_names_are_rejected() {
        let mut params = ParamSet::new();
        params.add("w", Matrix::zeros(1, 1)).unwrap();
        assert!(params.add("w", Matrix::zeros(1, 1)).is_err());
    }
}
