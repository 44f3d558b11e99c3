//! Modern Hopfield associative memory: softmax retrieval and its energy.
//!
//! Patterns are stored as the rows of a matrix. A query state is scored
//! against every pattern, the scores pass through a tempered softmax, and
//! retrieval returns the softmax-weighted mixture of stored patterns:
//!
//! ```text
//! update(X, xi)    = softmax(beta * X xi^T) X
//! energy(X, xi)    = -lse(beta, X xi^T) + 0.5 * xi xi^T + c0
//! hopfield(R,Y,V)  = softmax(beta * R Y^T) V      (one step, batched rows)
//! ```
//!
//! Each update step never increases the energy, which is what makes the
//! iteration a retrieval: states slide downhill toward a stored pattern (or
//! a metastable mixture of similar ones). The model itself always uses the
//! single-step operator; [`fixpoint`] exists as a diagnostic for inspecting
//! convergence behavior.
//!
//! Sharpness is controlled by the inverse temperature `beta`: large values
//! snap retrieval onto the single best-matching row, small values blur it
//! toward the uniform average of the stored rows.

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix};
use crate::tape::{Tape, Var};

/// Energy of a state against a pattern bank (patterns are rows of `patterns`,
/// `state` is a single row). `c0` is the additive offset that makes the
/// canonical bound nonnegative; it does not affect the dynamics.
pub fn energy(patterns: &Matrix, state: &Matrix, beta: f64, c0: f64) -> Result<f64> {
    if state.rows() != 1 || state.cols() != patterns.cols() {
        return Err(Error::Dimension {
            op: "hopfield_energy",
            left_rows: patterns.rows(),
            left_cols: patterns.cols(),
            right_rows: state.rows(),
            right_cols: state.cols(),
        });
    }
    let scores = numeric::matmul_nt(state, patterns)?;
    let lse = numeric::log_sum_exp(scores.row(0), beta)?;
    let sq: f64 = state.row(0).iter().map(|v| v * v).sum();
    Ok(-lse + 0.5 * sq + c0)
}

/// One retrieval step: the softmax-weighted mixture of stored patterns.
///
/// Implemented as `hopfield_op(state, patterns, patterns, beta)`, so the two
/// entry points are the same floating-point computation by construction.
pub fn update(patterns: &Matrix, state: &Matrix, beta: f64) -> Result<Matrix> {
    hopfield_op(state, patterns, patterns, beta)
}

/// Outcome of iterating [`update`] until the state stops moving.
#[derive(Debug, Clone)]
pub struct Fixpoint {
    pub state: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate [`update`] until the max-abs change drops to `tol` or `max_iters`
/// steps have run. Diagnostic only - the model never iterates.
pub fn fixpoint(
    patterns: &Matrix,
    state: &Matrix,
    beta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Fixpoint> {
    if !(tol > 0.0) {
        return Err(Error::parameter("fixpoint", format!("tolerance must be positive, got {tol}")));
    }
    let mut current = state.clone();
    for it in 1..=max_iters {
        let next = update(patterns, &current, beta)?;
        let mut delta: f64 = 0.0;
        for (a, b) in next.as_slice().iter().zip(current.as_slice()) {
            delta = delta.max((a - b).abs());
        }
        current = next;
        if delta <= tol {
            return Ok(Fixpoint { state: current, iterations: it, converged: true });
        }
    }
    Ok(Fixpoint { state: current, iterations: max_iters, converged: false })
}

/// Batched single-step retrieval: `softmax_rows(beta * R Y^T) V`.
///
/// `r` holds one query per row, `y` the association keys, `v` the content
/// rows returned for each key. Every output row is a convex combination of
/// the rows of `v`.
pub fn hopfield_op(r: &Matrix, y: &Matrix, v: &Matrix, beta: f64) -> Result<Matrix> {
    if y.rows() != v.rows() {
        return Err(Error::Dimension {
            op: "hopfield_op",
            left_rows: y.rows(),
            left_cols: y.cols(),
            right_rows: v.rows(),
            right_cols: v.cols(),
        });
    }
    let scores = numeric::matmul_nt(r, y)?;
    let weights = numeric::softmax_rows(&scores, beta)?;
    numeric::matmul(&weights, v)
}

/// Tape-recorded version of [`hopfield_op`], for differentiable layers.
pub fn hopfield_op_tape(tape: &mut Tape, r: Var, y: Var, v: Var, beta: f64) -> Result<Var> {
    if tape.value(y).rows() != tape.value(v).rows() {
        let (yv, vv) = (tape.value(y), tape.value(v));
        return Err(Error::Dimension {
            op: "hopfield_op",
            left_rows: yv.rows(),
            left_cols: yv.cols(),
            right_rows: vv.rows(),
            right_cols: vv.cols(),
        });
    }
    let scores = tape.matmul_nt(r, y)?;
    let weights = tape.softmax_rows(scores, beta)?;
    tape.matmul(weights, v)
}
