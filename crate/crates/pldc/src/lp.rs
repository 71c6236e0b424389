//! Exact membership oracle for the block-marginal polytope.
//!
//! Feasibility of `A P = phi, P >= 0` is decided by a phase-one revised
//! simplex. `A` is the 0/1 matrix stacking, per block, one row per window
//! word (the row of `(i, w)` selects codewords whose window `i` reads `w`),
//! plus a final normalization row of ones. Columns are never materialized:
//! each codeword's column has exactly `n + 1` ones at known rows.
//!
//! Instances with at most [`EXACT_STATE_LIMIT`] codeword states run in
//! exact rational arithmetic: the phase-one optimum (the minimal mass of
//! constraint repair) is computed exactly, and infeasibility verdicts come
//! with a separating certificate re-verified against every column in exact
//! arithmetic. Feasibility still means "repair mass at most [`LP_TOL`]" in
//! both modes, because `f64`-carried queries arrive with rounding dust of
//! order 1e-16; exactly consistent inputs report a repair mass of exactly
//! zero. Larger instances run entirely in `f64`.

use std::collections::BTreeMap;

use num::rational::BigRational;
use thiserror::Error;

use crate::ensemble::BipartiteGraph;
use crate::marginal::BlockMarginalVector;
use crate::scalar::Scalar;

/// Equality/negativity tolerance of the floating-point mode.
pub const LP_TOL: f64 = 1e-9;
/// Largest number of codeword states solved in exact rational arithmetic.
pub const EXACT_STATE_LIMIT: usize = 4096;
/// Hard cap on codeword states (memory/time envelope).
pub const MAX_CODE_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("membership oracle handles codewords up to {max} bits, got {code_len}", max = MAX_CODE_LEN)]
    InstanceTooLarge { code_len: usize },
    #[error("graph and marginal vector disagree: {reason}")]
    Shape { reason: String },
    #[error("simplex stalled: {reason}")]
    Stalled { reason: String },
}

/// Outcome of a membership query.
#[derive(Debug, Clone)]
pub enum MembershipResult {
    /// A pmf over codewords realizing the queried vector (sparse, at most
    /// one entry per constraint row).
    Feasible {
        witness: BTreeMap<u64, f64>,
        /// Leftover constraint-repair mass (0 for exactly consistent
        /// inputs, otherwise bounded by [`LP_TOL`]).
        residual: f64,
        /// True when the verdict was computed in exact arithmetic.
        exact: bool,
    },
    /// A separating functional `y` (one entry per constraint row, block
    /// rows first, normalization row last) with `y . A_c <= 0` for every
    /// codeword `c` while `y . phi = gap > 0`.
    Infeasible {
        certificate: Vec<f64>,
        gap: f64,
        exact: bool,
    },
}

impl MembershipResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, MembershipResult::Feasible { .. })
    }
}

/// Decide whether `phi` lies in the polytope of block-marginal vectors
/// realizable by a pmf over codewords of `graph`.
pub fn lp_membership(
    graph: &BipartiteGraph,
    phi: &BlockMarginalVector,
) -> Result<MembershipResult, LpError> {
    if graph.code_len() > MAX_CODE_LEN {
        return Err(LpError::InstanceTooLarge { code_len: graph.code_len() });
    }
    if graph.n() != phi.n() || graph.window() != phi.b() {
        return Err(LpError::Shape {
            reason: format!(
                "graph (n={}, b={}) vs vector (n={}, b={})",
                graph.n(),
                graph.window(),
                phi.n(),
                phi.b()
            ),
        });
    }
    let states = 1usize << graph.code_len();
    let block_states = graph.block_states();
    let m = graph.n() * block_states + 1;

    // Right-hand side: stacked blocks then the normalization row. Entries a
    // hair below zero (within the vector's negativity floor) are clamped.
    let mut rhs = Vec::with_capacity(m);
    for block in phi.blocks() {
        for &v in block {
            rhs.push(v.max(0.0));
        }
    }
    rhs.push(1.0);

    let col_rows = |c: usize| -> Vec<usize> {
        let mut rows = Vec::with_capacity(graph.n() + 1);
        for i in 0..graph.n() {
            rows.push(i * block_states + graph.window_word(i, c as u64) as usize);
        }
        rows.push(m - 1);
        rows
    };

    if states <= EXACT_STATE_LIMIT {
        let b: Vec<BigRational> =
            rhs.iter().map(|&v| <BigRational as Scalar>::from_f64(v)).collect();
        let outcome = phase_one(m, states, &col_rows, &b, <BigRational as Scalar>::zero())?;
        finish::<BigRational>(outcome, &b, states, &col_rows, true)
    } else {
        let outcome = phase_one(m, states, &col_rows, &rhs, LP_TOL)?;
        finish::<f64>(outcome, &rhs, states, &col_rows, false)
    }
}

struct PhaseOneOutcome<S> {
    /// Basic variable per row; artificials are `n_cols + row`.
    basis: Vec<usize>,
    /// Basic values (nonnegative).
    x_b: Vec<S>,
    /// Simplex multipliers at termination.
    y: Vec<S>,
    /// Residual infeasibility `sum of artificial values`.
    objective: S,
}

/// Phase-one revised simplex with an explicit basis inverse.
///
/// Minimizes the total artificial mass of `A x + s = b, x, s >= 0`. Pivot
/// selection is most-negative reduced cost, switching permanently to
/// Bland's rule after a long degenerate streak so termination is
/// guaranteed.
fn phase_one<S: Scalar>(
    m: usize,
    n_cols: usize,
    col_rows: &dyn Fn(usize) -> Vec<usize>,
    b: &[S],
    tol: S,
) -> Result<PhaseOneOutcome<S>, LpError> {
    let mut binv: Vec<Vec<S>> = (0..m)
        .map(|r| (0..m).map(|k| if r == k { S::one() } else { S::zero() }).collect())
        .collect();
    let mut basis: Vec<usize> = (0..m).map(|r| n_cols + r).collect();
    let mut x_b: Vec<S> = b.to_vec();
    let mut in_basis = vec![false; n_cols];

    let max_iters = 60 * (m + 16);
    let mut bland = false;
    let mut degenerate_streak = 0usize;
    let mut y = vec![S::zero(); m];

    for _iter in 0..max_iters {
        // Multipliers y = c_B^T B^{-1}; artificial costs are 1, real are 0.
        for k in 0..m {
            let mut acc = S::zero();
            for r in 0..m {
                if basis[r] >= n_cols && !binv[r][k].is_zero() {
                    acc = acc + binv[r][k].clone();
                }
            }
            y[k] = acc;
        }

        // Price real columns: reduced cost = -sum of y over the column rows.
        let mut entering: Option<(usize, S)> = None;
        for j in 0..n_cols {
            if in_basis[j] {
                continue;
            }
            let mut dot = S::zero();
            for r in col_rows(j) {
                if !y[r].is_zero() {
                    dot = dot + y[r].clone();
                }
            }
            let rc = -dot;
            if rc < -tol.clone() {
                match (&entering, bland) {
                    (_, true) => {
                        entering = Some((j, rc));
                        break;
                    }
                    (None, false) => entering = Some((j, rc)),
                    (Some((_, best)), false) if rc < *best => entering = Some((j, rc)),
                    _ => {}
                }
            }
        }
        let Some((j, _)) = entering else {
            break; // optimal
        };

        // Direction d = B^{-1} A_j.
        let rows = col_rows(j);
        let mut d: Vec<S> = (0..m)
            .map(|r| {
                let mut acc = S::zero();
                for &k in &rows {
                    if !binv[r][k].is_zero() {
                        acc = acc + binv[r][k].clone();
                    }
                }
                acc
            })
            .collect();

        // Ratio test; ties break toward the smallest basic variable id
        // (Bland-compatible).
        let mut leave: Option<(usize, S)> = None;
        for r in 0..m {
            if d[r] > tol.clone() {
                let ratio = x_b[r].clone() / d[r].clone();
                match &leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, best)) => {
                        if ratio < *best || (ratio == *best && basis[r] < basis[*lr]) {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((lr, ratio)) = leave else {
            return Err(LpError::Stalled {
                reason: "descent direction with no blocking row in phase one".into(),
            });
        };
        if ratio.is_zero() {
            degenerate_streak += 1;
            if degenerate_streak > 2 * m + 10 {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }

        // Pivot: scale row lr, eliminate elsewhere, update basics.
        let pivot = d[lr].clone();
        for k in 0..m {
            if !binv[lr][k].is_zero() {
                binv[lr][k] = binv[lr][k].clone() / pivot.clone();
            }
        }
        x_b[lr] = x_b[lr].clone() / pivot.clone();
        for r in 0..m {
            if r != lr && !d[r].is_zero() {
                let factor = d[r].clone();
                for k in 0..m {
                    if !binv[lr][k].is_zero() {
                        binv[r][k] = binv[r][k].clone() - factor.clone() * binv[lr][k].clone();
                    }
                }
                x_b[r] = x_b[r].clone() - factor.clone() * x_b[lr].clone();
                d[r] = S::zero();
            }
        }
        if basis[lr] < n_cols {
            in_basis[basis[lr]] = false;
        }
        basis[lr] = j;
        in_basis[j] = true;
    }

    // Final multipliers and objective.
    for k in 0..m {
        let mut acc = S::zero();
        for r in 0..m {
            if basis[r] >= n_cols && !binv[r][k].is_zero() {
                acc = acc + binv[r][k].clone();
            }
        }
        y[k] = acc;
    }
    let mut objective = S::zero();
    for r in 0..m {
        if basis[r] >= n_cols {
            objective = objective + x_b[r].clone();
        }
    }
    Ok(PhaseOneOutcome { basis, x_b, y, objective })
}

/// Interpret a phase-one optimum as a membership verdict, re-verifying the
/// certificate against every column before returning it.
fn finish<S: Scalar>(
    outcome: PhaseOneOutcome<S>,
    b: &[S],
    n_cols: usize,
    col_rows: &dyn Fn(usize) -> Vec<usize>,
    exact: bool,
) -> Result<MembershipResult, LpError> {
    // Arithmetic-error tolerance: zero in exact mode. Distinct from the
    // feasibility threshold below, which absorbs the input's float dust.
    let tol = if exact { S::zero() } else { S::from_f64(LP_TOL) };
    if outcome.objective <= S::from_f64(LP_TOL) {
        let mut witness = BTreeMap::new();
        for (r, &col) in outcome.basis.iter().enumerate() {
            if col < n_cols {
                let v = outcome.x_b[r].clone();
                if !v.is_zero() {
                    witness.insert(col as u64, v.to_f64());
                }
            }
        }
        return Ok(MembershipResult::Feasible {
            witness,
            residual: outcome.objective.to_f64(),
            exact,
        });
    }

    // Farkas check: y . A_c <= 0 for every column, y . b > 0.
    let y = &outcome.y;
    for j in 0..n_cols {
        let mut dot = S::zero();
        for r in col_rows(j) {
            if !y[r].is_zero() {
                dot = dot + y[r].clone();
            }
        }
        if dot > tol {
            return Err(LpError::Stalled {
                reason: format!("separating certificate fails on column {j}"),
            });
        }
    }
    let mut gap = S::zero();
    for (r, v) in b.iter().enumerate() {
        if !y[r].is_zero() && !v.is_zero() {
            gap = gap + y[r].clone() * v.clone();
        }
    }
    if gap <= tol {
        return Err(LpError::Stalled {
            reason: "separating certificate has nonpositive gap".into(),
        });
    }
    Ok(MembershipResult::Infeasible {
        certificate: y.iter().map(|v| v.to_f64()).collect(),
        gap: gap.to_f64(),
        exact,
    })
}
