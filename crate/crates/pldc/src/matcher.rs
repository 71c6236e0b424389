//! Additive marginal matcher.
//!
//! Represents a distribution over codewords as the uniform base plus a sum
//! of *lifted terms*: each term is a small table on a subset `J` of
//! codeword positions, contributing `2^-(L-|J|) * table[c_J]` to the mass
//! of codeword `c` (where `L` is the codeword length). Tables sum to zero,
//! so every term preserves normalization, and marginalization has a closed
//! form that never touches the `2^L`-sized state space.
//!
//! [`match_marginals`] drives three stages of term construction — single
//! bits, covered pairs, then whole windows — so that after the last stage
//! every window marginal equals its target in the chosen arithmetic. The
//! stage order works because each stage's correction tables have vanishing
//! lower-order marginals; the window stage additionally needs pairwise
//! window overlaps of at most two positions so its tables are invisible to
//! the other windows.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::BipartiteGraph;
use crate::marginal::{consistency_report, BlockMarginalVector};
use crate::scalar::Scalar;

/// Largest support size a single lifted term may have.
pub const MAX_TERM_SUPPORT: usize = 20;
/// Largest codeword length for which nonnegativity is checked densely.
pub const DENSE_CHECK_MAX: usize = 24;
/// Tolerance on a term table's sum (float dust; exact arithmetic gives 0).
pub const TERM_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("matching targets are inconsistent across windows: {reason}")]
    InconsistentTargets { reason: String },
    #[error("windows {i} and {j} share {overlap} positions; window-stage terms need pairwise overlaps of at most 2")]
    OverlapTooLarge { i: usize, j: usize, overlap: usize },
    #[error("matched distribution has negative mass {mass:e} (witness word {word:?})")]
    NegativeMass { mass: f64, word: Option<u64> },
    #[error("bad lifted term: {reason}")]
    BadTerm { reason: String },
    #[error("shape mismatch: {reason}")]
    Shape { reason: String },
}

/// A table on a subset of codeword positions, lifted additively to the
/// full space. `support` is strictly increasing; `table` has `2^|support|`
/// entries indexed by the supported bits read most-significant-first.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTerm<S> {
    pub support: Vec<u32>,
    pub table: Vec<S>,
}

/// Uniform base plus lifted terms; see the module docs for the pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveDistribution<S> {
    code_len: usize,
    terms: Vec<LiftedTerm<S>>,
}

impl<S: Scalar> AdditiveDistribution<S> {
    pub fn uniform(code_len: usize) -> Self {
        AdditiveDistribution { code_len, terms: Vec::new() }
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn terms(&self) -> &[LiftedTerm<S>] {
        &self.terms
    }

    /// Append a zero-sum correction table on `support`.
    pub fn push_term(&mut self, support: Vec<u32>, table: Vec<S>) -> Result<(), MatcherError> {
        if support.is_empty() || support.len() > MAX_TERM_SUPPORT {
            return Err(MatcherError::BadTerm {
                reason: format!("support size {} outside 1..={MAX_TERM_SUPPORT}", support.len()),
            });
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(MatcherError::BadTerm {
                reason: "support must be strictly increasing".into(),
            });
        }
        if support.last().copied().unwrap_or(0) as usize >= self.code_len {
            return Err(MatcherError::BadTerm {
                reason: format!(
                    "support position {} outside codeword length {}",
                    support.last().unwrap(),
                    self.code_len
                ),
            });
        }
        if table.len() != 1 << support.len() {
            return Err(MatcherError::BadTerm {
                reason: format!(
                    "table has {} entries for a {}-bit support",
                    table.len(),
                    support.len()
                ),
            });
        }
        let sum = table.iter().fold(S::zero(), |acc, v| acc + v.clone());
        if sum.to_f64().abs() > TERM_SUM_TOL {
            return Err(MatcherError::BadTerm {
                reason: format!("table sums to {:e}, breaking normalization", sum.to_f64()),
            });
        }
        self.terms.push(LiftedTerm { support, table });
        Ok(())
    }

    /// Mass of codeword `c`.
    pub fn probability(&self, c: u64) -> S {
        let mut acc = S::one();
        for term in &self.terms {
            let idx = crate::bits::extract(c, &term.support) as usize;
            let scale = S::pow2(term.support.len() as i32);
            acc = acc + scale * term.table[idx].clone();
        }
        S::pow2(-(self.code_len as i32)) * acc
    }

    /// Closed-form marginal onto `positions` (strictly increasing), as an
    /// additive distribution over `positions.len()` relabeled bits.
    pub fn marginalize(&self, positions: &[u32]) -> Result<AdditiveDistribution<S>, MatcherError> {
        if !positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(MatcherError::Shape {
                reason: "marginal positions must be strictly increasing".into(),
            });
        }
        if positions.last().map_or(false, |&p| p as usize >= self.code_len) {
            return Err(MatcherError::Shape {
                reason: "marginal position outside codeword length".into(),
            });
        }
        let mut out = AdditiveDistribution::uniform(positions.len());
        for term in &self.terms {
            // Rank within `positions` for each kept support entry, in order.
            let width = term.support.len();
            let kept: Vec<(usize, u32)> = term
                .support
                .iter()
                .enumerate()
                .filter_map(|(k, p)| {
                    positions.binary_search(p).ok().map(|rank| (k, rank as u32))
                })
                .collect();
            if kept.is_empty() {
                continue; // zero-sum table vanishes entirely
            }
            let mut table = vec![S::zero(); 1 << kept.len()];
            for (v, value) in term.table.iter().enumerate() {
                let mut u = 0usize;
                for (slot, &(k, _)) in kept.iter().enumerate() {
                    let bit = (v >> (width - 1 - k)) & 1;
                    u |= bit << (kept.len() - 1 - slot);
                }
                table[u] = table[u].clone() + value.clone();
            }
            if table.iter().all(|v| v.is_zero()) {
                continue;
            }
            out.terms.push(LiftedTerm {
                support: kept.iter().map(|&(_, rank)| rank).collect(),
                table,
            });
        }
        Ok(out)
    }

    /// Marginal onto `positions`, evaluated at all `2^|positions|` words.
    /// Output is indexed by the marginal word read most-significant-first
    /// (`positions[0]` is the high bit), matching block-marginal tables.
    pub fn dense_marginal(&self, positions: &[u32]) -> Result<Vec<S>, MatcherError> {
        if positions.len() > MAX_TERM_SUPPORT {
            return Err(MatcherError::Shape {
                reason: format!("dense marginal over {} positions", positions.len()),
            });
        }
        let small = self.marginalize(positions)?;
        let k = positions.len();
        Ok((0u64..1 << k)
            .map(|msb_word| {
                // probability() reads its argument as a plain word (bit r of
                // the argument = rank-r position), so reverse the bit order.
                let mut w = 0u64;
                for r in 0..k {
                    if (msb_word >> (k - 1 - r)) & 1 == 1 {
                        w |= 1 << r;
                    }
                }
                small.probability(w)
            })
            .collect())
    }

    /// `2^-L (1 - sum_t 2^|J_t| max|table_t|)`, a lower bound on every mass.
    pub fn certified_lower_bound(&self) -> S {
        let mut slack = S::one();
        for term in &self.terms {
            let mut worst = S::zero();
            for v in &term.table {
                let a = v.clone().abs();
                if a > worst {
                    worst = a;
                }
            }
            slack = slack - S::pow2(term.support.len() as i32) * worst;
        }
        S::pow2(-(self.code_len as i32)) * slack
    }

    /// Check pointwise nonnegativity: densely when the state space allows,
    /// otherwise by the certified lower bound.
    pub fn verify_nonnegative(&self) -> NonnegativityEvidence {
        if self.code_len <= DENSE_CHECK_MAX {
            let mut min = S::pow2(-(self.code_len as i32));
            let mut argmin = 0u64;
            for c in 0..(1u64 << self.code_len) {
                let p = self.probability(c);
                if p < min {
                    min = p;
                    argmin = c;
                }
            }
            NonnegativityEvidence::Dense { min: min.to_f64(), argmin }
        } else {
            NonnegativityEvidence::Certified { lower_bound: self.certified_lower_bound().to_f64() }
        }
    }

    /// Draw one codeword by exact sequential (ancestral) sampling: bit `l`
    /// is drawn from its closed-form conditional given bits `0..l`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<u64, MatcherError> {
        let mut word = 0u64;
        for l in 0..self.code_len {
            // Scale-free prefix masses m(w) = 2^(l+1) * M_l(w).
            let m = |w: u64| -> S {
                let mut acc = S::one();
                for term in &self.terms {
                    let width = term.support.len();
                    let fixed: Vec<usize> = (0..width)
                        .filter(|&k| term.support[k] as usize <= l)
                        .collect();
                    if fixed.is_empty() {
                        continue;
                    }
                    let mut sigma = S::zero();
                    'entry: for (v, value) in term.table.iter().enumerate() {
                        for &k in &fixed {
                            let table_bit = (v >> (width - 1 - k)) & 1;
                            let word_bit = ((w >> term.support[k]) & 1) as usize;
                            if table_bit != word_bit {
                                continue 'entry;
                            }
                        }
                        sigma = sigma + value.clone();
                    }
                    acc = acc + S::pow2(fixed.len() as i32) * sigma;
                }
                acc
            };
            let m0 = m(word).to_f64();
            let m1 = m(word | (1 << l)).to_f64();
            if m0 < -TERM_SUM_TOL || m1 < -TERM_SUM_TOL {
                return Err(MatcherError::NegativeMass {
                    mass: m0.min(m1) * 0.5f64.powi(l as i32 + 1),
                    word: None,
                });
            }
            let (m0, m1) = (m0.max(0.0), m1.max(0.0));
            let total = m0 + m1;
            if total <= 0.0 {
                return Err(MatcherError::NegativeMass { mass: 0.0, word: Some(word) });
            }
            if rng.gen::<f64>() < m1 / total {
                word |= 1 << l;
            }
        }
        Ok(word)
    }
}

impl AdditiveDistribution<f64> {
    pub fn to_json(&self) -> String {
        let doc = DistributionDoc {
            code_len: self.code_len,
            terms: self
                .terms
                .iter()
                .map(|t| TermDoc { support: t.support.clone(), table: t.table.clone() })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("distribution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MatcherError> {
        let doc: DistributionDoc = serde_json::from_str(text)
            .map_err(|e| MatcherError::Shape { reason: format!("bad document: {e}") })?;
        let mut dist = AdditiveDistribution::uniform(doc.code_len);
        for term in doc.terms {
            dist.push_term(term.support, term.table)?;
        }
        Ok(dist)
    }
}

#[derive(Serialize, Deserialize)]
struct TermDoc {
    support: Vec<u32>,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionDoc {
    code_len: usize,
    terms: Vec<TermDoc>,
}

/// How pointwise nonnegativity was established (or refuted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NonnegativityEvidence {
    Dense { min: f64, argmin: u64 },
    Certified { lower_bound: f64 },
}

impl NonnegativityEvidence {
    pub fn lower_bound(&self) -> f64 {
        match self {
            NonnegativityEvidence::Dense { min, .. } => *min,
            NonnegativityEvidence::Certified { lower_bound } => *lower_bound,
        }
    }
}

/// Audit trail of a matching run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    /// Terms emitted by the bit, pair, and window stages.
    pub term_counts: [usize; 3],
    /// After each stage: max abs error of bit, pair, and window marginals
    /// against their targets.
    pub stage_residuals: [[f64; 3]; 3],
    pub nonnegativity: NonnegativityEvidence,
}

/// A matched distribution together with its audit report.
#[derive(Debug, Clone)]
pub struct MatchOutcome<S> {
    pub distribution: AdditiveDistribution<S>,
    pub report: MatchReport,
}

/// Build an additive distribution whose window marginals equal `targets`.
///
/// Fails when targets disagree across windows at shared bits or pairs, when
/// some pair of windows overlaps in more than two positions, or when the
/// matched signed measure has negative mass. The additive family covers a
/// neighborhood of the uniform distribution: jointly infeasible targets
/// always surface as negative mass, and so do feasible targets that sit too
/// far from uniform.
pub fn match_marginals<S: Scalar>(
    graph: &BipartiteGraph,
    targets: &BlockMarginalVector,
) -> Result<MatchOutcome<S>, MatcherError> {
    if graph.n() != targets.n() || graph.window() != targets.b() {
        return Err(MatcherError::Shape {
            reason: format!(
                "graph (n={}, b={}) vs targets (n={}, b={})",
                graph.n(),
                graph.window(),
                targets.n(),
                targets.b()
            ),
        });
    }
    let consistency = consistency_report(graph, targets);
    if !(consistency.bit_consistent && consistency.bitpair_consistent) {
        let reason = match consistency.violations.first() {
            Some(v) => format!(
                "blocks {} and {} disagree at {:?} by {:e}",
                v.block_a, v.block_b, v.shared, v.magnitude
            ),
            None => "unspecified violation".into(),
        };
        return Err(MatcherError::InconsistentTargets { reason });
    }
    for i in 0..graph.n() {
        for j in (i + 1)..graph.n() {
            let overlap = graph.overlap(i, j);
            if overlap > 2 {
                return Err(MatcherError::OverlapTooLarge { i, j, overlap });
            }
        }
    }

    let mut dist = AdditiveDistribution::<S>::uniform(graph.code_len());
    let mut term_counts = [0usize; 3];
    let mut stage_residuals = [[0.0f64; 3]; 3];

    // Stage 1: single bits. Table [d, -d] with d = (rho0 - rho1)/2 is
    // exactly zero-sum and sets the bit marginal to (1 + rho0 - rho1)/2.
    let owners = graph.blocks_containing();
    for (pos, blocks) in owners.iter().enumerate() {
        let Some(&i) = blocks.first() else { continue };
        let k = graph.set(i).iter().position(|&p| p as usize == pos).expect("owner contains bit");
        let rho = targets.bit_marginal(i, k);
        let d = (S::from_f64(rho[0]) - S::from_f64(rho[1])) / S::from_f64(2.0);
        if d.is_zero() {
            continue;
        }
        dist.push_term(vec![pos as u32], vec![d.clone(), -d])?;
        term_counts[0] += 1;
    }
    stage_residuals[0] = measure_residuals(graph, &dist, targets)?;

    // Stage 2: covered pairs. Correction tables have zero bit marginals,
    // so they leave stage 1 intact and ignore pairs they merely touch.
    for (&(l, r), blocks) in &graph.covered_pairs() {
        let i = blocks[0];
        let set = graph.set(i);
        let kl = set.iter().position(|&p| p == l).expect("cover contains pair");
        let kr = set.iter().position(|&p| p == r).expect("cover contains pair");
        let rho = targets.pair_marginal(i, kl, kr);
        let current = dist.dense_marginal(&[l, r])?;
        let table: Vec<S> = (0..4)
            .map(|w| S::from_f64(rho[w]) - current[w].clone())
            .collect();
        if table.iter().all(|v| v.is_zero()) {
            continue;
        }
        dist.push_term(vec![l, r], table)?;
        term_counts[1] += 1;
    }
    stage_residuals[1] = measure_residuals(graph, &dist, targets)?;

    // Stage 3: whole windows. Correction tables now have zero bit and pair
    // marginals, so with overlaps of at most two they cannot be seen from
    // any other window.
    for i in 0..graph.n() {
        let support = graph.set(i).to_vec();
        let current = dist.dense_marginal(&support)?;
        let table: Vec<S> = targets
            .block(i)
            .iter()
            .zip(current.iter())
            .map(|(&t, c)| S::from_f64(t) - c.clone())
            .collect();
        if table.iter().all(|v| v.is_zero()) {
            continue;
        }
        dist.push_term(support, table)?;
        term_counts[2] += 1;
    }
    stage_residuals[2] = measure_residuals(graph, &dist, targets)?;

    let nonnegativity = dist.verify_nonnegative();
    let failed = match &nonnegativity {
        NonnegativityEvidence::Dense { min, argmin } if *min < -TERM_SUM_TOL => {
            Some((*min, Some(*argmin)))
        }
        NonnegativityEvidence::Certified { lower_bound } if *lower_bound < 0.0 => {
            Some((*lower_bound, None))
        }
        _ => None,
    };
    if let Some((mass, word)) = failed {
        return Err(MatcherError::NegativeMass { mass, word });
    }

    Ok(MatchOutcome {
        distribution: dist,
        report: MatchReport { term_counts, stage_residuals, nonnegativity },
    })
}

/// Max abs deviation of the current bit, pair, and window marginals from
/// their targets, each measured in the working arithmetic before the final
/// conversion, so exact matches report exactly zero.
fn measure_residuals<S: Scalar>(
    graph: &BipartiteGraph,
    dist: &AdditiveDistribution<S>,
    targets: &BlockMarginalVector,
) -> Result<[f64; 3], MatcherError> {
    let b = graph.window();
    let mut worst = [0.0f64; 3];
    for i in 0..graph.n() {
        let current = dist.dense_marginal(graph.set(i))?;
        for k in 0..b {
            let rho = targets.bit_marginal(i, k);
            for a in 0..2 {
                let mut acc = S::zero();
                for (w, v) in current.iter().enumerate() {
                    if (w >> (b - 1 - k)) & 1 == a {
                        acc = acc + v.clone();
                    }
                }
                let err = (acc - S::from_f64(rho[a])).abs().to_f64().abs();
                worst[0] = worst[0].max(err);
            }
        }
        for ka in 0..b {
            for kb in (ka + 1)..b {
                let rho = targets.pair_marginal(i, ka, kb);
                for pat in 0..4usize {
                    let mut acc = S::zero();
                    for (w, v) in current.iter().enumerate() {
                        let wa = (w >> (b - 1 - ka)) & 1;
                        let wb = (w >> (b - 1 - kb)) & 1;
                        if wa * 2 + wb == pat {
                            acc = acc + v.clone();
                        }
                    }
                    let err = (acc - S::from_f64(rho[pat])).abs().to_f64().abs();
                    worst[1] = worst[1].max(err);
                }
            }
        }
        for (w, v) in current.iter().enumerate() {
            let err = (v.clone() - S::from_f64(targets.block(i)[w])).abs().to_f64().abs();
            worst[2] = worst[2].max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::phi_of_distribution;
    use num::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chain_graph() -> BipartiteGraph {
        BipartiteGraph::new(
            10,
            4,
            vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6], vec![6, 7, 8, 9]],
        )
        .unwrap()
    }

    /// Uniform-over-odd-parity window marginals: dyadic and consistent,
    /// but far from uniform.
    fn parity_targets() -> BlockMarginalVector {
        let block: Vec<f64> = (0..16u32)
            .map(|w| if w.count_ones() % 2 == 1 { 1.0 / 8.0 } else { 0.0 })
            .collect();
        BlockMarginalVector::new(4, vec![block.clone(), block.clone(), block]).unwrap()
    }

    /// Uniform windows with a dyadic parity-character wiggle: exactly
    /// consistent (the character has zero bit and pair marginals) and
    /// close enough to uniform for the additive family to stay a pmf.
    fn character_targets() -> BlockMarginalVector {
        let delta = 1.0 / 256.0;
        let block: Vec<f64> = (0..16u32)
            .map(|w| 1.0 / 16.0 + if w.count_ones() % 2 == 1 { delta } else { -delta })
            .collect();
        BlockMarginalVector::new(4, vec![block.clone(), block.clone(), block]).unwrap()
    }

    #[test]
    fn marginalize_agrees_with_dense_summation() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut dist = AdditiveDistribution::<f64>::uniform(8);
        for support in [vec![0u32, 2, 5], vec![1, 6], vec![4], vec![2, 3, 6, 7]] {
            let len = 1 << support.len();
            let mut table: Vec<f64> = (0..len)
                .map(|_| rand::Rng::gen_range(&mut rng, -0.01..0.01))
                .collect();
            let mean = table.iter().sum::<f64>() / len as f64;
            table.iter_mut().for_each(|v| *v -= mean);
            dist.push_term(support, table).unwrap();
        }
        let dense: Vec<f64> = (0u64..256).map(|c| dist.probability(c)).collect();
        assert!((dense.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for positions in [vec![0u32, 1], vec![2, 5, 7], vec![6], vec![0, 3, 4, 6]] {
            let got = dist.dense_marginal(&positions).unwrap();
            let mut want = vec![0.0; 1 << positions.len()];
            for (c, &p) in dense.iter().enumerate() {
                want[crate::bits::extract(c as u64, &positions) as usize] += p;
            }
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "positions {positions:?}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn matches_dyadic_targets_exactly_in_rational_arithmetic() {
        let g = chain_graph();
        let targets = character_targets();
        let outcome = match_marginals::<BigRational>(&g, &targets).unwrap();
        assert_eq!(outcome.report.stage_residuals[2], [0.0, 0.0, 0.0]);
        // Stage sanity: bits are matched from stage 1 on, pairs from stage 2.
        assert_eq!(outcome.report.stage_residuals[0][0], 0.0);
        assert_eq!(outcome.report.stage_residuals[1][1], 0.0);
        assert!(outcome.report.nonnegativity.lower_bound() >= 0.0);
        // Float mode lands within rounding dust of the same distribution.
        let float = match_marginals::<f64>(&g, &targets).unwrap();
        for i in 0..3 {
            let exact = outcome.distribution.dense_marginal(g.set(i)).unwrap();
            let approx = float.distribution.dense_marginal(g.set(i)).unwrap();
            for (e, a) in exact.iter().zip(approx.iter()) {
                assert!((Scalar::to_f64(e) - a).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_the_image_of_an_explicit_pmf() {
        let g = BipartiteGraph::new(6, 3, vec![vec![0, 1, 2], vec![2, 3, 4], vec![3, 4, 5]])
            .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        // Bounded entry ratios keep the image inside the additive family's
        // nonnegativity neighborhood.
        let mut pmf: Vec<f64> =
            (0..64).map(|_| rand::Rng::gen_range(&mut rng, 0.75..1.25)).collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|v| *v /= total);
        let targets = phi_of_distribution(&g, &pmf).unwrap();
        let outcome = match_marginals::<f64>(&g, &targets).unwrap();
        let final_res = outcome.report.stage_residuals[2];
        assert!(final_res.iter().all(|&r| r < 1e-10), "residuals {final_res:?}");
        // The additive distribution is a genuine pmf here.
        assert!(outcome.report.nonnegativity.lower_bound() >= -1e-12);
        let total: f64 = (0u64..64).map(|c| outcome.distribution.probability(c)).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn feasible_targets_far_from_uniform_exceed_the_additive_neighborhood() {
        // Uniform-over-odd-parity windows are realizable (the membership
        // oracle certifies a witness in exact arithmetic), yet the additive
        // family's marginal match is a signed measure: its mass at the
        // all-zeros word is exactly 1/2^10 * (1 - 3) = -1/512.
        let g = chain_graph();
        let targets = parity_targets();
        match match_marginals::<f64>(&g, &targets) {
            Err(MatcherError::NegativeMass { mass, word: Some(0) }) => {
                assert_eq!(mass, -1.0 / 512.0);
            }
            other => panic!("expected negative mass at word 0, got {other:?}"),
        }
        let membership = crate::lp::lp_membership(&g, &targets).unwrap();
        assert!(membership.is_feasible(), "the same targets are realizable");
    }

    #[test]
    fn three_cycle_parity_targets_surface_as_negative_mass() {
        let g = BipartiteGraph::new(3, 2, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let targets = BlockMarginalVector::new(
            2,
            vec![
                vec![0.5, 0.0, 0.0, 0.5],
                vec![0.5, 0.0, 0.0, 0.5],
                vec![0.0, 0.5, 0.5, 0.0],
            ],
        )
        .unwrap();
        match match_marginals::<f64>(&g, &targets) {
            Err(MatcherError::NegativeMass { mass, word }) => {
                assert!(mass < -0.01, "expected a decisive violation, got {mass}");
                assert!(word.is_some());
            }
            other => panic!("expected negative mass, got {other:?}"),
        }
    }

    #[test]
    fn rejects_overlaps_beyond_two() {
        let g = BipartiteGraph::new(5, 4, vec![vec![0, 1, 2, 3], vec![1, 2, 3, 4]]).unwrap();
        let targets = BlockMarginalVector::uniform(2, 4);
        match match_marginals::<f64>(&g, &targets) {
            Err(MatcherError::OverlapTooLarge { i: 0, j: 1, overlap: 3 }) => {}
            other => panic!("expected overlap rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_inconsistent_targets() {
        let g = BipartiteGraph::new(3, 2, vec![vec![0, 1], vec![1, 2]]).unwrap();
        // Shared bit 1: marginal 1 from block 0, marginal 0 from block 1.
        let targets = BlockMarginalVector::new(
            2,
            vec![vec![0.0, 0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(
            match_marginals::<f64>(&g, &targets),
            Err(MatcherError::InconsistentTargets { .. })
        ));
    }

    #[test]
    fn sampling_matches_the_dense_pmf() {
        let g = BipartiteGraph::new(6, 3, vec![vec![0, 1, 2], vec![2, 3, 4], vec![3, 4, 5]])
            .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let mut pmf: Vec<f64> = (0..64).map(|_| rand::Rng::gen_range(&mut rng, 0.5..1.5)).collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|v| *v /= total);
        let targets = phi_of_distribution(&g, &pmf).unwrap();
        let outcome = match_marginals::<f64>(&g, &targets).unwrap();
        let dense: Vec<f64> = (0u64..64).map(|c| outcome.distribution.probability(c)).collect();

        let trials = 200_000usize;
        let mut counts = vec![0usize; 64];
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        for _ in 0..trials {
            counts[outcome.distribution.sample(&mut rng).unwrap() as usize] += 1;
        }
        // Chi-square against the dense pmf; threshold is the 1 - 1e-9
        // quantile at 63 degrees of freedom.
        let mut stat = 0.0;
        for (c, &k) in counts.iter().enumerate() {
            let expected = dense[c] * trials as f64;
            stat += (k as f64 - expected).powi(2) / expected;
        }
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let quantile = ChiSquared::new(63.0).unwrap().inverse_cdf(1.0 - 1e-9);
        assert!(stat < quantile, "chi-square {stat} over {quantile}");
    }

    #[test]
    fn serde_round_trip() {
        let g = chain_graph();
        let targets = character_targets();
        let outcome = match_marginals::<f64>(&g, &targets).unwrap();
        let text = outcome.distribution.to_json();
        let back = AdditiveDistribution::from_json(&text).unwrap();
        assert_eq!(outcome.distribution, back);
    }

    #[test]
    fn push_term_validation() {
        let mut dist = AdditiveDistribution::<f64>::uniform(4);
        assert!(matches!(
            dist.push_term(vec![1, 1], vec![0.1, -0.1, 0.0, 0.0]),
            Err(MatcherError::BadTerm { .. })
        ));
        assert!(matches!(
            dist.push_term(vec![4], vec![0.1, -0.1]),
            Err(MatcherError::BadTerm { .. })
        ));
        assert!(matches!(
            dist.push_term(vec![0], vec![0.1, 0.1]),
            Err(MatcherError::BadTerm { .. })
        ));
        assert!(matches!(
            dist.push_term(vec![0], vec![0.1, -0.1, 0.0]),
            Err(MatcherError::BadTerm { .. })
        ));
        dist.push_term(vec![0], vec![0.1, -0.1]).unwrap();
    }
}
