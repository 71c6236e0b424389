//! Block-marginal space.
//!
//! For a decoding graph with `n` blocks and window `b`, a block-marginal
//! vector stacks one distribution over `2^b` window words per block. The
//! map `phi` sends a codeword to the one-hot stack of its window words and
//! extends affinely to distributions over codewords; the image of all
//! codeword distributions is the feasible polytope probed by
//! [`crate::lp::lp_membership`].
//!
//! Entries within a block are indexed by window word (lexicographic rank of
//! the window substring, most significant bit first).

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::bits;
use crate::ensemble::{BipartiteGraph, DecoderSpec, SCHEMA_VERSION};

/// Tolerance for probability sums (blocks and pmfs).
pub const SUM_TOL: f64 = 1e-10;
/// Most negative entry tolerated before a vector is rejected.
pub const ENTRY_FLOOR: f64 = -1e-12;
/// Tolerance for cross-block marginal agreement.
pub const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error("block {block} entry {entry} is {value}, below the negativity floor")]
    NegativeEntry { block: usize, entry: usize, value: f64 },
    #[error("block {block} sums to {sum}, expected {expected} within {tol}", tol = SUM_TOL)]
    BadBlockSum { block: usize, sum: f64, expected: f64 },
    #[error("shape mismatch: {reason}")]
    Shape { reason: String },
    #[error("pmf over codewords: {reason}")]
    BadPmf { reason: String },
}

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

/// One distribution over `2^b` window words per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMarginalVector {
    n: usize,
    b: usize,
    blocks: Vec<Vec<f64>>,
    renormalized: bool,
}

impl BlockMarginalVector {
    /// Validate entries (`>= ENTRY_FLOOR`) and per-block sums (`1` within
    /// `SUM_TOL`).
    pub fn new(b: usize, blocks: Vec<Vec<f64>>) -> Result<Self, MarginalError> {
        let n = blocks.len();
        check_shape(b, &blocks)?;
        for (i, block) in blocks.iter().enumerate() {
            let mut sum = 0.0;
            for (w, &v) in block.iter().enumerate() {
                if v < ENTRY_FLOOR {
                    return Err(MarginalError::NegativeEntry { block: i, entry: w, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(MarginalError::BadBlockSum { block: i, sum, expected: 1.0 });
            }
        }
        Ok(BlockMarginalVector { n, b, blocks, renormalized: false })
    }

    /// Clip tiny negative entries to zero and renormalize each block; the
    /// result is flagged.
    pub fn clip_renormalize(b: usize, blocks: Vec<Vec<f64>>) -> Result<Self, MarginalError> {
        check_shape(b, &blocks)?;
        let n = blocks.len();
        let mut clipped = blocks;
        for (i, block) in clipped.iter_mut().enumerate() {
            for v in block.iter_mut() {
                *v = v.max(0.0);
            }
            let sum: f64 = block.iter().sum();
            if sum <= 0.0 {
                return Err(MarginalError::BadBlockSum { block: i, sum, expected: 1.0 });
            }
            for v in block.iter_mut() {
                *v /= sum;
            }
        }
        Ok(BlockMarginalVector { n, b, blocks: clipped, renormalized: true })
    }

    /// The uniform vector: every entry `2^-b`.
    pub fn uniform(n: usize, b: usize) -> Self {
        let val = (1u64 << b) as f64;
        BlockMarginalVector {
            n,
            b,
            blocks: vec![vec![1.0 / val; 1 << b]; n],
            renormalized: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    /// Entrywise affine mix `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self, MarginalError> {
        if self.n != other.n || self.b != other.b {
            return Err(MarginalError::Shape { reason: "mixing vectors of different shape".into() });
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, bb)| a.iter().zip(bb).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
            .collect();
        BlockMarginalVector::new(self.b, blocks)
    }

    /// Marginal of block `i` on one window position: `[P(0), P(1)]`.
    pub fn bit_marginal(&self, i: usize, window_pos: usize) -> [f64; 2] {
        block_bit_marginal(&self.blocks[i], self.b, window_pos)
    }

    /// Marginal of block `i` on two window positions:
    /// `[P(00), P(01), P(10), P(11)]` with `pos_a` the high bit.
    pub fn pair_marginal(&self, i: usize, pos_a: usize, pos_b: usize) -> [f64; 4] {
        block_pair_marginal(&self.blocks[i], self.b, pos_a, pos_b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("marginal vector serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MarginalError> {
        serde_json::from_str(text).map_err(|e| MarginalError::Shape { reason: e.to_string() })
    }
}

fn check_shape(b: usize, blocks: &[Vec<f64>]) -> Result<(), MarginalError> {
    if b == 0 || b > crate::ensemble::MAX_WINDOW {
        return Err(MarginalError::Shape { reason: format!("window {b} outside 1..=16") });
    }
    if blocks.is_empty() {
        return Err(MarginalError::Shape { reason: "need at least one block".into() });
    }
    for (i, block) in blocks.iter().enumerate() {
        if block.len() != 1 << b {
            return Err(MarginalError::Shape {
                reason: format!("block {i} has {} entries, want {}", block.len(), 1 << b),
            });
        }
    }
    Ok(())
}

/// Marginal of a block table on one window position.
pub fn block_bit_marginal(block: &[f64], b: usize, window_pos: usize) -> [f64; 2] {
    let shift = b - 1 - window_pos;
    let mut out = [0.0; 2];
    for (w, &v) in block.iter().enumerate() {
        out[w >> shift & 1] += v;
    }
    out
}

/// Marginal of a block table on two window positions (`pos_a` high bit).
pub fn block_pair_marginal(block: &[f64], b: usize, pos_a: usize, pos_b: usize) -> [f64; 4] {
    let (sa, sb) = (b - 1 - pos_a, b - 1 - pos_b);
    let mut out = [0.0; 4];
    for (w, &v) in block.iter().enumerate() {
        out[(w >> sa & 1) << 1 | (w >> sb & 1)] += v;
    }
    out
}

/// Signed per-block tables summing to zero; the difference of two
/// block-marginal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationVector {
    n: usize,
    b: usize,
    blocks: Vec<Vec<f64>>,
}

impl PerturbationVector {
    pub fn new(b: usize, blocks: Vec<Vec<f64>>) -> Result<Self, MarginalError> {
        check_shape(b, &blocks)?;
        for (i, block) in blocks.iter().enumerate() {
            let sum: f64 = block.iter().sum();
            if sum.abs() > SUM_TOL {
                return Err(MarginalError::BadBlockSum { block: i, sum, expected: 0.0 });
            }
        }
        let n = blocks.len();
        Ok(PerturbationVector { n, b, blocks })
    }

    /// `a - b`, blockwise.
    pub fn difference(a: &BlockMarginalVector, b: &BlockMarginalVector) -> Result<Self, MarginalError> {
        if a.n() != b.n() || a.b() != b.b() {
            return Err(MarginalError::Shape { reason: "differencing vectors of different shape".into() });
        }
        let blocks = a
            .blocks()
            .iter()
            .zip(b.blocks())
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
            .collect();
        PerturbationVector::new(a.b(), blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    /// Largest entry magnitude over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

/// Targets `uniform - scale * eta`, validated as a block-marginal vector.
pub fn uniform_minus(eta: &PerturbationVector, scale: f64) -> Result<BlockMarginalVector, MarginalError> {
    let base = 1.0 / (1u64 << eta.b()) as f64;
    let blocks = eta
        .blocks()
        .iter()
        .map(|blk| blk.iter().map(|&v| base - scale * v).collect())
        .collect();
    BlockMarginalVector::new(eta.b(), blocks)
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

// ---------------------------------------------------------------------------
// phi maps
// ---------------------------------------------------------------------------

/// One-hot stack of the window words of `c`.
pub fn phi_of_codeword(graph: &BipartiteGraph, c: u64) -> BlockMarginalVector {
    let b = graph.window();
    let mut blocks = vec![vec![0.0; 1 << b]; graph.n()];
    for (i, block) in blocks.iter_mut().enumerate() {
        block[graph.window_word(i, c) as usize] = 1.0;
    }
    BlockMarginalVector { n: graph.n(), b, blocks, renormalized: false }
}

/// Affine extension of `phi` to a pmf over all `2^code_len` codewords,
/// given as a dense slice indexed by codeword.
pub fn phi_of_distribution(
    graph: &BipartiteGraph,
    pmf: &[f64],
) -> Result<BlockMarginalVector, MarginalError> {
    if pmf.len() != 1usize << graph.code_len() {
        return Err(MarginalError::BadPmf {
            reason: format!("pmf has {} entries, want 2^{}", pmf.len(), graph.code_len()),
        });
    }
    let mut sum = 0.0;
    for (c, &v) in pmf.iter().enumerate() {
        if v < ENTRY_FLOOR {
            return Err(MarginalError::BadPmf { reason: format!("pmf[{c}] = {v} is negative") });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(MarginalError::BadPmf { reason: format!("pmf sums to {sum}") });
    }
    let b = graph.window();
    let mut blocks = vec![vec![0.0; 1 << b]; graph.n()];
    for (c, &v) in pmf.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (i, block) in blocks.iter_mut().enumerate() {
            block[graph.window_word(i, c as u64) as usize] += v;
        }
    }
    Ok(BlockMarginalVector { n: graph.n(), b, blocks, renormalized: false })
}

/// The three reference points used by the encoder for source word `x`.
#[derive(Debug, Clone)]
pub struct ReferencePoints {
    /// `phi_I`: block `i` uniform over the decoding set `f_i^{-1}(x_i)`.
    pub independent: BlockMarginalVector,
    /// `phi_U`: every block uniform over all window words.
    pub uniform: BlockMarginalVector,
    /// `phi_A = n/(n+1) phi_I + 1/(n+1) phi_U`, the privacy anchor.
    pub anchor: BlockMarginalVector,
}

/// Build `phi_I`, `phi_U`, `phi_A` for a decoder and source word.
pub fn reference_vectors(spec: &DecoderSpec, x: u64) -> ReferencePoints {
    let graph = spec.graph();
    let (n, b) = (graph.n(), graph.window());
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let want = bits::bit(x, i as u32) == 1;
        let f = spec.window_function(i);
        let count = f.iter().filter(|&&v| v == want).count();
        debug_assert!(count > 0, "local decoding sets are never empty");
        let mass = 1.0 / count as f64;
        blocks.push(f.iter().map(|&v| if v == want { mass } else { 0.0 }).collect());
    }
    let independent = BlockMarginalVector { n, b, blocks, renormalized: false };
    let uniform = BlockMarginalVector::uniform(n, b);
    let lambda = n as f64 / (n as f64 + 1.0);
    let anchor = independent.mix(&uniform, lambda).expect("same shape");
    ReferencePoints { independent, uniform, anchor }
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

/// Where two blocks disagree on a shared marginal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyViolation {
    pub block_a: usize,
    pub block_b: usize,
    pub shared: SharedIndex,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SharedIndex {
    Bit(u32),
    Pair(u32, u32),
}

/// Cross-block agreement of bit and bit-pair marginals, plus deviation
/// statistics against the uniform reference.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub bit_consistent: bool,
    pub bitpair_consistent: bool,
    pub violations: Vec<ConsistencyViolation>,
    /// Position -> `[P(0), P(1)]`, taken from the lowest covering block.
    pub bit_marginals: BTreeMap<u32, [f64; 2]>,
    /// Covered pair -> `[P(00), P(01), P(10), P(11)]` (low position is the
    /// high bit), from the lowest covering block.
    pub pair_marginals: BTreeMap<(u32, u32), [f64; 4]>,
    /// Largest `|bit marginal - 1/2|`.
    pub e1_max: f64,
    /// Largest `|pair marginal - 1/4|`.
    pub e2_max: f64,
    /// Smallest block entry.
    pub eb_min: f64,
}

/// Compare bit and bit-pair marginals across every pair of overlapping
/// blocks, at tolerance [`CONSISTENCY_TOL`].
pub fn consistency_report(graph: &BipartiteGraph, phi: &BlockMarginalVector) -> ConsistencyReport {
    assert_eq!(graph.n(), phi.n(), "graph and vector disagree on n");
    assert_eq!(graph.window(), phi.b(), "graph and vector disagree on b");
    let b = graph.window();
    let mut violations = Vec::new();
    let mut bit_consistent = true;
    let mut bitpair_consistent = true;

    let mut bit_marginals: BTreeMap<u32, [f64; 2]> = BTreeMap::new();
    let mut pair_marginals: BTreeMap<(u32, u32), [f64; 4]> = BTreeMap::new();
    let mut e1_max = 0.0f64;
    let mut e2_max = 0.0f64;
    let mut eb_min = f64::MAX;

    let pos_of = |i: usize, l: u32| graph.set(i).iter().position(|&v| v == l).unwrap();

    for (i, block) in phi.blocks().iter().enumerate() {
        for &v in block {
            eb_min = eb_min.min(v);
        }
        for (k, &l) in graph.set(i).iter().enumerate() {
            let m = block_bit_marginal(block, b, k);
            e1_max = e1_max.max((m[0] - 0.5).abs()).max((m[1] - 0.5).abs());
            bit_marginals.entry(l).or_insert(m);
        }
        let set = graph.set(i);
        for a in 0..set.len() {
            for c in a + 1..set.len() {
                let m = block_pair_marginal(block, b, a, c);
                for &v in &m {
                    e2_max = e2_max.max((v - 0.25).abs());
                }
                pair_marginals.entry((set[a], set[c])).or_insert(m);
            }
        }
    }

    for i in 0..graph.n() {
        for j in i + 1..graph.n() {
            let shared_mask = graph.mask(i) & graph.mask(j);
            if shared_mask == 0 {
                continue;
            }
            let shared: Vec<u32> = (0..64u32).filter(|&l| shared_mask >> l & 1 == 1).collect();
            for &l in &shared {
                let mi = block_bit_marginal(phi.block(i), b, pos_of(i, l));
                let mj = block_bit_marginal(phi.block(j), b, pos_of(j, l));
                let gap = mi
                    .iter()
                    .zip(&mj)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
                if gap > CONSISTENCY_TOL {
                    bit_consistent = false;
                    violations.push(ConsistencyViolation {
                        block_a: i,
                        block_b: j,
                        shared: SharedIndex::Bit(l),
                        magnitude: gap,
                    });
                }
            }
            for a in 0..shared.len() {
                for c in a + 1..shared.len() {
                    let (l, m) = (shared[a], shared[c]);
                    let mi = block_pair_marginal(phi.block(i), b, pos_of(i, l), pos_of(i, m));
                    let mj = block_pair_marginal(phi.block(j), b, pos_of(j, l), pos_of(j, m));
                    let gap = mi
                        .iter()
                        .zip(&mj)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0f64, f64::max);
                    if gap > CONSISTENCY_TOL {
                        bitpair_consistent = false;
                        violations.push(ConsistencyViolation {
                            block_a: i,
                            block_b: j,
                            shared: SharedIndex::Pair(l, m),
                            magnitude: gap,
                        });
                    }
                }
            }
        }
    }

    ConsistencyReport {
        bit_consistent,
        bitpair_consistent,
        violations,
        bit_marginals,
        pair_marginals,
        e1_max,
        e2_max,
        eb_min,
    }
}

// ---------------------------------------------------------------------------
// Eligibility
// ---------------------------------------------------------------------------

/// One failed eligibility bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EligibilityViolation {
    /// A block of the perturbation does not sum to zero.
    BlockSum { block: usize, sum: f64 },
    /// A shared-pair marginal entry exceeds `n^-4` in magnitude.
    SharedPair { block: usize, low: u32, high: u32, cell: usize, value: f64, bound: f64 },
    /// An entry exceeds the one-sided cap `1 / (n^2 |f_i^{-1}(x_i)|)`.
    Entry { block: usize, word: u32, value: f64, bound: f64 },
    /// A provided decomposition endpoint is not bit-pair consistent.
    Decomposition { endpoint: usize, violations: usize },
}

/// Eligibility decision with per-bound margins.
#[derive(Debug, Clone, Serialize)]
pub struct EligibilityReport {
    pub eligible: bool,
    pub violations: Vec<EligibilityViolation>,
    /// Largest absolute block sum (should be ~0).
    pub max_block_sum: f64,
    /// The shared-pair bound `n^-4`.
    pub pair_bound: f64,
    /// Largest shared-pair marginal magnitude observed.
    pub max_shared_pair: f64,
    /// Per-block one-sided entry caps `1 / (n^2 |f_i^{-1}(x_i)|)`.
    pub entry_bounds: Vec<f64>,
    /// Largest signed entry observed per block.
    pub max_entries: Vec<f64>,
}

/// Decide whether `eta` is an eligible perturbation around the valid set
/// for source word `x`: blocks sum to zero, shared-pair marginals are at
/// most `n^-4` in magnitude, and entries respect the one-sided cap
/// `1/(n^2 |f_i^{-1}(x_i)|)`. When the `phi + eta` decomposition endpoints
/// are supplied they must each be bit-pair consistent.
pub fn check_eligibility(
    spec: &DecoderSpec,
    x: u64,
    eta: &PerturbationVector,
    decomposition: Option<(&BlockMarginalVector, &BlockMarginalVector)>,
) -> EligibilityReport {
    let graph = spec.graph();
    assert_eq!(graph.n(), eta.n(), "graph and perturbation disagree on n");
    assert_eq!(graph.window(), eta.b(), "graph and perturbation disagree on b");
    let n = graph.n() as f64;
    let b = graph.window();
    let pair_bound = n.powi(-4);
    let mut violations = Vec::new();

    let mut max_block_sum = 0.0f64;
    for (i, block) in eta.blocks().iter().enumerate() {
        let sum: f64 = block.iter().sum();
        max_block_sum = max_block_sum.max(sum.abs());
        if sum.abs() > SUM_TOL {
            violations.push(EligibilityViolation::BlockSum { block: i, sum });
        }
    }

    let mut max_shared_pair = 0.0f64;
    let pos_of = |i: usize, l: u32| graph.set(i).iter().position(|&v| v == l).unwrap();
    for i in 0..graph.n() {
        for j in i + 1..graph.n() {
            let shared_mask = graph.mask(i) & graph.mask(j);
            if shared_mask.count_ones() < 2 {
                continue;
            }
            let shared: Vec<u32> = (0..64u32).filter(|&l| shared_mask >> l & 1 == 1).collect();
            for a in 0..shared.len() {
                for c in a + 1..shared.len() {
                    let (l, m) = (shared[a], shared[c]);
                    for &blk in &[i, j] {
                        let pm = block_pair_marginal(eta.block(blk), b, pos_of(blk, l), pos_of(blk, m));
                        for (cell, &v) in pm.iter().enumerate() {
                            max_shared_pair = max_shared_pair.max(v.abs());
                            if v.abs() > pair_bound + 1e-15 {
                                violations.push(EligibilityViolation::SharedPair {
                                    block: blk,
                                    low: l,
                                    high: m,
                                    cell,
                                    value: v,
                                    bound: pair_bound,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut entry_bounds = Vec::with_capacity(graph.n());
    let mut max_entries = Vec::with_capacity(graph.n());
    for (i, block) in eta.blocks().iter().enumerate() {
        let pre = spec.preimage_size(i, bits::bit(x, i as u32) == 1) as f64;
        let bound = 1.0 / (n * n * pre);
        entry_bounds.push(bound);
        let mut max_entry = f64::MIN;
        for (w, &v) in block.iter().enumerate() {
            max_entry = max_entry.max(v);
            if v > bound + 1e-15 {
                violations.push(EligibilityViolation::Entry {
                    block: i,
                    word: w as u32,
                    value: v,
                    bound,
                });
            }
        }
        max_entries.push(max_entry);
    }

    if let Some((lhs, rhs)) = decomposition {
        for (endpoint, vector) in [(0usize, lhs), (1, rhs)] {
            let report = consistency_report(graph, vector);
            if !(report.bit_consistent && report.bitpair_consistent) {
                violations.push(EligibilityViolation::Decomposition {
                    endpoint,
                    violations: report.violations.len(),
                });
            }
        }
    }

    EligibilityReport {
        eligible: violations.is_empty(),
        violations,
        max_block_sum,
        pair_bound,
        max_shared_pair,
        entry_bounds,
        max_entries,
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MarginalDoc {
    version: u32,
    n: usize,
    b: usize,
    blocks: Vec<Vec<f64>>,
    #[serde(default)]
    renormalized: bool,
}

impl Serialize for BlockMarginalVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MarginalDoc {
            version: SCHEMA_VERSION,
            n: self.n,
            b: self.b,
            blocks: self.blocks.clone(),
            renormalized: self.renormalized,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlockMarginalVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = MarginalDoc::deserialize(deserializer)?;
        if doc.version != SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported marginal document version {}", doc.version)));
        }
        if doc.blocks.len() != doc.n {
            return Err(D::Error::custom("block count disagrees with n"));
        }
        let mut v = BlockMarginalVector::new(doc.b, doc.blocks).map_err(D::Error::custom)?;
        v.renormalized = doc.renormalized;
        Ok(v)
    }
}
