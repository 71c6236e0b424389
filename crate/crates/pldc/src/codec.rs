//! The end-to-end private codec.
//!
//! For a source word `x`, the encoder enumerates the valid codewords
//! (those decoding back to `x`), expurgates over-heavy cylinders, and
//! builds a two-branch mixture plan:
//!
//! - with weight `n/(n+1)`, a uniform draw from the expurgated valid set
//!   (this branch never errs);
//! - with weight `1/(n+1)`, a draw from an additively matched distribution
//!   whose window marginals are `uniform - n*eta`, where `eta` is the
//!   deviation of the expurgated-valid window marginals from the
//!   zero-error reference.
//!
//! The two deviations cancel: every window marginal of the mixture equals
//! the anchor mixture of the zero-error and uniform references, which
//! depends only on the decoded bit's value — that is the privacy
//! mechanism. Any failure along the way (source weight outside the coding
//! ball, empty expurgated set, matcher failure) falls back to the uniform
//! distribution over all codewords, and the plan records the reason so
//! audits can attribute leakage.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bits;
use crate::ensemble::{CodeParams, DecoderSpec};
use crate::marginal::{
    check_eligibility, reference_vectors, uniform_minus, BlockMarginalVector, EligibilityReport,
    PerturbationVector,
};
use crate::matcher::{match_marginals, AdditiveDistribution, MatcherError};

/// Largest codeword length the exhaustive valid-set scan accepts.
pub const MAX_ENUM_LEN: usize = 26;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("valid-set enumeration handles codewords up to {max} bits, got {code_len}", max = MAX_ENUM_LEN)]
    InstanceTooLarge { code_len: usize },
    #[error("source word {x:#b} has no valid codeword")]
    EmptyValidSet { x: u64 },
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error("shape mismatch: {reason}")]
    Shape { reason: String },
}

/// Why a plan fell back to the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FallbackReason {
    WeightOutsideBall,
    MatcherFailed,
    EmptyExpurgated,
}

// ---------------------------------------------------------------------------
// Valid codeword index
// ---------------------------------------------------------------------------

/// All valid codewords for one source word, with per-window cylinder
/// statistics and the expurgated subset.
///
/// Invariants: `codewords` is sorted and every entry decodes to `x`;
/// `expurgated` is a sorted subset of `codewords`; for every window `i`,
/// `cylinder_counts[i]` sums to `codewords.len()` and `expurgated_counts[i]`
/// sums to `expurgated.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidCodewordIndex {
    pub x: u64,
    pub code_len: usize,
    pub window: usize,
    pub codewords: Vec<u64>,
    /// Per window, per window word: valid codewords reading that word.
    pub cylinder_counts: Vec<Vec<usize>>,
    pub expurgated: Vec<u64>,
    pub expurgated_counts: Vec<Vec<usize>>,
    pub bad_cylinders: Vec<(usize, u32)>,
}

impl ValidCodewordIndex {
    /// Window marginals of the expurgated set with the *original* valid
    /// count as denominator; blocks may sum to less than one when
    /// expurgation removed codewords.
    pub fn deficient_expurgated_blocks(&self) -> Vec<Vec<f64>> {
        let total = self.codewords.len() as f64;
        self.expurgated_counts
            .iter()
            .map(|counts| counts.iter().map(|&c| c as f64 / total).collect())
            .collect()
    }

    /// Window marginals of the uniform distribution over the expurgated
    /// set, or `None` when it is empty.
    pub fn expurgated_uniform_marginals(&self) -> Option<BlockMarginalVector> {
        if self.expurgated.is_empty() {
            return None;
        }
        let total = self.expurgated.len() as f64;
        let blocks = self
            .expurgated_counts
            .iter()
            .map(|counts| counts.iter().map(|&c| c as f64 / total).collect())
            .collect();
        Some(BlockMarginalVector::new(self.window, blocks).expect("counts normalize"))
    }

    /// Fraction of valid mass removed by expurgation.
    pub fn removed_fraction(&self) -> f64 {
        if self.codewords.is_empty() {
            0.0
        } else {
            1.0 - self.expurgated.len() as f64 / self.codewords.len() as f64
        }
    }
}

fn cylinder_histogram(spec: &DecoderSpec, codewords: &[u64]) -> Vec<Vec<usize>> {
    let graph = spec.graph();
    let mut counts = vec![vec![0usize; graph.block_states()]; graph.n()];
    for &c in codewords {
        for i in 0..graph.n() {
            counts[i][graph.window_word(i, c) as usize] += 1;
        }
    }
    counts
}

/// Exhaustively scan all codewords and index the valid set for `x`.
pub fn enumerate_valid(spec: &DecoderSpec, x: u64) -> Result<ValidCodewordIndex, CodecError> {
    enumerate_valid_with_workers(spec, x, 1)
}

/// As [`enumerate_valid`], splitting the scan over `workers` disjoint
/// codeword ranges merged in order, so results are identical for every
/// worker count.
pub fn enumerate_valid_with_workers(
    spec: &DecoderSpec,
    x: u64,
    workers: usize,
) -> Result<ValidCodewordIndex, CodecError> {
    let code_len = spec.params.code_len();
    if code_len > MAX_ENUM_LEN {
        return Err(CodecError::InstanceTooLarge { code_len });
    }
    let states = 1u64 << code_len;
    let workers = workers.max(1).min(64);
    let chunk = states.div_ceil(workers as u64);
    let mut codewords = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as u64)
            .map(|w| {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(states);
                scope.spawn(move || {
                    let mut found = Vec::new();
                    'word: for c in lo..hi {
                        for i in 0..spec.params.n {
                            if spec.local_decode(i, c) != (bits::bit(x, i as u32) == 1) {
                                continue 'word;
                            }
                        }
                        found.push(c);
                    }
                    found
                })
            })
            .collect();
        for handle in handles {
            codewords.extend(handle.join().expect("scan worker panicked"));
        }
    });
    let cylinder_counts = cylinder_histogram(spec, &codewords);
    Ok(ValidCodewordIndex {
        x,
        code_len,
        window: spec.params.b,
        expurgated: codewords.clone(),
        expurgated_counts: cylinder_counts.clone(),
        codewords,
        cylinder_counts,
        bad_cylinders: Vec::new(),
    })
}

/// Mark cylinders whose valid-mass share exceeds
/// `1/|f_i^{-1}(x_i)| + 1/(n 2^b)` as bad and drop every codeword lying in
/// any bad cylinder. An empty result is a legal outcome that triggers the
/// plan fallback.
pub fn expurgate(mut index: ValidCodewordIndex, spec: &DecoderSpec) -> ValidCodewordIndex {
    let graph = spec.graph();
    let n = graph.n();
    let total = index.codewords.len();
    if total == 0 {
        return index;
    }
    let mut bad = vec![vec![false; graph.block_states()]; n];
    let mut bad_cylinders = Vec::new();
    for i in 0..n {
        let want = bits::bit(index.x, i as u32) == 1;
        let threshold = 1.0 / spec.preimage_size(i, want) as f64
            + 1.0 / (n as f64 * graph.block_states() as f64);
        for (w, &count) in index.cylinder_counts[i].iter().enumerate() {
            if count as f64 / total as f64 > threshold {
                bad[i][w] = true;
                bad_cylinders.push((i, w as u32));
            }
        }
    }
    let expurgated: Vec<u64> = index
        .codewords
        .iter()
        .copied()
        .filter(|&c| (0..n).all(|i| !bad[i][graph.window_word(i, c) as usize]))
        .collect();
    index.expurgated_counts = cylinder_histogram(spec, &expurgated);
    index.expurgated = expurgated;
    index.bad_cylinders = bad_cylinders;
    index
}

/// Expected valid-set size over the decoder ensemble for a weight-`w`
/// source word: `2^L q1^w q0^(n-w)` with `q1 = table_ones / 2^b'`.
pub fn expected_valid_count(params: &CodeParams, weight: u32) -> f64 {
    let q1 = params.table_ones() as f64 / (1u64 << params.b_prime) as f64;
    let q0 = 1.0 - q1;
    (params.code_len() as f64).exp2() * q1.powi(weight as i32) * q0.powi(params.n as i32 - weight as i32)
}

// ---------------------------------------------------------------------------
// Encoding plan
// ---------------------------------------------------------------------------

/// Diagnostics kept alongside a two-branch plan.
#[derive(Debug, Clone)]
pub struct PlanDiagnostics {
    pub eta: PerturbationVector,
    pub eligibility: EligibilityReport,
    pub bad_cylinders: Vec<(usize, u32)>,
    pub valid_count: usize,
    pub expurgated_count: usize,
}

#[derive(Debug, Clone)]
pub enum PlanKind {
    /// The private two-branch mixture.
    TwoBranch {
        expurgated: Vec<u64>,
        matched: AdditiveDistribution<f64>,
        diagnostics: Box<PlanDiagnostics>,
    },
    /// Uniform over the full valid set (weight 1); zero error, used by the
    /// identity scheme and as an audit reference.
    PureValid { codewords: Vec<u64> },
    /// Uniform over all codewords.
    Fallback { reason: FallbackReason },
}

/// A fully determined conditional distribution over codewords for one
/// source word.
#[derive(Debug, Clone)]
pub struct EncodingPlan {
    pub x: u64,
    n: usize,
    code_len: usize,
    pub kind: PlanKind,
}

impl EncodingPlan {
    /// Weight of the zero-error branch: `n/(n+1)`, or 1 for pure-valid
    /// plans, or 0 in fallback.
    pub fn valid_weight(&self) -> f64 {
        match &self.kind {
            PlanKind::TwoBranch { .. } => 1.0 - self.matched_weight(),
            PlanKind::PureValid { .. } => 1.0,
            PlanKind::Fallback { .. } => 0.0,
        }
    }

    /// Weight of the matched branch: `1/(n+1)` for two-branch plans.
    pub fn matched_weight(&self) -> f64 {
        match &self.kind {
            PlanKind::TwoBranch { .. } => 1.0 / (self.n as f64 + 1.0),
            _ => 0.0,
        }
    }

    pub fn fallback_reason(&self) -> Option<FallbackReason> {
        match &self.kind {
            PlanKind::Fallback { reason } => Some(*reason),
            _ => None,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self.kind, PlanKind::Fallback { .. })
    }

    /// Draw one codeword. Branch pick, then the branch draw, in a fixed
    /// order, so a seeded generator replays exactly.
    pub fn encode<R: Rng>(&self, rng: &mut R) -> Result<u64, CodecError> {
        match &self.kind {
            PlanKind::TwoBranch { expurgated, matched, .. } => {
                if rng.gen::<f64>() < self.valid_weight() {
                    Ok(expurgated[rng.gen_range(0..expurgated.len())])
                } else {
                    Ok(matched.sample(rng)?)
                }
            }
            PlanKind::PureValid { codewords } => Ok(codewords[rng.gen_range(0..codewords.len())]),
            PlanKind::Fallback { .. } => Ok(rng.gen::<u64>() & ((1u64 << self.code_len) - 1)),
        }
    }

    /// Exact mass the plan assigns to codeword `c`.
    pub fn probability(&self, c: u64) -> f64 {
        match &self.kind {
            PlanKind::TwoBranch { expurgated, matched, .. } => {
                let valid = if expurgated.binary_search(&c).is_ok() {
                    self.valid_weight() / expurgated.len() as f64
                } else {
                    0.0
                };
                valid + self.matched_weight() * matched.probability(c)
            }
            PlanKind::PureValid { codewords } => {
                if codewords.binary_search(&c).is_ok() {
                    1.0 / codewords.len() as f64
                } else {
                    0.0
                }
            }
            PlanKind::Fallback { .. } => (self.code_len as f64).exp2().recip(),
        }
    }

    /// Exact window-`i` marginal of the plan (closed form, no state scan).
    pub fn block_marginal(&self, spec: &DecoderSpec, i: usize) -> Result<Vec<f64>, CodecError> {
        let graph = spec.graph();
        let states = graph.block_states();
        match &self.kind {
            PlanKind::TwoBranch { expurgated, matched, .. } => {
                let mut out = vec![0.0; states];
                let w_valid = self.valid_weight() / expurgated.len() as f64;
                for &c in expurgated {
                    out[graph.window_word(i, c) as usize] += w_valid;
                }
                let matched_marg = matched.dense_marginal(graph.set(i))?;
                for (o, m) in out.iter_mut().zip(matched_marg) {
                    *o += self.matched_weight() * m;
                }
                Ok(out)
            }
            PlanKind::PureValid { codewords } => {
                let mut out = vec![0.0; states];
                let w = 1.0 / codewords.len() as f64;
                for &c in codewords {
                    out[graph.window_word(i, c) as usize] += w;
                }
                Ok(out)
            }
            PlanKind::Fallback { .. } => Ok(vec![1.0 / states as f64; states]),
        }
    }

    /// Exact probability that decoded bit `i` differs from `x_i`, from the
    /// branch structure: the valid branch never errs; the matched branch
    /// errs with the mass its window marginal puts outside `f_i^{-1}(x_i)`;
    /// the fallback errs with the uniform miss mass.
    pub fn per_bit_error(&self, spec: &DecoderSpec) -> Result<Vec<f64>, CodecError> {
        let graph = spec.graph();
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let want = bits::bit(self.x, i as u32) == 1;
            let err = match &self.kind {
                PlanKind::TwoBranch { matched, .. } => {
                    let marg = matched.dense_marginal(graph.set(i))?;
                    let miss: f64 = marg
                        .iter()
                        .enumerate()
                        .filter(|&(w, _)| spec.decode_window(i, w as u32) != want)
                        .map(|(_, &m)| m)
                        .sum();
                    self.matched_weight() * miss
                }
                PlanKind::PureValid { .. } => 0.0,
                PlanKind::Fallback { .. } => {
                    let states = graph.block_states();
                    1.0 - spec.preimage_size(i, want) as f64 / states as f64
                }
            };
            out.push(err);
        }
        Ok(out)
    }

    /// Exact probability that the decoded word differs from `x`, by a dense
    /// scan of the codeword space (`None` above the enumeration envelope).
    pub fn exact_block_error(&self, spec: &DecoderSpec) -> Option<f64> {
        if self.code_len > MAX_ENUM_LEN {
            return None;
        }
        let mut correct = 0.0;
        for c in 0..(1u64 << self.code_len) {
            if spec.global_decode(c) == self.x {
                correct += self.probability(c);
            }
        }
        Some(1.0 - correct)
    }
}

/// Build the conditional encoding distribution for `x`.
///
/// Never fails on in-envelope instances: every soft failure (weight outside
/// the coding ball, empty expurgated set, ineligible deviation or matcher
/// failure) produces a uniform fallback plan with the reason recorded.
pub fn build_encoding_plan(spec: &DecoderSpec, x: u64) -> Result<EncodingPlan, CodecError> {
    let params = &spec.params;
    let shell = |kind: PlanKind| EncodingPlan {
        x,
        n: params.n,
        code_len: params.code_len(),
        kind,
    };
    if bits::weight(x, params.n) as f64 > params.weight_cutoff() {
        return Ok(shell(PlanKind::Fallback { reason: FallbackReason::WeightOutsideBall }));
    }
    let index = expurgate(enumerate_valid(spec, x)?, spec);
    let Some(phi_expurgated) = index.expurgated_uniform_marginals() else {
        return Ok(shell(PlanKind::Fallback { reason: FallbackReason::EmptyExpurgated }));
    };
    let references = reference_vectors(spec, x);
    let eta = match PerturbationVector::difference(&phi_expurgated, &references.independent) {
        Ok(eta) => eta,
        Err(_) => {
            return Ok(shell(PlanKind::Fallback { reason: FallbackReason::MatcherFailed }))
        }
    };
    let eligibility = check_eligibility(spec, x, &eta, None);
    if !eligibility.eligible {
        return Ok(shell(PlanKind::Fallback { reason: FallbackReason::MatcherFailed }));
    }
    let Ok(targets) = uniform_minus(&eta, params.n as f64) else {
        return Ok(shell(PlanKind::Fallback { reason: FallbackReason::MatcherFailed }));
    };
    let matched = match match_marginals::<f64>(spec.graph(), &targets) {
        Ok(outcome) => outcome.distribution,
        Err(_) => {
            return Ok(shell(PlanKind::Fallback { reason: FallbackReason::MatcherFailed }))
        }
    };
    let diagnostics = Box::new(PlanDiagnostics {
        eta,
        eligibility,
        bad_cylinders: index.bad_cylinders.clone(),
        valid_count: index.codewords.len(),
        expurgated_count: index.expurgated.len(),
    });
    Ok(shell(PlanKind::TwoBranch { expurgated: index.expurgated, matched, diagnostics }))
}

impl EncodingPlan {
    /// A plan that ignores the source word entirely: uniform over all
    /// codewords. Used as an audit baseline (its leakage is exactly zero).
    pub fn uniform_fallback(spec: &DecoderSpec, x: u64, reason: FallbackReason) -> Self {
        EncodingPlan {
            x,
            n: spec.params.n,
            code_len: spec.params.code_len(),
            kind: PlanKind::Fallback { reason },
        }
    }

    /// A weight-one zero-error plan: uniform over the full valid set. The
    /// identity scheme's exact encoder, and an audit reference elsewhere.
    pub fn pure_valid(spec: &DecoderSpec, x: u64) -> Result<Self, CodecError> {
        let index = enumerate_valid(spec, x)?;
        if index.codewords.is_empty() {
            return Err(CodecError::EmptyValidSet { x });
        }
        Ok(EncodingPlan {
            x,
            n: spec.params.n,
            code_len: spec.params.code_len(),
            kind: PlanKind::PureValid { codewords: index.codewords },
        })
    }
}

// ---------------------------------------------------------------------------
// Bit planes
// ---------------------------------------------------------------------------

/// Split a sequence over an alphabet of size `alphabet` into
/// `ceil(log2 alphabet)` binary planes; plane `l` holds bit `l` of each
/// symbol.
pub fn bitplanes(symbols: &[u32], alphabet: u32) -> Result<Vec<Vec<bool>>, CodecError> {
    if alphabet < 2 {
        return Err(CodecError::Shape { reason: "alphabet needs at least two symbols".into() });
    }
    if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet) {
        return Err(CodecError::Shape {
            reason: format!("symbol {bad} outside alphabet of size {alphabet}"),
        });
    }
    let k = (32 - (alphabet - 1).leading_zeros()).max(1) as usize;
    Ok((0..k)
        .map(|l| symbols.iter().map(|&s| (s >> l) & 1 == 1).collect())
        .collect())
}

/// Inverse of [`bitplanes`]: reassemble symbols from planes.
pub fn merge_bitplanes(planes: &[Vec<bool>]) -> Result<Vec<u32>, CodecError> {
    let Some(first) = planes.first() else {
        return Err(CodecError::Shape { reason: "no planes to merge".into() });
    };
    if planes.iter().any(|p| p.len() != first.len()) {
        return Err(CodecError::Shape { reason: "planes have unequal lengths".into() });
    }
    Ok((0..first.len())
        .map(|t| {
            planes
                .iter()
                .enumerate()
                .fold(0u32, |acc, (l, plane)| acc | ((plane[t] as u32) << l))
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Two-stage residual composition
// ---------------------------------------------------------------------------

/// A pluggable second-stage coder for sparse residual words.
pub trait SparseCoder {
    /// Declared rate (codeword bits per source bit).
    fn rate(&self) -> f64;
    /// Whether the coder preserves the per-bit privacy property.
    fn is_private(&self) -> bool;
    fn encode(&self, z: u64, n: usize, rng: &mut dyn rand::RngCore) -> u64;
    fn decode(&self, c2: u64, n: usize) -> u64;
}

/// Rate-1 identity coder: trivially private and zero-error.
pub struct IdentityCoder;

impl SparseCoder for IdentityCoder {
    fn rate(&self) -> f64 {
        1.0
    }
    fn is_private(&self) -> bool {
        true
    }
    fn encode(&self, z: u64, _n: usize, _rng: &mut dyn rand::RngCore) -> u64 {
        z
    }
    fn decode(&self, c2: u64, _n: usize) -> u64 {
        c2
    }
}

/// First-stage codec composed with a sparse-residual second stage: the
/// second stage carries `Z = X xor X̂` whenever `Z` fits the sparsity
/// budget, otherwise a uniform word (keeping the second stage
/// uninformative), and decoding is the xor of both stages.
pub struct ResidualComposition<'a, T: SparseCoder> {
    pub spec: &'a DecoderSpec,
    pub stage2: T,
    /// Sparsity budget as a fraction of `n`.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualOutcome {
    pub c1: u64,
    pub c2: u64,
    pub stage1_decode: u64,
    pub z: u64,
    pub z_in_budget: bool,
    pub decoded: u64,
}

impl<T: SparseCoder> ResidualComposition<'_, T> {
    pub fn combined_rate(&self) -> f64 {
        self.spec.params.rate + self.stage2.rate()
    }

    pub fn compose<R: Rng>(&self, x: u64, rng: &mut R) -> Result<ResidualOutcome, CodecError> {
        let n = self.spec.params.n;
        let plan = build_encoding_plan(self.spec, x)?;
        let c1 = plan.encode(rng)?;
        let stage1_decode = self.spec.global_decode(c1);
        let z = x ^ stage1_decode;
        let z_in_budget = bits::weight(z, n) as f64 <= self.delta * n as f64 + 1e-9;
        let c2 = if z_in_budget {
            self.stage2.encode(z, n, rng)
        } else {
            rng.gen::<u64>() & ((1u64 << n) - 1)
        };
        let decoded = stage1_decode ^ self.stage2.decode(c2, n);
        Ok(ResidualOutcome { c1, c2, stage1_decode, z, z_in_budget, decoded })
    }
}

// ---------------------------------------------------------------------------
// Codebook export
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CodebookDoc {
    x: String,
    count: usize,
    expurgated_count: usize,
    bad_cylinders: Vec<(usize, u32)>,
    codewords: Vec<String>,
}

/// JSON dump of a valid-codeword index; codewords as fixed-width hex.
pub fn codebook_json(index: &ValidCodewordIndex, n: usize) -> String {
    let hex_width = index.code_len.div_ceil(4);
    let doc = CodebookDoc {
        x: bits::format_bits(index.x, n),
        count: index.codewords.len(),
        expurgated_count: index.expurgated.len(),
        bad_cylinders: index.bad_cylinders.clone(),
        codewords: index.codewords.iter().map(|c| format!("{c:0hex_width$x}")).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("codebook serializes")
}
