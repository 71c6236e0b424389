//! Audits and studies: exact privacy measurement, Monte-Carlo error and
//! distortion estimation, ensemble concentration statistics, and the
//! excess-fraction inequality checker.
//!
//! The privacy audit is fully closed-form: it computes each plan's window
//! marginals exactly (no sampling) and reports the worst total-variation
//! distance between the conditional window distributions of any two source
//! words agreeing on the decoded bit. Zero leakage is the operational
//! meaning of private local decoding. A mutual-information summary is
//! emitted alongside for interpretability; the metric of record is TV.
//!
//! All randomized studies draw per-trial generator streams from one base
//! seed, so results are independent of the worker count and replay
//! bit-identically.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bits;
use crate::codec::{
    enumerate_valid, expected_valid_count, expurgate, CodecError, EncodingPlan, FallbackReason,
    MAX_ENUM_LEN,
};
use crate::ensemble::{pair_overlap_tail, binomial_f64, CodeParams, DecoderSpec, EnsembleError, SyndromeMap};
use crate::marginal::tv_distance;

/// Largest audited scope (number of enumerated source words).
pub const SCOPE_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("audit scope holds {size} source words, cap is {cap}")]
    ScopeTooLarge { size: usize, cap: usize },
    #[error("bad input: {reason}")]
    BadInput { reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Decorrelated per-index seed stream (splitmix64 finalizer over
/// `base + index`), shared by every parallel study so that worker count
/// never affects results.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `f` on every index in `0..items` across `workers` threads and
/// return the outputs in index order regardless of scheduling.
pub fn parallel_map<T, F>(items: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(items.max(1));
    if workers == 1 {
        return (0..items).map(f).collect();
    }
    let chunk = items.div_ceil(workers);
    let mut out: Vec<Option<T>> = Vec::with_capacity(items);
    out.resize_with(items, || None);
    let f = &f;
    std::thread::scope(|scope| {
        let mut rest = out.as_mut_slice();
        let mut start = 0usize;
        for _ in 0..workers {
            let len = chunk.min(rest.len());
            if len == 0 {
                break;
            }
            let (mine, tail) = rest.split_at_mut(len);
            rest = tail;
            let base = start;
            scope.spawn(move || {
                for (off, slot) in mine.iter_mut().enumerate() {
                    *slot = Some(f(base + off));
                }
            });
            start += len;
        }
    });
    out.into_iter().map(|slot| slot.expect("worker filled slot")).collect()
}

// ---------------------------------------------------------------------------
// Privacy audit
// ---------------------------------------------------------------------------

/// Which source words an audit or error study enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditScope {
    /// All `2^n` source words.
    All,
    /// Words of Hamming weight at most the bound.
    WeightAtMost(u32),
}

impl AuditScope {
    /// Enumerate the scoped words in increasing order.
    pub fn words(&self, n: usize) -> Vec<u64> {
        let all = 0..(1u64 << n);
        match *self {
            AuditScope::All => all.collect(),
            AuditScope::WeightAtMost(w) => all.filter(|&x| bits::weight(x, n) <= w).collect(),
        }
    }
}

/// The two source words and window realizing the worst leakage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageWitness {
    pub window: usize,
    pub x_a: u64,
    pub x_b: u64,
    pub tv: f64,
}

/// Closed-form privacy audit over an enumerated scope.
#[derive(Debug, Clone, Serialize)]
pub struct PrivacyAudit {
    pub schema: &'static str,
    pub params: CodeParams,
    pub scope: AuditScope,
    pub scope_size: usize,
    /// Max over windows `i` and word pairs agreeing at bit `i` of the TV
    /// distance between their exact window-`i` marginals.
    pub max_leakage: f64,
    pub worst: Option<LeakageWitness>,
    /// `per_class_leakage[i][v]`: worst TV within the class `x_i = v`.
    pub per_class_leakage: Vec<[f64; 2]>,
    /// Worst TV over pairs where neither word used a fallback plan.
    pub non_fallback_leakage: f64,
    /// Scope words that fell back to uniform encoding, with reasons.
    pub fallback_users: Vec<(u64, FallbackReason)>,
    /// `per_class_mi_bits[i][v]`: mutual information (bits) between the
    /// scoped source word and the window-`i` content within class
    /// `x_i = v`, under a uniform prior on the class.
    pub per_class_mi_bits: Vec<[f64; 2]>,
    pub max_mi_bits: f64,
}

fn entropy_bits(pmf: &[f64]) -> f64 {
    -pmf.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

/// Exact privacy audit of `plan_builder` on `spec` over `scope`.
///
/// For every scoped source word the plan's window marginals are computed
/// in closed form from its branch structure; identical marginals are
/// deduplicated before the pairwise TV scan, so the scan cost is driven by
/// the number of *distinct* conditionals (tiny when the scheme is private).
pub fn audit_privacy<F>(
    spec: &DecoderSpec,
    plan_builder: F,
    scope: AuditScope,
) -> Result<PrivacyAudit, AnalysisError>
where
    F: Fn(&DecoderSpec, u64) -> Result<EncodingPlan, CodecError>,
{
    let n = spec.params.n;
    if n > 16 {
        return Err(AnalysisError::ScopeTooLarge {
            size: 1usize.checked_shl(n as u32).unwrap_or(usize::MAX),
            cap: SCOPE_CAP,
        });
    }
    let words = scope.words(n);
    if words.len() > SCOPE_CAP {
        return Err(AnalysisError::ScopeTooLarge { size: words.len(), cap: SCOPE_CAP });
    }
    let graph = spec.graph();
    let mut fallback_users = Vec::new();
    // marginals[x-index][i] = exact window-i pmf under the plan for x.
    let mut marginals: Vec<Vec<Vec<f64>>> = Vec::with_capacity(words.len());
    let mut is_fallback = Vec::with_capacity(words.len());
    for &x in &words {
        let plan = plan_builder(spec, x)?;
        if let Some(reason) = plan.fallback_reason() {
            fallback_users.push((x, reason));
        }
        is_fallback.push(plan.is_fallback());
        let per_window: Result<Vec<Vec<f64>>, CodecError> =
            (0..n).map(|i| plan.block_marginal(spec, i)).collect();
        marginals.push(per_window?);
    }

    let mut per_class_leakage = vec![[0.0f64; 2]; n];
    let mut per_class_mi = vec![[0.0f64; 2]; n];
    let mut non_fallback_leakage = 0.0f64;
    let mut worst: Option<LeakageWitness> = None;
    for i in 0..n {
        for v in 0..2usize {
            // Group identical marginals; keys are exact f64 bit patterns.
            let mut classes: BTreeMap<Vec<u64>, (usize, usize, bool)> = BTreeMap::new();
            let mut members = 0usize;
            let mut mean = vec![0.0f64; graph.block_states()];
            for (idx, &x) in words.iter().enumerate() {
                if bits::bit(x, i as u32) != v {
                    continue;
                }
                members += 1;
                let pmf = &marginals[idx][i];
                for (m, &p) in mean.iter_mut().zip(pmf) {
                    *m += p;
                }
                let key: Vec<u64> = pmf.iter().map(|p| p.to_bits()).collect();
                classes
                    .entry(key)
                    .and_modify(|e| {
                        e.1 += 1;
                        e.2 &= is_fallback[idx];
                    })
                    .or_insert((idx, 1, is_fallback[idx]));
            }
            if members == 0 {
                continue;
            }
            for m in &mut mean {
                *m /= members as f64;
            }
            // Pairwise TV over distinct representatives.
            let reps: Vec<(usize, bool)> =
                classes.values().map(|&(idx, _, fb)| (idx, fb)).collect();
            for a in 0..reps.len() {
                for b in a + 1..reps.len() {
                    let (ia, fa) = reps[a];
                    let (ib, fb) = reps[b];
                    let tv = tv_distance(&marginals[ia][i], &marginals[ib][i]);
                    if tv > per_class_leakage[i][v] {
                        per_class_leakage[i][v] = tv;
                    }
                    if tv > worst.map_or(0.0, |w| w.tv) {
                        worst = Some(LeakageWitness {
                            window: i,
                            x_a: words[ia],
                            x_b: words[ib],
                            tv,
                        });
                    }
                    if !fa && !fb && tv > non_fallback_leakage {
                        non_fallback_leakage = tv;
                    }
                }
            }
            // Mutual information under the uniform prior on the class:
            // I(X; W) = H(mean pmf) - mean per-word entropy.
            let mean_entropy: f64 = words
                .iter()
                .enumerate()
                .filter(|&(_, &x)| bits::bit(x, i as u32) == v)
                .map(|(idx, _)| entropy_bits(&marginals[idx][i]))
                .sum::<f64>()
                / members as f64;
            per_class_mi[i][v] = (entropy_bits(&mean) - mean_entropy).max(0.0);
        }
    }
    let max_leakage = worst.map_or(0.0, |w| w.tv);
    let max_mi_bits = per_class_mi.iter().flatten().copied().fold(0.0, f64::max);
    Ok(PrivacyAudit {
        schema: "privacy-audit/v1",
        params: spec.params.clone(),
        scope,
        scope_size: words.len(),
        max_leakage,
        worst,
        per_class_leakage,
        non_fallback_leakage,
        fallback_users,
        per_class_mi_bits: per_class_mi,
        max_mi_bits,
    })
}

// ---------------------------------------------------------------------------
// Error and distortion estimation
// ---------------------------------------------------------------------------

/// Source law for the Monte-Carlo error study.
#[derive(Debug, Clone, Serialize)]
pub enum SourceModel {
    /// Independent bits, each one with this probability.
    Bernoulli(f64),
    /// Uniform draw from an explicit word list.
    Explicit(Vec<u64>),
}

/// Monte-Carlo error/distortion estimates with the exact plan-level
/// references where available.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub schema: &'static str,
    pub params: CodeParams,
    pub seed: u64,
    pub trials: usize,
    /// Empirical per-bit decode error frequencies.
    pub per_bit_error: Vec<f64>,
    /// Empirical block error `Pr[decoded != source]`.
    pub block_error: f64,
    /// `distortion_histogram[d]` counts trials with Hamming distortion `d`.
    pub distortion_histogram: Vec<u64>,
    pub mean_distortion: f64,
    /// `markov_tail[t]` = `mean_distortion / t`, the Markov ceiling on
    /// `Pr[d >= t]` for `t = 1..=n`; the empirical tail never exceeds it.
    pub markov_tail: Vec<f64>,
    /// Exact per-bit error averaged over the source law (explicit lists
    /// only), from branch structure rather than sampling.
    pub exact_per_bit: Option<Vec<f64>>,
    /// Trials that used a fallback plan.
    pub fallback_trials: usize,
}

/// Estimate decoding error by sampling source words and encodings.
///
/// Each trial uses its own generator stream derived from `seed`, so the
/// report is identical for every `workers` value.
pub fn estimate_error<F>(
    spec: &DecoderSpec,
    plan_builder: F,
    source: &SourceModel,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ErrorReport, AnalysisError>
where
    F: Fn(&DecoderSpec, u64) -> Result<EncodingPlan, CodecError> + Sync,
{
    let n = spec.params.n;
    if let SourceModel::Bernoulli(p) = source {
        if !(0.0..=1.0).contains(p) {
            return Err(AnalysisError::BadInput { reason: format!("bit probability {p}") });
        }
    }
    if let SourceModel::Explicit(words) = source {
        if words.is_empty() {
            return Err(AnalysisError::BadInput { reason: "empty source list".into() });
        }
        if let Some(&bad) = words.iter().find(|&&x| x >> n != 0) {
            return Err(AnalysisError::BadInput { reason: format!("source word {bad:#b} over {n} bits") });
        }
    }

    struct TrialOutcome {
        wrong_bits: u64,
        distortion: u32,
        fallback: bool,
    }
    // Plans are deterministic per source word; share them across trials.
    let cache: std::sync::RwLock<BTreeMap<u64, std::sync::Arc<EncodingPlan>>> =
        std::sync::RwLock::new(BTreeMap::new());
    let get_plan = |x: u64| -> Result<std::sync::Arc<EncodingPlan>, AnalysisError> {
        if let Some(plan) = cache.read().expect("cache lock").get(&x) {
            return Ok(plan.clone());
        }
        let plan = std::sync::Arc::new(plan_builder(spec, x)?);
        Ok(cache.write().expect("cache lock").entry(x).or_insert(plan).clone())
    };
    let run_trial = |t: usize| -> Result<TrialOutcome, AnalysisError> {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, t as u64));
        let x = match source {
            SourceModel::Bernoulli(p) => {
                let mut x = 0u64;
                for i in 0..n {
                    if rng.gen::<f64>() < *p {
                        x |= 1 << i;
                    }
                }
                x
            }
            SourceModel::Explicit(words) => words[rng.gen_range(0..words.len())],
        };
        let plan = get_plan(x)?;
        let c = plan.encode(&mut rng)?;
        let decoded = spec.global_decode(c);
        let diff = decoded ^ x;
        Ok(TrialOutcome {
            wrong_bits: diff,
            distortion: bits::weight(diff, n),
            fallback: plan.is_fallback(),
        })
    };
    let outcomes = parallel_map(trials, workers, run_trial);

    let mut per_bit = vec![0u64; n];
    let mut histogram = vec![0u64; n + 1];
    let mut block_wrong = 0u64;
    let mut fallback_trials = 0usize;
    for outcome in outcomes {
        let outcome = outcome?;
        for i in 0..n {
            per_bit[i] += bits::bit(outcome.wrong_bits, i as u32) as u64;
        }
        histogram[outcome.distortion as usize] += 1;
        if outcome.distortion > 0 {
            block_wrong += 1;
        }
        if outcome.fallback {
            fallback_trials += 1;
        }
    }
    let denom = trials.max(1) as f64;
    let mean_distortion = histogram
        .iter()
        .enumerate()
        .map(|(d, &k)| d as f64 * k as f64)
        .sum::<f64>()
        / denom;
    let exact_per_bit = match source {
        SourceModel::Explicit(words) => {
            let mut acc = vec![0.0f64; n];
            for &x in words {
                let plan = get_plan(x)?;
                for (a, e) in acc.iter_mut().zip(plan.per_bit_error(spec)?) {
                    *a += e / words.len() as f64;
                }
            }
            Some(acc)
        }
        SourceModel::Bernoulli(_) => None,
    };
    Ok(ErrorReport {
        schema: "error-estimate/v1",
        params: spec.params.clone(),
        seed,
        trials,
        per_bit_error: per_bit.iter().map(|&k| k as f64 / denom).collect(),
        block_error: block_wrong as f64 / denom,
        distortion_histogram: histogram,
        mean_distortion,
        markov_tail: (1..=n).map(|t| (mean_distortion / t as f64).min(1.0)).collect(),
        exact_per_bit,
        fallback_trials,
    })
}

// ---------------------------------------------------------------------------
// Concentration studies
// ---------------------------------------------------------------------------

/// Valid-count concentration across independent decoder draws.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub schema: &'static str,
    pub params: CodeParams,
    pub base_seed: u64,
    pub x: u64,
    pub draws: usize,
    /// Exact ensemble expectation of the valid count for this weight.
    pub expected_count: f64,
    pub mean_count: f64,
    /// Standard error of the sample mean.
    pub standard_error: f64,
    pub within_three_se: bool,
    /// Per-draw `|C(x)| / E|C(x)|` ratios, in draw order.
    pub count_ratios: Vec<f64>,
    /// Fraction of draws whose largest pairwise window overlap is >= 3.
    pub overlap_exceedance: f64,
    /// Mean fraction of valid codewords removed by expurgation.
    pub mean_expurgated_fraction: f64,
}

/// Sample `draws` decoders and compare the observed valid-count mean for
/// the fixed source word `x` against the exact product-formula
/// expectation; also record overlap exceedance and expurgation loss.
pub fn concentration_study(
    params: &CodeParams,
    x: u64,
    draws: usize,
    base_seed: u64,
    workers: usize,
) -> Result<ConcentrationReport, AnalysisError> {
    if params.code_len() > MAX_ENUM_LEN {
        return Err(AnalysisError::Codec(CodecError::InstanceTooLarge {
            code_len: params.code_len(),
        }));
    }
    if draws == 0 {
        return Err(AnalysisError::BadInput { reason: "need at least one draw".into() });
    }
    let syndrome = SyndromeMap::for_params(params)?;
    let weight = bits::weight(x, params.n);
    let expected = expected_valid_count(params, weight);
    let per_draw = |d: usize| -> Result<(usize, bool, f64), AnalysisError> {
        let mut p = params.clone();
        p.seed = mix_seed(base_seed, d as u64);
        let spec = DecoderSpec::sample_with_syndrome(&p, syndrome.clone())?;
        let index = enumerate_valid(&spec, x)?;
        let count = index.codewords.len();
        let removed = expurgate(index, &spec).removed_fraction();
        let exceeds = spec.graph().overlap_profile()?.max >= 3;
        Ok((count, exceeds, removed))
    };
    let rows = parallel_map(draws, workers, per_draw);
    let mut counts = Vec::with_capacity(draws);
    let mut exceedances = 0usize;
    let mut removed_sum = 0.0f64;
    for row in rows {
        let (count, exceeds, removed) = row?;
        counts.push(count as f64);
        if exceeds {
            exceedances += 1;
        }
        removed_sum += removed;
    }
    let mean = counts.iter().sum::<f64>() / draws as f64;
    let variance = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>()
        / (draws.max(2) - 1) as f64;
    let se = (variance / draws as f64).sqrt();
    Ok(ConcentrationReport {
        schema: "concentration/v1",
        params: params.clone(),
        base_seed,
        x,
        draws,
        expected_count: expected,
        mean_count: mean,
        standard_error: se,
        within_three_se: (mean - expected).abs() <= 3.0 * se,
        count_ratios: counts.iter().map(|c| c / expected).collect(),
        overlap_exceedance: exceedances as f64 / draws as f64,
        mean_expurgated_fraction: removed_sum / draws as f64,
    })
}

/// Window-overlap exceedance versus the exact hypergeometric law.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub schema: &'static str,
    pub params: CodeParams,
    pub base_seed: u64,
    pub draws: usize,
    pub threshold: usize,
    /// Fraction of draws whose max pairwise overlap reaches the threshold.
    pub frequency: f64,
    /// Exact probability that one fixed pair of windows shares at least
    /// `threshold` positions.
    pub pair_probability: f64,
    /// Union bound `C(n,2) * pair_probability` (reported raw, may exceed 1).
    pub union_bound: f64,
    pub within_union_bound: bool,
    /// Mean number of exceeding pairs per draw; its exact expectation is
    /// `C(n,2) * pair_probability` by linearity.
    pub mean_exceeding_pairs: f64,
    pub expected_exceeding_pairs: f64,
}

/// Estimate `Pr[max pairwise overlap >= threshold]` over graph draws; no
/// codeword enumeration, so any code length is fine.
pub fn overlap_frequency(
    params: &CodeParams,
    draws: usize,
    base_seed: u64,
    threshold: usize,
    workers: usize,
) -> Result<OverlapReport, AnalysisError> {
    if draws == 0 {
        return Err(AnalysisError::BadInput { reason: "need at least one draw".into() });
    }
    if params.n < 2 {
        return Err(AnalysisError::BadInput { reason: "overlap needs two windows".into() });
    }
    let syndrome = SyndromeMap::for_params(params)?;
    let per_draw = |d: usize| -> Result<(bool, usize), AnalysisError> {
        let mut p = params.clone();
        p.seed = mix_seed(base_seed, d as u64);
        let spec = DecoderSpec::sample_with_syndrome(&p, syndrome.clone())?;
        let graph = spec.graph();
        let mut exceeding_pairs = 0usize;
        let mut max = 0usize;
        for i in 0..graph.n() {
            for j in i + 1..graph.n() {
                let o = graph.overlap(i, j);
                max = max.max(o);
                if o >= threshold {
                    exceeding_pairs += 1;
                }
            }
        }
        Ok((max >= threshold, exceeding_pairs))
    };
    let rows = parallel_map(draws, workers, per_draw);
    let mut hits = 0usize;
    let mut pair_sum = 0usize;
    for row in rows {
        let (hit, pairs) = row?;
        hits += hit as usize;
        pair_sum += pairs;
    }
    let frequency = hits as f64 / draws as f64;
    let pair_probability = pair_overlap_tail(params.code_len(), params.b, threshold);
    let pairs = binomial_f64(params.n as u64, 2);
    let union_bound = pairs * pair_probability;
    Ok(OverlapReport {
        schema: "overlap/v1",
        params: params.clone(),
        base_seed,
        draws,
        threshold,
        frequency,
        pair_probability,
        union_bound,
        within_union_bound: frequency <= union_bound + 1e-12,
        mean_exceeding_pairs: pair_sum as f64 / draws as f64,
        expected_exceeding_pairs: union_bound,
    })
}

// ---------------------------------------------------------------------------
// Excess-fraction inequality
// ---------------------------------------------------------------------------

/// Both sides of the excess-fraction implication for one pmf.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessReport {
    pub d: usize,
    pub alpha: f64,
    pub eps: f64,
    /// `sum_i (p_i - 1/D)^2` versus `1/(alpha D)`.
    pub hypothesis_lhs: f64,
    pub hypothesis_rhs: f64,
    pub hypothesis_holds: bool,
    /// `sum_i [p_i - (1+eps)/D]^+` versus `(1+eps)/(alpha eps^2)`.
    pub lhs: f64,
    pub rhs: f64,
    pub conclusion_holds: bool,
}

/// Evaluate the excess-fraction implication: if the pmf's squared
/// deviation from uniform is at most `1/(alpha D)`, then the total mass
/// exceeding `(1+eps)/D` is at most `(1+eps)/(alpha eps^2)`.
pub fn excess_fraction_check(
    pmf: &[f64],
    alpha: f64,
    eps: f64,
) -> Result<ExcessReport, AnalysisError> {
    let d = pmf.len();
    if d == 0 || pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(AnalysisError::BadInput { reason: "pmf entries must lie in [0, 1]".into() });
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::BadInput { reason: format!("pmf sums to {total}") });
    }
    if !(alpha > 0.0) || !(eps > 0.0) {
        return Err(AnalysisError::BadInput {
            reason: format!("need alpha > 0 and eps > 0, got {alpha}, {eps}"),
        });
    }
    let uniform = 1.0 / d as f64;
    let hypothesis_lhs: f64 = pmf.iter().map(|&p| (p - uniform).powi(2)).sum();
    let hypothesis_rhs = 1.0 / (alpha * d as f64);
    let cut = (1.0 + eps) * uniform;
    let lhs: f64 = pmf.iter().map(|&p| (p - cut).max(0.0)).sum();
    let rhs = (1.0 + eps) / (alpha * eps * eps);
    Ok(ExcessReport {
        d,
        alpha,
        eps,
        hypothesis_lhs,
        hypothesis_rhs,
        hypothesis_holds: hypothesis_lhs <= hypothesis_rhs + 1e-12,
        lhs,
        rhs,
        conclusion_holds: lhs <= rhs + 1e-12,
    })
}

/// Randomized sweep summary over pmfs satisfying the hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub schema: &'static str,
    pub seed: u64,
    pub sweeps: usize,
    pub max_d: usize,
    pub rows: Vec<ExcessReport>,
    /// How many rows had a true hypothesis and a false conclusion; the
    /// implication is proven, so any violation is an arithmetic bug.
    pub violations: usize,
}

/// Draw random pmfs (alphabet size up to `max_d`), pick `alpha` so the
/// hypothesis holds by construction, draw `eps` in `(0, 1]`, and evaluate
/// the implication on each.
pub fn appendix_sweep(
    sweeps: usize,
    max_d: usize,
    seed: u64,
) -> Result<SweepSummary, AnalysisError> {
    if max_d < 2 {
        return Err(AnalysisError::BadInput { reason: "need alphabets of size 2 or more".into() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sweeps);
    let mut violations = 0usize;
    for _ in 0..sweeps {
        let d = rng.gen_range(2..=max_d);
        // Random point of the simplex, occasionally spiky.
        let sharpen = if rng.gen::<f64>() < 0.3 { 4.0 } else { 1.0 };
        let mut pmf: Vec<f64> =
            (0..d).map(|_| (-rng.gen::<f64>().ln()).powf(sharpen)).collect();
        let total: f64 = pmf.iter().sum();
        for p in &mut pmf {
            *p /= total;
        }
        let uniform = 1.0 / d as f64;
        let spread: f64 = pmf.iter().map(|&p| (p - uniform).powi(2)).sum();
        // alpha <= 1/(D * spread) keeps the hypothesis true; scale down by
        // a random factor so the sweep covers slack hypotheses too.
        let alpha = if spread > 0.0 {
            rng.gen_range(0.05..=1.0) / (d as f64 * spread)
        } else {
            rng.gen_range(0.1..100.0)
        };
        let eps = rng.gen_range(0.01..=1.0);
        let report = excess_fraction_check(&pmf, alpha, eps)?;
        if report.hypothesis_holds && !report.conclusion_holds {
            violations += 1;
        }
        rows.push(report);
    }
    Ok(SweepSummary { schema: "excess-sweep/v1", seed, sweeps, max_d, rows, violations })
}
