//! Coupling many block encoders through one shared uniform seed.
//!
//! Each of `k` blocks carries its own conditional codeword distribution.
//! A block's codewords are laid out on the unit circle as consecutive
//! half-open intervals, widest-distortion first, and the block reads the
//! shared seed `S` after a circular shift of `i/k`. Reading one uniform
//! `S` through every block's layout preserves each block's marginal
//! exactly, while the staggered shifts keep the high-distortion ("red")
//! prefixes of different blocks disjoint whenever each red mass is at most
//! `1/k` — so at most one block at a time can land in its red zone, and
//! the total distortion obeys a deterministic worst-case bound
//! `N (delta + 1/k)` over *all* seed values, not just on average.

use rand::Rng;

use crate::bits;
use crate::codec::{CodecError, EncodingPlan, MAX_ENUM_LEN};
use crate::ensemble::DecoderSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("coupling needs at least one block")]
    NoBlocks,
    #[error("blocks disagree on shape: {reason}")]
    Shape { reason: String },
    #[error("sparsity fraction must lie in [0, 1], got {delta}")]
    BadDelta { delta: f64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// One codeword's slot in a block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCodeword {
    pub codeword: u64,
    /// Hamming distance between the block's source word and the decode of
    /// this codeword.
    pub distortion: u32,
    pub probability: f64,
    /// Interval start in the block's own (unshifted) coordinate; rank 0
    /// starts at 0 and ranks are consecutive.
    pub start: f64,
}

/// A block's interval layout plus its red-zone statistics.
#[derive(Debug, Clone)]
pub struct BlockSchedule {
    pub x: u64,
    /// Circular shift applied to the shared seed before lookup.
    pub offset: f64,
    /// Support of the block distribution, distortion-descending, ties
    /// broken by ascending codeword value.
    pub entries: Vec<RankedCodeword>,
    /// Probability of the red prefix (distortion at least `delta * n`).
    pub red_mass: f64,
    /// Length of the red prefix.
    pub red_count: usize,
}

/// A complete coupled layout over `k` blocks.
#[derive(Debug, Clone)]
pub struct CouplingSchedule {
    pub delta: f64,
    /// Source bits per block.
    pub n: usize,
    pub code_len: usize,
    pub blocks: Vec<BlockSchedule>,
}

impl CouplingSchedule {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Total source bits across blocks.
    pub fn total_bits(&self) -> usize {
        self.n * self.k()
    }

    /// The deterministic sweep ceiling `N (delta + 1/k)`.
    pub fn distortion_bound(&self) -> f64 {
        self.total_bits() as f64 * (self.delta + 1.0 / self.k() as f64)
    }
}

/// Build the coupled layout for one encoding plan per block. All plans
/// must come from the same decoder (they share its codeword length).
pub fn build_schedule(
    spec: &DecoderSpec,
    plans: &[EncodingPlan],
    delta: f64,
) -> Result<CouplingSchedule, CouplingError> {
    if plans.is_empty() {
        return Err(CouplingError::NoBlocks);
    }
    if !(0.0..=1.0).contains(&delta) || !delta.is_finite() {
        return Err(CouplingError::BadDelta { delta });
    }
    let n = spec.params.n;
    let code_len = spec.params.code_len();
    if code_len > MAX_ENUM_LEN {
        return Err(CouplingError::Codec(CodecError::InstanceTooLarge { code_len }));
    }
    let k = plans.len();
    let red_threshold = delta * n as f64 - 1e-9;
    let mut blocks = Vec::with_capacity(k);
    for (i, plan) in plans.iter().enumerate() {
        let mut entries: Vec<RankedCodeword> = (0..1u64 << code_len)
            .filter_map(|c| {
                let probability = plan.probability(c);
                (probability > 0.0).then(|| RankedCodeword {
                    codeword: c,
                    distortion: bits::weight(plan.x ^ spec.global_decode(c), n),
                    probability,
                    start: 0.0,
                })
            })
            .collect();
        if entries.is_empty() {
            return Err(CouplingError::Shape { reason: format!("block {i} has empty support") });
        }
        entries.sort_by(|a, b| {
            b.distortion.cmp(&a.distortion).then(a.codeword.cmp(&b.codeword))
        });
        let mut acc = 0.0f64;
        for entry in &mut entries {
            entry.start = acc;
            acc += entry.probability;
        }
        let red_count =
            entries.iter().take_while(|e| e.distortion as f64 >= red_threshold).count();
        let red_mass: f64 = entries[..red_count].iter().map(|e| e.probability).sum();
        blocks.push(BlockSchedule {
            x: plan.x,
            offset: i as f64 / k as f64,
            entries,
            red_mass,
            red_count,
        });
    }
    Ok(CouplingSchedule { delta, n, code_len, blocks })
}

/// Rank emitted by `block` when the shared seed is `s`.
fn lookup(block: &BlockSchedule, s: f64) -> usize {
    let y = (s - block.offset).rem_euclid(1.0);
    // Rank r owns [start_r, start_{r+1}); start_0 = 0 <= y keeps this >= 1.
    block.entries.partition_point(|e| e.start <= y) - 1
}

/// Encode every block from the one shared seed `s` in `[0, 1)`.
pub fn coupled_encode(schedule: &CouplingSchedule, s: f64) -> Vec<u64> {
    schedule
        .blocks
        .iter()
        .map(|block| block.entries[lookup(block, s)].codeword)
        .collect()
}

/// Draw the shared seed and encode; returns the seed so runs can be
/// replayed and audited.
pub fn coupled_encode_seeded<R: Rng>(
    schedule: &CouplingSchedule,
    rng: &mut R,
) -> (f64, Vec<u64>) {
    let s = rng.gen::<f64>();
    (s, coupled_encode(schedule, s))
}

/// Per-block red masses against the `1/k` typicality threshold.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TypicalityReport {
    pub typical: bool,
    pub threshold: f64,
    pub red_masses: Vec<f64>,
}

/// A coupled layout is distortion-typical when every block's red mass is
/// at most `1/k`; only then do the shifted red zones stay disjoint.
pub fn check_distortion_typical(schedule: &CouplingSchedule) -> TypicalityReport {
    let threshold = 1.0 / schedule.k() as f64;
    let red_masses: Vec<f64> = schedule.blocks.iter().map(|b| b.red_mass).collect();
    TypicalityReport {
        typical: red_masses.iter().all(|&m| m <= threshold + 1e-12),
        threshold,
        red_masses,
    }
}

/// All seed values where some block switches codewords, sorted and
/// deduplicated, always starting at 0.
pub fn breakpoints(schedule: &CouplingSchedule) -> Vec<f64> {
    let mut points = vec![0.0f64];
    for block in &schedule.blocks {
        for entry in &block.entries {
            points.push((entry.start + block.offset).rem_euclid(1.0));
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    points.dedup();
    points
}

/// Outcome of evaluating the coupled map on every constant piece.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepReport {
    /// Largest total Hamming distortion over all seed values.
    pub max_total_distortion: u32,
    /// Seed of a piece attaining the maximum.
    pub argmax_seed: f64,
    pub bound: f64,
    /// Whether the maximum respects `N (delta + 1/k)`.
    pub holds: bool,
    pub pieces: usize,
}

/// Exhaustively sweep every piece of the piecewise-constant coupled map
/// (the map is constant between breakpoints, so evaluating each left
/// endpoint covers all of `[0, 1)`) and compare the worst total distortion
/// with the deterministic bound.
pub fn worst_case_sweep(schedule: &CouplingSchedule) -> SweepReport {
    let points = breakpoints(schedule);
    let mut max_total = 0u32;
    let mut argmax = 0.0f64;
    for &s in &points {
        let total: u32 = schedule
            .blocks
            .iter()
            .map(|block| block.entries[lookup(block, s)].distortion)
            .sum();
        if total > max_total {
            max_total = total;
            argmax = s;
        }
    }
    let bound = schedule.distortion_bound();
    SweepReport {
        max_total_distortion: max_total,
        argmax_seed: argmax,
        bound,
        holds: (max_total as f64) <= bound + 1e-9,
        pieces: points.len(),
    }
}

/// Largest gap between an interval's realized length and its plan
/// probability, per block and overall.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MarginalReport {
    pub max_gap: f64,
    pub per_block_max: Vec<f64>,
}

/// Verify that reading the shared seed preserves every block marginal:
/// rank `r` owns exactly `[start_r, start_{r+1})` (the last rank runs to
/// 1), so its realized mass is the difference of consecutive starts. The
/// report holds the largest deviation from the plan probabilities.
pub fn check_marginal_preservation(schedule: &CouplingSchedule) -> MarginalReport {
    let mut per_block_max = Vec::with_capacity(schedule.k());
    for block in &schedule.blocks {
        let mut worst = 0.0f64;
        for (r, entry) in block.entries.iter().enumerate() {
            let end = block.entries.get(r + 1).map_or(1.0, |next| next.start);
            worst = worst.max(((end - entry.start) - entry.probability).abs());
        }
        per_block_max.push(worst);
    }
    let max_gap = per_block_max.iter().copied().fold(0.0, f64::max);
    MarginalReport { max_gap, per_block_max }
}

/// Flat CSV dump of the layout: one row per (block, rank), with the
/// interval start as seen in the shared-seed coordinate.
pub fn schedule_to_csv(schedule: &CouplingSchedule) -> String {
    let mut out = String::from("block,rank,distortion,probability,shifted_start\n");
    for (i, block) in schedule.blocks.iter().enumerate() {
        for (rank, entry) in block.entries.iter().enumerate() {
            let shifted = (entry.start + block.offset).rem_euclid(1.0);
            out.push_str(&format!(
                "{i},{rank},{d},{p},{shifted}\n",
                d = entry.distortion,
                p = entry.probability,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_encoding_plan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chain_schedule(k: usize, delta: f64) -> (DecoderSpec, CouplingSchedule) {
        let spec = DecoderSpec::parity_chain(11).unwrap();
        // Cycle through the four in-ball source words.
        let words = [0b000u64, 0b001, 0b010, 0b100];
        let plans: Vec<EncodingPlan> = (0..k)
            .map(|i| build_encoding_plan(&spec, words[i % words.len()]).unwrap())
            .collect();
        let schedule = build_schedule(&spec, &plans, delta).unwrap();
        (spec, schedule)
    }

    #[test]
    fn single_block_reduces_to_inverse_cdf_sampling() {
        let (_, schedule) = chain_schedule(1, 2.0 / 3.0);
        assert_eq!(schedule.blocks[0].offset, 0.0);
        // Every entry is hit by the seed at its own start.
        let block = &schedule.blocks[0];
        for (r, entry) in block.entries.iter().enumerate() {
            assert_eq!(lookup(block, entry.start), r);
        }
        // Ranks and probabilities tile [0, 1).
        let last = block.entries.last().unwrap();
        assert!((last.start + last.probability - 1.0).abs() < 1e-12);
        let marginals = check_marginal_preservation(&schedule);
        assert_eq!(marginals.max_gap, 0.0, "dyadic chain masses are exact");
    }

    #[test]
    fn offsets_are_evenly_staggered() {
        let (_, schedule) = chain_schedule(5, 2.0 / 3.0);
        let offsets: Vec<f64> = schedule.blocks.iter().map(|b| b.offset).collect();
        assert_eq!(offsets, vec![0.0, 0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn lists_are_distortion_descending_with_lexicographic_ties() {
        let (_, schedule) = chain_schedule(3, 0.5);
        for block in &schedule.blocks {
            for pair in block.entries.windows(2) {
                assert!(
                    pair[0].distortion > pair[1].distortion
                        || (pair[0].distortion == pair[1].distortion
                            && pair[0].codeword < pair[1].codeword)
                );
            }
            // Red entries form a prefix by construction; re-check directly.
            let red_threshold = 0.5 * 3.0 - 1e-9;
            for (r, entry) in block.entries.iter().enumerate() {
                assert_eq!(r < block.red_count, entry.distortion as f64 >= red_threshold);
            }
        }
    }

    #[test]
    fn zero_error_plans_order_by_codeword_alone() {
        // A pure-valid plan has distortion 0 everywhere: the tie-break must
        // leave codewords ascending.
        let spec = DecoderSpec::parity_chain(13).unwrap();
        let plan = EncodingPlan::pure_valid(&spec, 0b010).unwrap();
        let schedule = build_schedule(&spec, &[plan], 0.5).unwrap();
        let codewords: Vec<u64> =
            schedule.blocks[0].entries.iter().map(|e| e.codeword).collect();
        let mut sorted = codewords.clone();
        sorted.sort_unstable();
        assert_eq!(codewords, sorted);
        assert_eq!(schedule.blocks[0].red_count, 0);
    }

    #[test]
    fn chain_red_mass_is_an_eighth_and_layout_is_typical() {
        // For any two-branch chain plan the matched branch is uniform, the
        // three decoded-bit parities are jointly uniform, and at least two
        // wrong bits happen with mass (1/4) * (4/8) = 1/8 when the red
        // threshold is two bits (delta = 2/3).
        let (_, schedule) = chain_schedule(5, 2.0 / 3.0);
        for block in &schedule.blocks {
            assert!((block.red_mass - 0.125).abs() < 1e-12);
        }
        let report = check_distortion_typical(&schedule);
        assert!(report.typical);
        assert_eq!(report.threshold, 0.2);
    }

    #[test]
    fn sweep_respects_the_deterministic_bound_on_every_piece() {
        let (_, schedule) = chain_schedule(5, 2.0 / 3.0);
        let sweep = worst_case_sweep(&schedule);
        // N (delta + 1/k) = 15 * (2/3 + 1/5) = 13.
        assert!((sweep.bound - 13.0).abs() < 1e-9);
        assert!(sweep.holds, "max {} over bound {}", sweep.max_total_distortion, sweep.bound);
        // Disjoint red zones cap the true maximum well under the bound: at
        // most one block reads its red prefix (<= 3 wrong bits), the rest
        // stay under two.
        assert!(sweep.max_total_distortion <= 3 + 4);
        assert!(sweep.pieces > 1000, "five blocks over 1024 codewords make many pieces");
    }

    #[test]
    fn sweep_maximum_is_attained_by_random_probing() {
        // The sweep evaluates only breakpoints; random seeds must never
        // beat it (the map is constant between breakpoints).
        let (_, schedule) = chain_schedule(4, 2.0 / 3.0);
        let sweep = worst_case_sweep(&schedule);
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        for _ in 0..20_000 {
            let (_, codewords) = coupled_encode_seeded(&schedule, &mut rng);
            let total: u32 = schedule
                .blocks
                .iter()
                .zip(&codewords)
                .map(|(b, &c)| {
                    let rank = b.entries.iter().position(|e| e.codeword == c).unwrap();
                    b.entries[rank].distortion
                })
                .sum();
            assert!(total <= sweep.max_total_distortion);
        }
    }

    #[test]
    fn shared_seed_preserves_every_block_marginal_exactly() {
        let (_, schedule) = chain_schedule(5, 2.0 / 3.0);
        let report = check_marginal_preservation(&schedule);
        assert_eq!(report.max_gap, 0.0, "chain masses are dyadic, so layout is exact");
        // Cross-check one block empirically.
        let mut rng = ChaCha20Rng::seed_from_u64(72);
        let block = &schedule.blocks[2];
        let trials = 200_000usize;
        let mut hits = vec![0usize; block.entries.len()];
        for _ in 0..trials {
            hits[lookup(block, rng.gen::<f64>())] += 1;
        }
        for (r, entry) in block.entries.iter().enumerate() {
            let freq = hits[r] as f64 / trials as f64;
            let sigma = (entry.probability * (1.0 - entry.probability) / trials as f64).sqrt();
            assert!(
                (freq - entry.probability).abs() <= 5.0 * sigma + 1e-4,
                "rank {r}: {freq} vs {}",
                entry.probability
            );
        }
    }

    #[test]
    fn red_zones_of_distinct_blocks_never_collide() {
        let (_, schedule) = chain_schedule(5, 2.0 / 3.0);
        for &s in breakpoints(&schedule).iter() {
            let red_blocks = schedule
                .blocks
                .iter()
                .filter(|b| lookup(b, s) < b.red_count)
                .count();
            assert!(red_blocks <= 1, "two red blocks at seed {s}");
        }
    }

    #[test]
    fn csv_layout_is_deterministic_and_well_formed() {
        let (_, schedule) = chain_schedule(2, 2.0 / 3.0);
        let text = schedule_to_csv(&schedule);
        let again = schedule_to_csv(&schedule);
        assert_eq!(text, again);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "block,rank,distortion,probability,shifted_start");
        let rows: Vec<&str> = lines.collect();
        let support: usize = schedule.blocks.iter().map(|b| b.entries.len()).sum();
        assert_eq!(rows.len(), support);
        // Block 1's rank 0 sits at its offset of one half.
        let row = rows.iter().find(|r| r.starts_with("1,0,")).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[4], "0.5");
    }

    #[test]
    fn zero_delta_marks_everything_red_and_fails_typicality() {
        let (_, schedule) = chain_schedule(3, 0.0);
        for block in &schedule.blocks {
            assert_eq!(block.red_count, block.entries.len());
            assert!((block.red_mass - 1.0).abs() < 1e-12);
        }
        assert!(!check_distortion_typical(&schedule).typical);
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = DecoderSpec::parity_chain(11).unwrap();
        assert!(matches!(build_schedule(&spec, &[], 0.5), Err(CouplingError::NoBlocks)));
        let plan = build_encoding_plan(&spec, 0).unwrap();
        assert!(matches!(
            build_schedule(&spec, std::slice::from_ref(&plan), 1.5),
            Err(CouplingError::BadDelta { .. })
        ));
    }
}
