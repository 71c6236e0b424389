//! Sample decoder ensembles and check two of their headline statistics:
//! the valid-codeword count concentrates on its exact expectation, and
//! large pairwise window overlaps stay as rare as the union bound says.
//!
//!     cargo run --release -p pldc --example ensemble_study

use pldc::analysis::{concentration_study, overlap_frequency};
use pldc::ensemble::{CodeParams, DecoderSpec, SyndromeMap};

fn main() {
    // A bench-size family: 5 source bits, 10-bit codewords, 3-bit windows
    // reduced by a single parity row.
    let params = CodeParams::toy(5, 10, 0.3, 0.1, 3, 1, 2024).expect("valid parameters");
    println!("parameters:");
    println!("  n = {}, codeword length = {}", params.n, params.code_len());
    println!("  p = {}, epsilon = {}", params.p, params.epsilon);
    println!("  window b = {}, reduced b' = {}", params.b, params.b_prime);
    println!("  weight cutoff n(p + eps/2) = {}", params.weight_cutoff());
    println!();

    // One concrete decoder from the family: windows and local tables.
    let syndrome = SyndromeMap::for_params(&params).expect("syndrome for window dims");
    let spec = DecoderSpec::sample_with_syndrome(&params, syndrome).expect("sampled decoder");
    println!("one sampled decoder (seed {}):", params.seed);
    for (i, set) in (0..params.n).map(|i| (i, spec.graph().set(i))) {
        println!("  bit {i} reads codeword positions {set:?}");
    }
    println!();

    // Valid-count concentration: draw many decoders, enumerate each valid
    // set exactly, and compare the mean count to the closed-form ensemble
    // expectation.
    let draws = 400;
    let x = 0b00011; // weight 2; the count statistics depend on x only through its weight
    let report = concentration_study(&params, x, draws, 7, 4).expect("study runs");
    println!("valid-count concentration over {draws} draws (x of weight 2):");
    println!("  exact expected count : {:.4}", report.expected_count);
    println!("  observed mean count  : {:.4}", report.mean_count);
    println!("  standard error       : {:.4}", report.standard_error);
    println!("  mean within 3 SE     : {}", report.within_three_se);
    println!(
        "  mean expurgated fraction: {:.4}",
        report.mean_expurgated_fraction
    );
    println!();

    // Window overlaps: how often does some pair of windows share at least
    // 3 positions, versus the exact per-pair probability and its union
    // bound (reported raw; it can exceed 1 for dense families).
    let overlap = overlap_frequency(&params, draws, 7, 3, 4).expect("overlap study runs");
    println!("pairwise window overlaps >= 3 over {draws} draws:");
    println!("  per-pair probability : {:.6}", overlap.pair_probability);
    println!("  union bound          : {:.6}", overlap.union_bound);
    println!("  observed frequency   : {:.6}", overlap.frequency);
    println!("  mean exceeding pairs : {:.6}", overlap.mean_exceeding_pairs);
    println!("  within union bound   : {}", overlap.within_union_bound);
}
