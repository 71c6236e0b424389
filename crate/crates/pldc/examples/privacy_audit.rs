//! Audit, in closed form, what a single decoding window reveals about the
//! rest of the source word.
//!
//! For every pair of source words agreeing at bit i, the audit compares
//! their exact window-i content distributions by total variation distance.
//! Zero distance means the window is a perfect one-bit channel: it decodes
//! bit i and says nothing else.
//!
//!     cargo run --release -p pldc --example privacy_audit

use pldc::analysis::{audit_privacy, AuditScope};
use pldc::bits;
use pldc::codec::build_encoding_plan;
use pldc::ensemble::DecoderSpec;

fn main() {
    let spec = DecoderSpec::parity_chain(5).expect("chain builds");
    let n = spec.params.n;

    // Scoped to the words the scheme is designed for (inside the weight
    // ball), every window marginal is exactly the anchor distribution for
    // its bit value: leakage is identically zero.
    let scoped = audit_privacy(&spec, build_encoding_plan, AuditScope::WeightAtMost(1))
        .expect("audit runs");
    println!(
        "audit over the designed scope ({} words of weight <= 1):",
        scoped.scope_size
    );
    println!("  max leakage (TV) : {:.3e}", scoped.max_leakage);
    println!("  max leakage (MI) : {:.3e} bits", scoped.max_mi_bits);
    println!();

    // Over all 2^n words, the out-of-ball words fall back to uniform
    // encoding; their windows look different from the in-ball anchors, and
    // the audit quantifies exactly how different.
    let full = audit_privacy(&spec, build_encoding_plan, AuditScope::All).expect("audit runs");
    println!("audit over all {} words:", full.scope_size);
    println!("  max leakage (TV) : {:.6}", full.max_leakage);
    println!("  max leakage (MI) : {:.6} bits", full.max_mi_bits);
    println!(
        "  leakage among non-fallback words only: {:.3e}",
        full.non_fallback_leakage
    );
    println!("  fallback words (outside the weight ball):");
    for (word, reason) in &full.fallback_users {
        println!("    {} -> {reason:?}", bits::format_bits(*word, n));
    }
    if let Some(worst) = &full.worst {
        println!(
            "  worst pair: window {} distinguishes {} from {} at TV = {:.6}",
            worst.window,
            bits::format_bits(worst.x_a, n),
            bits::format_bits(worst.x_b, n),
            worst.tv
        );
    }
    println!();
    println!("per-window, per-bit-value leakage (TV | MI bits):");
    for i in 0..n {
        println!(
            "  window {i}: x_i=0 -> {:.4} | {:.4}   x_i=1 -> {:.4} | {:.4}",
            full.per_class_leakage[i][0],
            full.per_class_mi_bits[i][0],
            full.per_class_leakage[i][1],
            full.per_class_mi_bits[i][1]
        );
    }
    println!();
    println!(
        "reading: the scheme is private exactly where it claims to be -- on \
         in-ball words the windows carry the decoded bit and nothing else; \
         the measured 0.375 gap is fallback words versus designed words."
    );
}
