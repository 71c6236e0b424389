//! Decide marginal realizability exactly, independent of the matcher.
//!
//! The oracle answers "is there ANY distribution over codewords with these
//! window marginals?" by exact-rational linear programming: it returns a
//! sparse witness pmf when feasible and a separating functional otherwise.
//! It is the ground truth the constructive matcher is judged against.
//!
//!     cargo run --release -p pldc --example lp_oracle

use pldc::ensemble::BipartiteGraph;
use pldc::lp::{lp_membership, MembershipResult};
use pldc::marginal::{phi_of_distribution, BlockMarginalVector};
use pldc::matcher::{match_marginals, MatcherError};

fn main() {
    // A 6-bit code with three 2-bit windows: {0,1}, {2,3}, {4,5}.
    let g = BipartiteGraph::new(6, 2, vec![vec![0, 1], vec![2, 3], vec![4, 5]])
        .expect("graph builds");

    // Marginals read off a genuine distribution are always feasible.
    let mut pmf = vec![0.0f64; 64];
    pmf[0b000000] = 0.5;
    pmf[0b110110] = 0.25;
    pmf[0b001001] = 0.25;
    let phi = phi_of_distribution(&g, &pmf).expect("marginals of a pmf");
    match lp_membership(&g, &phi).expect("oracle runs") {
        MembershipResult::Feasible { witness, residual, exact } => {
            println!("marginals of a real mixture: feasible (exact: {exact})");
            println!("  witness support size {}, residual {residual:.3e}", witness.len());
            for (word, mass) in &witness {
                println!("    codeword {word:#08b} mass {mass:.4}");
            }
        }
        other => panic!("expected feasible, got {other:?}"),
    }
    println!();

    // A parity trap: windows {0,1}, {1,2}, {0,2} on three bits, each pair
    // forced to agree except the last, which is forced to differ. Around
    // the cycle that demands an odd number of disagreements among an even
    // count -- infeasible, and the oracle hands back a separating
    // functional as the proof.
    let cycle = BipartiteGraph::new(3, 2, vec![vec![0, 1], vec![1, 2], vec![0, 2]])
        .expect("graph builds");
    let equal = vec![0.5, 0.0, 0.0, 0.5];
    let differ = vec![0.0, 0.5, 0.5, 0.0];
    let targets = BlockMarginalVector::new(2, vec![equal.clone(), equal, differ])
        .expect("entrywise-valid targets");
    match lp_membership(&cycle, &targets).expect("oracle runs") {
        MembershipResult::Infeasible { certificate, gap, exact } => {
            println!("parity-cycle targets: infeasible (exact: {exact})");
            println!("  separating functional {certificate:?}");
            println!("  violation gap {gap:.4}");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }

    // The constructive matcher agrees, reporting the violation as negative
    // mass in its signed measure.
    match match_marginals::<f64>(&cycle, &targets) {
        Err(MatcherError::NegativeMass { mass, word }) => {
            println!("  matcher agrees: negative mass {mass:.4} at codeword {word:?}");
        }
        other => panic!("expected negative mass, got {other:?}"),
    }
}
