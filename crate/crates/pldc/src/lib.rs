//! pldc: a desk-scale laboratory for lossless compression with **p**rivate
//! **l**ocal **d**ecoding of **c**odewords.
//!
//! Every source bit is decoded from a small window of codeword positions,
//! and the scheme is built so the window a bit reads carries no information
//! about the other source bits. The crate provides the machinery to build
//! such schemes at bench size and to audit their privacy and error behavior
//! exactly:
//!
//! - [`ensemble`]: code parameters, GF(2) syndrome maps, bipartite decoding
//!   graphs, and seeded decoder sampling.
//! - [`marginal`]: block-marginal vectors, consistency checks, reference
//!   points, perturbation eligibility, and an exact LP membership oracle.
//! - [`matcher`]: the three-stage constructive matcher that realizes a
//!   target set of block marginals as an explicit product-form distribution.
//! - [`codec`]: valid-codeword enumeration, cylinder expurgation, the
//!   two-branch encoding plan, and residual composition.
//! - [`coupling`]: shared-randomness coupling of per-block encoders with a
//!   worst-case distortion bound.
//! - [`analysis`]: exact privacy audits, error estimation, ensemble
//!   concentration studies, and the excess-fraction inequality check.
//! - [`cli`]: config-driven experiment runner behind the `pldc` binary.
//!
//! Run the examples to see each capability end to end:
//!
//! ```text
//! cargo run --release -p pldc --example ensemble_study
//! cargo run --release -p pldc --example marginal_matching
//! cargo run --release -p pldc --example lp_oracle
//! cargo run --release -p pldc --example codec_roundtrip
//! cargo run --release -p pldc --example privacy_audit
//! cargo run --release -p pldc --example coupled_blocks
//! cargo run --release -p pldc --example excess_fraction
//! ```

pub mod analysis;
pub mod bits;
pub mod cli;
pub mod codec;
pub mod coupling;
pub mod ensemble;
pub mod entropy;
pub mod lp;
pub mod marginal;
pub mod matcher;
pub mod scalar;

pub use ensemble::{BipartiteGraph, CodeParams, DecoderSpec, SyndromeMap};
