//! Reproducible experiment front-end.
//!
//! One JSON config fully determines a run: the decoder parameters, a
//! scenario name, scenario knobs, and output paths. Each subcommand runs
//! exactly one scenario and writes JSON/CSV artifacts plus a plain-text
//! summary into the output directory, including `resolved_config.json` —
//! a config echo that reproduces the run byte-identically when passed
//! back in (timestamps are suppressed with `--no-timestamp`). All
//! randomness flows from the seeds in the config; the worker count never
//! changes any artifact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    appendix_sweep, audit_privacy, concentration_study, estimate_error, excess_fraction_check,
    overlap_frequency, AnalysisError, AuditScope, SourceModel,
};
use crate::bits;
use crate::codec::{
    build_encoding_plan, codebook_json, enumerate_valid, expurgate, CodecError, PlanKind,
    MAX_ENUM_LEN,
};
use crate::coupling::{
    build_schedule, check_distortion_typical, check_marginal_preservation, schedule_to_csv,
    worst_case_sweep, CouplingError,
};
use crate::ensemble::{CodeParams, DecoderSpec, EnsembleError, SyndromeMap};
use crate::lp::{self, lp_membership, LpError};
use crate::marginal::{reference_vectors, uniform_minus, PerturbationVector, MarginalError};
use crate::matcher::{match_marginals, MatcherError};

/// Success.
pub const EXIT_OK: i32 = 0;
/// Unclassified failure (I/O, shape errors, empty sets).
pub const EXIT_OTHER: i32 = 1;
/// Config missing, unparsable, inconsistent, or wrong for the subcommand.
pub const EXIT_CONFIG_INVALID: i32 = 2;
/// Instance exceeds an enumeration or solver envelope.
pub const EXIT_INSTANCE_TOO_LARGE: i32 = 3;
/// The matched signed measure went negative.
pub const EXIT_NEGATIVE_MASS: i32 = 4;

const EXIT_CODE_HELP: &str = "Exit codes:
  0  success
  1  other failure (I/O, empty sets, shape mismatches)
  2  config invalid (missing, unparsable, or wrong scenario for the subcommand)
  3  instance too large for an exact-enumeration envelope
  4  matched distribution had negative mass";

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    EnsembleStudy,
    MatchDemo,
    CodecRoundtrip,
    PrivacyAudit,
    CouplingDemo,
    AppendixCheck,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::EnsembleStudy => "ensemble-study",
            Scenario::MatchDemo => "match-demo",
            Scenario::CodecRoundtrip => "codec-roundtrip",
            Scenario::PrivacyAudit => "privacy-audit",
            Scenario::CouplingDemo => "coupling-demo",
            Scenario::AppendixCheck => "appendix-check",
        }
    }
}

/// Which decoder instance the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    /// Sample graph and tables from the parameters.
    #[default]
    Sampled,
    /// The fixed three-bit hand instance with exactly balanced cylinders.
    ParityChain,
    /// The rate-one identity scheme.
    Identity,
}

/// Explicit window geometry; with `code_len` present the codeword length
/// is pinned instead of derived from the rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowOverride {
    pub b: usize,
    pub b_prime: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "is_default_instance")]
    pub instance: InstanceKind,
    pub n: usize,
    pub p: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "window")]
    pub window: Option<WindowOverride>,
}

fn is_default_instance(k: &InstanceKind) -> bool {
    *k == InstanceKind::Sampled
}

/// Scenario-specific knobs; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    /// Sparsity / distortion fraction (coupling red threshold).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Number of coupled blocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Monte-Carlo trials / ensemble draws / sweep count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Audit scope: "all" or "weight-bounded" (with `weight_bound`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_bound: Option<u32>,
    /// Source word as a bit string, position 0 first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    /// Multiplier on the marginal perturbation in the matching demo
    /// (default: n). Larger values probe the edge of the matchable
    /// neighborhood around uniform.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_scale: Option<f64>,
    /// Target family for the matching demo: "expurgated" (default; the
    /// scaled perturbation from the expurgated codebook) or "parity"
    /// (uniform over odd-parity window contents — realizable, but outside
    /// the additive family's neighborhood, so matching reports negative
    /// mass).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<String>,
    /// Per-block source words for the coupling demo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    /// Pairwise-overlap exceedance threshold for ensemble studies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_threshold: Option<usize>,
    /// Largest alphabet size in the excess-fraction sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_alphabet: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub params: ParamsConfig,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("config parse: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reject configs whose stated parameters contradict a fixed instance.
    fn check_instance_coherence(&self) -> Result<(), RunError> {
        let p = &self.params;
        match p.instance {
            InstanceKind::ParityChain => {
                if p.n != 3 || p.p != 0.25 || p.epsilon != 0.25 {
                    return Err(RunError::Config(format!(
                        "the parity-chain instance is fixed at n = 3, p = 0.25, \
                         epsilon = 0.25; config says n = {}, p = {}, epsilon = {}",
                        p.n, p.p, p.epsilon
                    )));
                }
            }
            InstanceKind::Identity => {
                if p.p != 0.5 || p.epsilon != 0.0 {
                    return Err(RunError::Config(format!(
                        "the identity instance is fixed at p = 0.5, epsilon = 0; \
                         config says p = {}, epsilon = {}",
                        p.p, p.epsilon
                    )));
                }
            }
            InstanceKind::Sampled => {}
        }
        Ok(())
    }

    /// Build the decoder instance the config names.
    pub fn build_spec(&self) -> Result<DecoderSpec, RunError> {
        self.check_instance_coherence()?;
        let p = &self.params;
        match p.instance {
            InstanceKind::ParityChain => Ok(DecoderSpec::parity_chain(p.seed)?),
            InstanceKind::Identity => Ok(DecoderSpec::identity(p.n, p.seed)?),
            InstanceKind::Sampled => {
                let params = self.code_params()?;
                let syndrome = SyndromeMap::for_params(&params)?;
                Ok(DecoderSpec::sample_with_syndrome(&params, syndrome)?)
            }
        }
    }

    /// Resolve the parameter block alone (no graph sampling).
    pub fn code_params(&self) -> Result<CodeParams, RunError> {
        self.check_instance_coherence()?;
        let p = &self.params;
        match p.instance {
            InstanceKind::ParityChain => Ok(DecoderSpec::parity_chain(p.seed)?.params),
            InstanceKind::Identity => Ok(DecoderSpec::identity(p.n, p.seed)?.params),
            InstanceKind::Sampled => match &p.window {
                Some(w) => match w.code_len {
                    Some(code_len) => Ok(CodeParams::toy(
                        p.n, code_len, p.p, p.epsilon, w.b, w.b_prime, p.seed,
                    )?),
                    None => Ok(CodeParams::derive(
                        p.n,
                        p.p,
                        p.epsilon,
                        p.seed,
                        Some((w.b, w.b_prime)),
                    )?),
                },
                None => Ok(CodeParams::derive(p.n, p.p, p.epsilon, p.seed, None)?),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{0}")]
    Other(String),
}

/// Map an error to its documented exit code.
pub fn exit_code_for(err: &RunError) -> i32 {
    match err {
        RunError::Config(_) => EXIT_CONFIG_INVALID,
        RunError::Codec(CodecError::InstanceTooLarge { .. }) => EXIT_INSTANCE_TOO_LARGE,
        RunError::Codec(CodecError::Matcher(MatcherError::NegativeMass { .. })) => {
            EXIT_NEGATIVE_MASS
        }
        RunError::Matcher(MatcherError::NegativeMass { .. }) => EXIT_NEGATIVE_MASS,
        RunError::Lp(LpError::InstanceTooLarge { .. }) => EXIT_INSTANCE_TOO_LARGE,
        RunError::Analysis(AnalysisError::ScopeTooLarge { .. }) => EXIT_INSTANCE_TOO_LARGE,
        RunError::Analysis(AnalysisError::Codec(CodecError::InstanceTooLarge { .. })) => {
            EXIT_INSTANCE_TOO_LARGE
        }
        RunError::Coupling(CouplingError::Codec(CodecError::InstanceTooLarge { .. })) => {
            EXIT_INSTANCE_TOO_LARGE
        }
        _ => EXIT_OTHER,
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "pldc",
    about = "Desk-scale laboratory for compression with private local decoding",
    after_help = EXIT_CODE_HELP,
    version
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides the config's output.dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel studies; never changes results.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub workers: usize,
    /// Omit timestamps so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble draws: valid-count concentration and window overlaps.
    Ensemble(CommonArgs),
    /// Marginal-matching demo on one source word, with the LP cross-check.
    Match(CommonArgs),
    /// Encode/decode round trip with exact and Monte-Carlo error rates.
    Roundtrip(CommonArgs),
    /// Closed-form privacy audit over an enumerated scope.
    Audit(CommonArgs),
    /// Coupled multi-block encoding from one shared seed.
    Couple(CommonArgs),
    /// Excess-fraction inequality sweep and worked example.
    Appendix(CommonArgs),
}

impl Command {
    pub fn scenario(&self) -> Scenario {
        match self {
            Command::Ensemble(_) => Scenario::EnsembleStudy,
            Command::Match(_) => Scenario::MatchDemo,
            Command::Roundtrip(_) => Scenario::CodecRoundtrip,
            Command::Audit(_) => Scenario::PrivacyAudit,
            Command::Couple(_) => Scenario::CouplingDemo,
            Command::Appendix(_) => Scenario::AppendixCheck,
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Ensemble(c)
            | Command::Match(c)
            | Command::Roundtrip(c)
            | Command::Audit(c)
            | Command::Couple(c)
            | Command::Appendix(c) => c,
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact plumbing
// ---------------------------------------------------------------------------

struct RunContext {
    config: ExperimentConfig,
    out_dir: PathBuf,
    workers: usize,
    timestamp: Option<u64>,
    artifacts: Vec<String>,
    summary: String,
}

impl RunContext {
    fn write_text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        std::fs::write(self.out_dir.join(name), text)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write_text(name, &(text + "\n"))
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }
}

fn parse_word(text: &str, n: usize) -> Result<u64, RunError> {
    if text.len() != n || !text.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(RunError::Config(format!(
            "source word {text:?} is not a {n}-character bit string"
        )));
    }
    Ok(text
        .bytes()
        .enumerate()
        .fold(0u64, |acc, (i, b)| acc | (((b == b'1') as u64) << i)))
}

/// Per window: uniform over the odd-parity contents. Realizable as a
/// distribution, but outside the additive family's neighborhood of uniform.
fn odd_parity_targets(
    graph: &crate::ensemble::BipartiteGraph,
) -> Result<crate::marginal::BlockMarginalVector, RunError> {
    let b = graph.window();
    let states = 1usize << b;
    let mass = 2.0 / states as f64;
    let block: Vec<f64> = (0..states)
        .map(|c| if (c as u64).count_ones() % 2 == 1 { mass } else { 0.0 })
        .collect();
    Ok(crate::marginal::BlockMarginalVector::new(
        b,
        vec![block; graph.n()],
    )?)
}

fn audit_scope(knobs: &Knobs) -> Result<AuditScope, RunError> {
    match (knobs.scope.as_deref(), knobs.weight_bound) {
        (Some("all") | None, None) => Ok(AuditScope::All),
        (Some("weight-bounded"), Some(w)) => Ok(AuditScope::WeightAtMost(w)),
        (Some("weight-bounded"), None) => Err(RunError::Config(
            "scope \"weight-bounded\" needs knobs.weight_bound".into(),
        )),
        (None, Some(w)) => Ok(AuditScope::WeightAtMost(w)),
        (Some(other), _) => Err(RunError::Config(format!(
            "unknown scope {other:?}; use \"all\" or \"weight-bounded\""
        ))),
    }
}

// ---------------------------------------------------------------------------
// Scenario runners
// ---------------------------------------------------------------------------

fn run_ensemble_study(ctx: &mut RunContext) -> Result<(), RunError> {
    let params = ctx.config.code_params()?;
    let knobs = ctx.config.knobs.clone();
    let draws = knobs.trials.unwrap_or(200);
    let threshold = knobs.overlap_threshold.unwrap_or(3);
    let x = match &knobs.x {
        Some(text) => parse_word(text, params.n)?,
        None => 0,
    };
    let overlap = overlap_frequency(&params, draws, params.seed, threshold, ctx.workers)?;
    ctx.write_json("overlap.json", &overlap)?;
    ctx.note(format!(
        "overlap threshold {threshold}: frequency {:.6} vs union bound {:.6}",
        overlap.frequency, overlap.union_bound
    ));
    if params.code_len() <= MAX_ENUM_LEN {
        let report = concentration_study(&params, x, draws, params.seed, ctx.workers)?;
        let mut csv = String::from("draw,count_ratio\n");
        for (d, r) in report.count_ratios.iter().enumerate() {
            let _ = writeln!(csv, "{d},{r}");
        }
        ctx.write_text("ratios.csv", &csv)?;
        ctx.note(format!(
            "valid-count mean {:.3} vs expected {:.3} (se {:.3}, within 3se: {})",
            report.mean_count, report.expected_count, report.standard_error, report.within_three_se
        ));
        ctx.write_json("concentration.json", &report)?;
    } else {
        ctx.note("codeword space too large to enumerate valid counts; overlap study only");
    }
    Ok(())
}

#[derive(Serialize)]
struct MatchArtifact {
    schema: &'static str,
    params: CodeParams,
    x: String,
    targets: String,
    eta_max_abs: f64,
    eta_scale: f64,
    eligible: bool,
    /// After each stage: max abs bit/pair/window residual against targets.
    stage_residuals: [[f64; 3]; 3],
    nonnegative_lower_bound: f64,
    lp_cross_check: Option<bool>,
}

fn run_match_demo(ctx: &mut RunContext) -> Result<(), RunError> {
    let spec = ctx.config.build_spec()?;
    let n = spec.params.n;
    let x = match &ctx.config.knobs.x {
        Some(text) => parse_word(text, n)?,
        None => 0,
    };
    let index = expurgate(enumerate_valid(&spec, x)?, &spec);
    let Some(phi_exp) = index.expurgated_uniform_marginals() else {
        return Err(RunError::Other(format!(
            "expurgation emptied the valid set for x = {}",
            bits::format_bits(x, n)
        )));
    };
    let references = reference_vectors(&spec, x);
    let eta = PerturbationVector::difference(&phi_exp, &references.independent)?;
    let eligibility = crate::marginal::check_eligibility(&spec, x, &eta, None);
    let scale = ctx.config.knobs.eta_scale.unwrap_or(n as f64);
    let family = ctx.config.knobs.targets.as_deref().unwrap_or("expurgated");
    let targets = match family {
        "expurgated" => uniform_minus(&eta, scale)?,
        "parity" => odd_parity_targets(spec.graph())?,
        other => {
            return Err(RunError::Config(format!(
                "unknown target family {other:?}; use \"expurgated\" or \"parity\""
            )))
        }
    };
    let outcome = match_marginals::<f64>(spec.graph(), &targets)?;
    let lp_cross_check = if spec.params.code_len() <= lp::MAX_CODE_LEN {
        Some(lp_membership(spec.graph(), &targets)?.is_feasible())
    } else {
        None
    };
    let artifact = MatchArtifact {
        schema: "match-demo/v1",
        params: spec.params.clone(),
        x: bits::format_bits(x, n),
        targets: family.to_string(),
        eta_max_abs: eta.max_abs(),
        eta_scale: scale,
        eligible: eligibility.eligible,
        stage_residuals: outcome.report.stage_residuals,
        nonnegative_lower_bound: outcome.report.nonnegativity.lower_bound(),
        lp_cross_check,
    };
    ctx.write_json("match.json", &artifact)?;
    ctx.write_text("distribution.json", &(outcome.distribution.to_json() + "\n"))?;
    let graph = spec.graph();
    let mut csv = String::from("block,word,target,achieved\n");
    for i in 0..n {
        let achieved = outcome.distribution.dense_marginal(graph.set(i))?;
        for (w, (&t, &a)) in targets.block(i).iter().zip(&achieved).enumerate() {
            let _ = writeln!(csv, "{i},{w},{t},{a}");
        }
    }
    ctx.write_text("targets.csv", &csv)?;
    ctx.note(format!(
        "matched x = {} with final window residual {:.3e}; LP agrees: {:?}",
        bits::format_bits(x, n),
        artifact.stage_residuals[2][2],
        artifact.lp_cross_check
    ));
    Ok(())
}

#[derive(Serialize)]
struct RoundtripArtifact {
    schema: &'static str,
    params: CodeParams,
    x: String,
    branch: String,
    valid_count: Option<usize>,
    expurgated_count: Option<usize>,
    exact_per_bit: Vec<f64>,
    exact_block_error: Option<f64>,
    mc: crate::analysis::ErrorReport,
}

fn run_codec_roundtrip(ctx: &mut RunContext) -> Result<(), RunError> {
    let spec = ctx.config.build_spec()?;
    let n = spec.params.n;
    let x = match &ctx.config.knobs.x {
        Some(text) => parse_word(text, n)?,
        None => 0,
    };
    let trials = ctx.config.knobs.trials.unwrap_or(10_000);
    let plan = build_encoding_plan(&spec, x)?;
    let (branch, valid_count, expurgated_count) = match &plan.kind {
        PlanKind::TwoBranch { diagnostics, .. } => (
            "two-branch".to_string(),
            Some(diagnostics.valid_count),
            Some(diagnostics.expurgated_count),
        ),
        PlanKind::PureValid { codewords } => {
            ("pure-valid".to_string(), Some(codewords.len()), Some(codewords.len()))
        }
        PlanKind::Fallback { reason } => (format!("fallback: {reason:?}"), None, None),
    };
    let mc = estimate_error(
        &spec,
        build_encoding_plan,
        &SourceModel::Explicit(vec![x]),
        trials,
        spec.params.seed,
        ctx.workers,
    )?;
    let artifact = RoundtripArtifact {
        schema: "codec-roundtrip/v1",
        params: spec.params.clone(),
        x: bits::format_bits(x, n),
        branch,
        valid_count,
        expurgated_count,
        exact_per_bit: plan.per_bit_error(&spec)?,
        exact_block_error: plan.exact_block_error(&spec),
        mc,
    };
    let mut csv = String::from("distortion,count\n");
    for (d, k) in artifact.mc.distortion_histogram.iter().enumerate() {
        let _ = writeln!(csv, "{d},{k}");
    }
    ctx.write_text("histogram.csv", &csv)?;
    let index = expurgate(enumerate_valid(&spec, x)?, &spec);
    ctx.write_text("codebook.json", &(codebook_json(&index, n) + "\n"))?;
    ctx.note(format!(
        "x = {}: {} plan, MC block error {:.5} over {} trials (exact {:?})",
        artifact.x, artifact.branch, artifact.mc.block_error, trials, artifact.exact_block_error
    ));
    ctx.write_json("roundtrip.json", &artifact)?;
    Ok(())
}

fn run_privacy_audit(ctx: &mut RunContext) -> Result<(), RunError> {
    let spec = ctx.config.build_spec()?;
    let scope = audit_scope(&ctx.config.knobs)?;
    let audit = audit_privacy(&spec, build_encoding_plan, scope)?;
    let mut csv = String::from("window,bit_value,leakage,mi_bits\n");
    for (i, (leak, mi)) in audit
        .per_class_leakage
        .iter()
        .zip(&audit.per_class_mi_bits)
        .enumerate()
    {
        for v in 0..2 {
            let _ = writeln!(csv, "{i},{v},{},{}", leak[v], mi[v]);
        }
    }
    ctx.write_text("leakage.csv", &csv)?;
    ctx.note(format!(
        "scope {} words: max leakage {:.3e} ({} fallback users); non-fallback leakage {:.3e}",
        audit.scope_size,
        audit.max_leakage,
        audit.fallback_users.len(),
        audit.non_fallback_leakage
    ));
    ctx.write_json("audit.json", &audit)?;
    Ok(())
}

#[derive(Serialize)]
struct CouplingArtifact {
    schema: &'static str,
    params: CodeParams,
    delta: f64,
    k: usize,
    words: Vec<String>,
    typicality: crate::coupling::TypicalityReport,
    sweep: crate::coupling::SweepReport,
    marginals: crate::coupling::MarginalReport,
}

fn run_coupling_demo(ctx: &mut RunContext) -> Result<(), RunError> {
    let spec = ctx.config.build_spec()?;
    let n = spec.params.n;
    let knobs = ctx.config.knobs.clone();
    let k = knobs.k.unwrap_or(5);
    if k == 0 {
        return Err(RunError::Config("knobs.k must be at least 1".into()));
    }
    let delta = knobs.delta.unwrap_or(2.0 / 3.0);
    let words: Vec<u64> = match &knobs.words {
        Some(texts) => texts
            .iter()
            .map(|t| parse_word(t, n))
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            // Default: cycle the in-ball source words.
            let cutoff = spec.params.weight_cutoff();
            let in_ball: Vec<u64> = (0..1u64 << n)
                .filter(|&x| bits::weight(x, n) as f64 <= cutoff)
                .collect();
            (0..k).map(|i| in_ball[i % in_ball.len()]).collect()
        }
    };
    if words.len() != k {
        return Err(RunError::Config(format!(
            "knobs.words has {} entries but k = {k}",
            words.len()
        )));
    }
    let plans = words
        .iter()
        .map(|&x| build_encoding_plan(&spec, x))
        .collect::<Result<Vec<_>, _>>()?;
    let schedule = build_schedule(&spec, &plans, delta)?;
    let artifact = CouplingArtifact {
        schema: "coupling-demo/v1",
        params: spec.params.clone(),
        delta,
        k,
        words: words.iter().map(|&x| bits::format_bits(x, n)).collect(),
        typicality: check_distortion_typical(&schedule),
        sweep: worst_case_sweep(&schedule),
        marginals: check_marginal_preservation(&schedule),
    };
    ctx.write_text("schedule.csv", &schedule_to_csv(&schedule))?;
    ctx.note(format!(
        "k = {k}, delta = {delta}: worst distortion {} vs bound {:.3} (holds: {}); marginal gap {:.3e}",
        artifact.sweep.max_total_distortion,
        artifact.sweep.bound,
        artifact.sweep.holds,
        artifact.marginals.max_gap
    ));
    ctx.write_json("coupling.json", &artifact)?;
    Ok(())
}

#[derive(Serialize)]
struct AppendixArtifact {
    schema: &'static str,
    seed: u64,
    sweeps: usize,
    max_alphabet: usize,
    violations: usize,
    worked_example: crate::analysis::ExcessReport,
}

fn run_appendix_check(ctx: &mut RunContext) -> Result<(), RunError> {
    let knobs = &ctx.config.knobs;
    let sweeps = knobs.trials.unwrap_or(10_000);
    let max_d = knobs.max_alphabet.unwrap_or(64);
    let seed = ctx.config.params.seed;
    let summary = appendix_sweep(sweeps, max_d, seed)?;
    let worked = excess_fraction_check(&[0.3, 0.25, 0.25, 0.2], 50.0, 0.4)?;
    let mut csv = String::from("d,alpha,eps,hypothesis_lhs,hypothesis_rhs,lhs,rhs,conclusion_holds\n");
    for row in &summary.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.d,
            row.alpha,
            row.eps,
            row.hypothesis_lhs,
            row.hypothesis_rhs,
            row.lhs,
            row.rhs,
            row.conclusion_holds
        );
    }
    ctx.write_text("sweep.csv", &csv)?;
    let artifact = AppendixArtifact {
        schema: "appendix-check/v1",
        seed,
        sweeps,
        max_alphabet: max_d,
        violations: summary.violations,
        worked_example: worked,
    };
    ctx.note(format!(
        "{} sweeps, {} violations; worked example: {} <= {} ({})",
        sweeps,
        artifact.violations,
        artifact.worked_example.lhs,
        artifact.worked_example.rhs,
        artifact.worked_example.conclusion_holds
    ));
    ctx.write_json("appendix.json", &artifact)?;
    if summary.violations > 0 {
        return Err(RunError::Other(format!(
            "{} sweep rows violated a proven inequality (arithmetic bug)",
            summary.violations
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Run one scenario end to end and write all artifacts.
///
/// The `workers` and `timestamp` knobs never change report contents:
/// timestamps go only to the run summary, and parallel reductions are
/// deterministic.
pub fn run(
    config: ExperimentConfig,
    out_dir: &Path,
    workers: usize,
    timestamp: Option<u64>,
) -> Result<Vec<String>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let scenario = config.scenario;
    let mut ctx = RunContext {
        config,
        out_dir: out_dir.to_path_buf(),
        workers,
        timestamp,
        artifacts: Vec::new(),
        summary: String::new(),
    };
    ctx.note(format!("scenario: {}", scenario.name()));
    if let Some(ts) = ctx.timestamp {
        ctx.note(format!("timestamp_unix_seconds: {ts}"));
    }
    match scenario {
        Scenario::EnsembleStudy => run_ensemble_study(&mut ctx)?,
        Scenario::MatchDemo => run_match_demo(&mut ctx)?,
        Scenario::CodecRoundtrip => run_codec_roundtrip(&mut ctx)?,
        Scenario::PrivacyAudit => run_privacy_audit(&mut ctx)?,
        Scenario::CouplingDemo => run_coupling_demo(&mut ctx)?,
        Scenario::AppendixCheck => run_appendix_check(&mut ctx)?,
    }
    // The echoed config reproduces this run when passed back in; pin the
    // effective output directory so a bare rerun lands in the same place.
    let mut echo = ctx.config.clone();
    echo.output.dir = Some(ctx.out_dir.clone());
    let echo_text = echo.to_json() + "\n";
    ctx.write_text("resolved_config.json", &echo_text)?;
    let summary = std::mem::take(&mut ctx.summary);
    ctx.write_text("summary.txt", &summary)?;
    Ok(ctx.artifacts)
}

/// Full command-line entry: parse `args`, load the config, dispatch, and
/// return the process exit code. Errors print to stderr.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match CliArgs::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes.
            let code = if e.use_stderr() { EXIT_CONFIG_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let common = cli.command.common();
    let text = match std::fs::read_to_string(&common.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return EXIT_CONFIG_INVALID;
        }
    };
    let config = match ExperimentConfig::from_json(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_INVALID;
        }
    };
    if config.scenario != cli.command.scenario() {
        eprintln!(
            "error: config names scenario {:?} but the subcommand runs {:?}",
            config.scenario.name(),
            cli.command.scenario().name()
        );
        return EXIT_CONFIG_INVALID;
    }
    let out_dir = match common.out.clone().or_else(|| config.output.dir.clone()) {
        Some(dir) => dir,
        None => {
            eprintln!("error: no output directory (set output.dir in the config or pass --out)");
            return EXIT_CONFIG_INVALID;
        }
    };
    let timestamp = if common.no_timestamp {
        None
    } else {
        Some(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        )
    };
    match run(config, &out_dir, common.workers, timestamp) {
        Ok(artifacts) => {
            println!("wrote {} artifacts to {}", artifacts.len(), out_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
