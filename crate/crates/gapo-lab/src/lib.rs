//! A desk-scale laboratory for studying diversity collapse in
//! group-relative policy optimization.
//!
//! The crate trains toy autoregressive categorical policies on synthetic
//! "pick one item from this list" tasks and compares:
//!
//! - **GRPO** with a per-sample correctness reward, which verifiably
//!   sharpens whatever selection bias the starting policy has;
//! - **GAPO**, the group-aware extension, with a frequency-aware reward
//!   that pays each rollout by how *under-represented* its answer is
//!   within the sampled group, restoring uniform selection;
//! - supervised teacher forcing (SFT) and decode-time truncation
//!   (top-k / top-p / min-p) baselines.
//!
//! Everything is deterministic given a root seed: dataset generation,
//! rollout sampling, reward noise, and evaluation all draw from named
//! child streams (see [`rng`]). The numerical core is data-parallel via
//! rayon when the `parallel` feature (default) is enabled, with a
//! sequential fallback that produces bit-identical results.
//!
//! Module map:
//!
//! - [`task_gen`]: vocabulary, categories, prompt templates, dataset
//!   generation, rendering, and strict answer parsing.
//! - [`policy`]: tabular and MLP policy backends, decode-time
//!   truncation, rollout sampling, and checkpointing.
//! - [`reward`]: the group reward interface, the frequency-aware group
//!   reward, per-sample adapters, and a contract checker.
//! - [`trainer`]: advantages, clipped surrogate, KL penalty, Adam/SGD,
//!   warmup, the RL loop, and the SFT loop.
//! - [`metrics`]: Jensen-Shannon distance, unique-answer curves,
//!   Self-BLEU, and entropy.
//! - [`oracle`]: independent ground-truth checks (exact enumeration vs
//!   Monte Carlo, finite-difference gradients, fixed-point no-ops).
//! - [`eval`]: held-out evaluation suites.
//! - [`experiment`]: config loading, run orchestration, and artifacts.

pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod task_gen;
pub mod trainer;

pub use error::LabError;
