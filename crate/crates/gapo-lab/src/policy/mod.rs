//! Toy autoregressive categorical policies.
//!
//! Two interchangeable backends produce a full-vocabulary logit row
//! for every `(prompt, response prefix)` context:
//!
//! - [`TabularPolicy`]: an explicit logit table keyed on
//!   `(prompt identity, prefix length)`. Transparent, exactly
//!   enumerable, ideal for oracle checks.
//! - [`MlpPolicy`]: a small feed-forward network over pooled item
//!   embeddings, the template, the response prefix, and the step
//!   index, with a position-pointer readout that ties list membership
//!   into the output logits. This backend generalizes across unseen
//!   categories.
//!
//! Sampling applies decode-time truncation ([`DecodeConfig`]) on top
//! of the raw softmax; training-time importance ratios always use the
//! raw distribution.

mod checkpoint;
mod mlp;
mod tabular;

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT_VERSION};
pub use mlp::{MlpConfig, MlpGrads, MlpPolicy};
pub use tabular::{TabularGrads, TabularPolicy};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::task_gen::{Prompt, TokenId, TOK_ANSWER_CLOSE, TOK_EOS};

// ---- Decode-time truncation ----

/// Sampling-time transform of the raw logits.
///
/// `temperature` rescales logits before the softmax; at most one of
/// `top_k`, `top_p`, `min_p` may be active. Truncated distributions are
/// renormalized. Ties are broken toward lower token ids so decoding is
/// deterministic for a given random stream.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub min_p: Option<f64>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            temperature: 1.0,
            top_k: None,
            top_p: None,
            min_p: None,
        }
    }
}

impl DecodeConfig {
    /// Plain temperature-1 softmax sampling.
    pub fn raw() -> Self {
        Self::default()
    }

    pub fn with_min_p(min_p: f64) -> Self {
        DecodeConfig {
            min_p: Some(min_p),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(LabError::config(
                "decode.temperature",
                "must be strictly positive",
            ));
        }
        let active = self.top_k.is_some() as u8 + self.top_p.is_some() as u8 + self.min_p.is_some() as u8;
        if active > 1 {
            return Err(LabError::config(
                "decode",
                "at most one of top_k, top_p, min_p may be set",
            ));
        }
        if let Some(k) = self.top_k {
            if k == 0 {
                return Err(LabError::config("decode.top_k", "must be at least 1"));
            }
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(LabError::config("decode.top_p", "must lie in (0, 1]"));
            }
        }
        if let Some(p) = self.min_p {
            if !(0.0..1.0).contains(&p) {
                return Err(LabError::config("decode.min_p", "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Numerically stable log-softmax of a logit row.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_z).collect()
}

/// Softmax probabilities of a logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|lp| lp.exp()).collect()
}

/// Applies temperature and at most one truncation rule, returning a
/// probability vector over the full vocabulary (zeros outside the kept
/// support, renormalized inside it).
pub fn apply_decode(logits: &[f64], config: &DecodeConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let scaled: Vec<f64> = if config.temperature == 1.0 {
        logits.to_vec()
    } else {
        logits.iter().map(|l| l / config.temperature).collect()
    };
    let mut probs = softmax(&scaled);

    // Sort order shared by top-k and top-p: descending probability,
    // ascending token id on ties.
    let ranked = || {
        let mut idx: Vec<usize> = (0..probs.len()).collect();
        idx.sort_by(|&a, &b| {
            probs[b]
                .partial_cmp(&probs[a])
                .expect("softmax output is finite")
                .then(a.cmp(&b))
        });
        idx
    };

    if let Some(k) = config.top_k {
        let keep: Vec<usize> = ranked().into_iter().take(k).collect();
        retain_support(&mut probs, &keep);
    } else if let Some(p) = config.top_p {
        let mut keep = Vec::new();
        let mut mass = 0.0;
        for i in ranked() {
            keep.push(i);
            mass += probs[i];
            if mass >= p {
                break;
            }
        }
        retain_support(&mut probs, &keep);
    } else if let Some(min_p) = config.min_p {
        let max = probs.iter().copied().fold(0.0_f64, f64::max);
        let threshold = min_p * max;
        let keep: Vec<usize> = (0..probs.len())
            .filter(|&i| probs[i] >= threshold)
            .collect();
        retain_support(&mut probs, &keep);
    }

    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(LabError::Decode(
            "truncation left no probability mass".to_string(),
        ));
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

fn retain_support(probs: &mut [f64], keep: &[usize]) {
    let keep_set: std::collections::HashSet<usize> = keep.iter().copied().collect();
    for (i, p) in probs.iter_mut().enumerate() {
        if !keep_set.contains(&i) {
            *p = 0.0;
        }
    }
}

// ---- Rollouts ----

/// One sampled response with the sampling-time log-probabilities of
/// each emitted token (under the decode-transformed distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub tokens: Vec<TokenId>,
    pub old_logprobs: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One token-level gradient target: `weight * d log pi(token | prompt,
/// prefix) / d theta` contributions are summed over entries.
#[derive(Debug, Clone, Copy)]
pub struct WeightedToken<'a> {
    pub prompt: &'a Prompt,
    pub prefix: &'a [TokenId],
    pub token: TokenId,
    pub weight: f64,
}

// ---- Policy facade ----

/// Backend-independent policy configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// `"mlp"` or `"tabular"`.
    pub backend: String,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pointer_hidden_dim: usize,
    /// Hard cap on sampled response length.
    pub max_response_len: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            backend: "mlp".to_string(),
            embed_dim: 16,
            hidden_dim: 32,
            pointer_hidden_dim: 16,
            max_response_len: 5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backend != "mlp" && self.backend != "tabular" {
            return Err(LabError::config(
                "policy.backend",
                "must be \"mlp\" or \"tabular\"",
            ));
        }
        for (field, v) in [
            ("policy.embed_dim", self.embed_dim),
            ("policy.hidden_dim", self.hidden_dim),
            ("policy.pointer_hidden_dim", self.pointer_hidden_dim),
            ("policy.max_response_len", self.max_response_len),
        ] {
            if v == 0 {
                return Err(LabError::config(field, "must be positive"));
            }
        }
        Ok(())
    }
}

/// A trainable policy, either backend.
#[derive(Debug, Clone)]
pub enum Policy {
    Mlp(MlpPolicy),
    Tabular(TabularPolicy),
}

/// Gradient (or optimizer-moment) container matching a policy's shape.
#[derive(Debug, Clone)]
pub enum PolicyGrads {
    Mlp(MlpGrads),
    Tabular(TabularGrads),
}

impl Policy {
    pub fn backend_name(&self) -> &'static str {
        match self {
            Policy::Mlp(_) => "mlp",
            Policy::Tabular(_) => "tabular",
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Policy::Mlp(p) => p.vocab_size(),
            Policy::Tabular(p) => p.vocab_size(),
        }
    }

    /// Raw logits for the next token in the given context.
    pub fn forward_logits(&self, prompt: &Prompt, prefix: &[TokenId]) -> Vec<f64> {
        match self {
            Policy::Mlp(p) => p.forward_logits(prompt, prefix),
            Policy::Tabular(p) => p.forward_logits(prompt, prefix),
        }
    }

    /// Samples one response; stops on the closing tag, end-of-sequence,
    /// or the length cap.
    pub fn sample_rollout(
        &self,
        prompt: &Prompt,
        decode: &DecodeConfig,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Rollout> {
        let mut tokens = Vec::with_capacity(max_len);
        let mut old_logprobs = Vec::with_capacity(max_len);
        for _ in 0..max_len {
            let logits = self.forward_logits(prompt, &tokens);
            let probs = apply_decode(&logits, decode)?;
            let token = sample_categorical(&probs, rng);
            old_logprobs.push(probs[token].ln());
            tokens.push(token);
            if token == TOK_ANSWER_CLOSE || token == TOK_EOS {
                break;
            }
        }
        Ok(Rollout {
            tokens,
            old_logprobs,
        })
    }

    /// Log-probabilities of an existing token sequence under the raw
    /// softmax distribution (no decode-time truncation), one value per
    /// token.
    pub fn logprobs_under(&self, prompt: &Prompt, tokens: &[TokenId]) -> Vec<f64> {
        let mut out = Vec::with_capacity(tokens.len());
        for t in 0..tokens.len() {
            let logits = self.forward_logits(prompt, &tokens[..t]);
            out.push(log_softmax(&logits)[tokens[t]]);
        }
        out
    }

    /// Gradient of `sum_i weight_i * log pi(token_i | context_i)`.
    pub fn grad_weighted_logprob(&self, entries: &[WeightedToken]) -> Result<PolicyGrads> {
        match self {
            Policy::Mlp(p) => Ok(PolicyGrads::Mlp(p.grad_weighted_logprob(entries)?)),
            Policy::Tabular(p) => Ok(PolicyGrads::Tabular(p.grad_weighted_logprob(entries)?)),
        }
    }

    /// Zero-filled gradient container with this policy's shape.
    pub fn zero_grads(&self) -> PolicyGrads {
        match self {
            Policy::Mlp(p) => PolicyGrads::Mlp(p.zero_grads()),
            Policy::Tabular(_) => PolicyGrads::Tabular(TabularGrads::default()),
        }
    }

    /// Adds `scale * grads` to the parameters.
    pub fn add_scaled(&mut self, grads: &PolicyGrads, scale: f64) {
        match (self, grads) {
            (Policy::Mlp(p), PolicyGrads::Mlp(g)) => p.add_scaled(g, scale),
            (Policy::Tabular(p), PolicyGrads::Tabular(g)) => p.add_scaled(g, scale),
            _ => panic!("gradient backend does not match policy backend"),
        }
    }

    // ---- Flat parameter view (finite differences, norms) ----

    pub fn flat_len(&self) -> usize {
        match self {
            Policy::Mlp(p) => p.flat_len(),
            Policy::Tabular(p) => p.flat_len(),
        }
    }

    pub fn flat_get(&self, index: usize) -> f64 {
        match self {
            Policy::Mlp(p) => p.flat_get(index),
            Policy::Tabular(p) => p.flat_get(index),
        }
    }

    pub fn flat_add(&mut self, index: usize, delta: f64) {
        match self {
            Policy::Mlp(p) => p.flat_add(index, delta),
            Policy::Tabular(p) => p.flat_add(index, delta),
        }
    }
}

impl PolicyGrads {
    /// Flattens in the same coordinate order as the policy's flat view.
    /// For tabular grads this requires the policy to pre-materialize
    /// every touched row (see `TabularPolicy::materialize`).
    pub fn flatten_like(&self, policy: &Policy) -> Vec<f64> {
        match (self, policy) {
            (PolicyGrads::Mlp(g), Policy::Mlp(_)) => g.flatten(),
            (PolicyGrads::Tabular(g), Policy::Tabular(p)) => g.flatten_like(p),
            _ => panic!("gradient backend does not match policy backend"),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        match self {
            PolicyGrads::Mlp(g) => g.l2_norm(),
            PolicyGrads::Tabular(g) => g.l2_norm(),
        }
    }

    pub fn add(&mut self, other: &PolicyGrads) {
        match (self, other) {
            (PolicyGrads::Mlp(a), PolicyGrads::Mlp(b)) => a.add(b),
            (PolicyGrads::Tabular(a), PolicyGrads::Tabular(b)) => a.add(b),
            _ => panic!("cannot mix gradient backends"),
        }
    }
}

/// Draws an index from a probability vector by inverse-CDF walk.
fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if u < acc {
                return i;
            }
        }
    }
    // Float round-off can leave acc marginally below 1; fall back to
    // the last token with support.
    last_nonzero
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::child_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_is_a_probability_vector() {
        let probs = softmax(&[0.3, -2.0, 5.0, 0.0]);
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let lp = log_softmax(&vec![0.0; 8]);
        for v in lp {
            assert_abs_diff_eq!(v, (1.0_f64 / 8.0).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn min_p_matches_hand_computed_example() {
        // Probabilities [0.5, 0.3, 0.15, 0.05] with min_p = 0.2 keep the
        // first three entries (threshold 0.1) and renormalize.
        let logits: Vec<f64> = [0.5_f64, 0.3, 0.15, 0.05].iter().map(|p| p.ln()).collect();
        let out = apply_decode(&logits, &DecodeConfig::with_min_p(0.2)).unwrap();
        assert_abs_diff_eq!(out[0], 0.5263, epsilon = 1e-4);
        assert_abs_diff_eq!(out[1], 0.3158, epsilon = 1e-4);
        assert_abs_diff_eq!(out[2], 0.1579, epsilon = 1e-4);
        assert_abs_diff_eq!(out[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn top_k_one_is_argmax_with_low_id_tie_break() {
        let logits = vec![1.0, 3.0, 3.0, 0.0];
        let cfg = DecodeConfig {
            top_k: Some(1),
            ..DecodeConfig::default()
        };
        let out = apply_decode(&logits, &cfg).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn top_p_keeps_smallest_prefix_reaching_mass() {
        let logits: Vec<f64> = [0.5_f64, 0.3, 0.15, 0.05].iter().map(|p| p.ln()).collect();
        let cfg = DecodeConfig {
            top_p: Some(0.75),
            ..DecodeConfig::default()
        };
        let out = apply_decode(&logits, &cfg).unwrap();
        // 0.5 < 0.75, 0.5 + 0.3 >= 0.75: keep exactly two tokens.
        assert!(out[0] > 0.0 && out[1] > 0.0);
        assert_eq!(out[2], 0.0);
        assert_eq!(out[3], 0.0);
        assert_abs_diff_eq!(out[0], 0.5 / 0.8, epsilon = 1e-12);
    }

    #[test]
    fn temperature_must_be_positive() {
        let cfg = DecodeConfig {
            temperature: 0.0,
            ..DecodeConfig::default()
        };
        assert!(apply_decode(&[0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn only_one_truncation_rule_may_be_active() {
        let cfg = DecodeConfig {
            top_k: Some(2),
            min_p: Some(0.1),
            ..DecodeConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn temperature_sharpens_or_flattens() {
        let logits = vec![2.0, 0.0, -1.0];
        let cold = apply_decode(
            &logits,
            &DecodeConfig {
                temperature: 0.5,
                ..DecodeConfig::default()
            },
        )
        .unwrap();
        let hot = apply_decode(
            &logits,
            &DecodeConfig {
                temperature: 4.0,
                ..DecodeConfig::default()
            },
        )
        .unwrap();
        let base = apply_decode(&logits, &DecodeConfig::raw()).unwrap();
        assert!(cold[0] > base[0]);
        assert!(hot[0] < base[0]);
    }

    #[test]
    fn categorical_sampling_is_deterministic_per_stream() {
        let probs = vec![0.25, 0.25, 0.25, 0.25];
        let mut a = child_rng(1, "s", 0);
        let mut b = child_rng(1, "s", 0);
        for _ in 0..32 {
            assert_eq!(
                sample_categorical(&probs, &mut a),
                sample_categorical(&probs, &mut b)
            );
        }
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn any_decode() -> impl Strategy<Value = DecodeConfig> {
        prop_oneof![
            Just(DecodeConfig::raw()),
            (1usize..6).prop_map(|k| DecodeConfig {
                top_k: Some(k),
                ..DecodeConfig::default()
            }),
            (0.05f64..1.0).prop_map(|p| DecodeConfig {
                top_p: Some(p),
                ..DecodeConfig::default()
            }),
            (0.0f64..0.9).prop_map(|p| DecodeConfig::with_min_p(p)),
            (0.25f64..4.0).prop_map(|t| DecodeConfig {
                temperature: t,
                ..DecodeConfig::default()
            }),
        ]
    }

    proptest! {
        #[test]
        fn decode_output_is_a_probability_vector_with_shrunk_support(
            logits in proptest::collection::vec(-6.0f64..6.0, 2..12),
            cfg in any_decode(),
        ) {
            let raw = softmax(&logits);
            let out = apply_decode(&logits, &cfg).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (o, r) in out.iter().zip(raw.iter()) {
                prop_assert!(*o >= 0.0);
                // Support never grows: anything kept had raw support.
                if *o > 0.0 {
                    prop_assert!(*r > 0.0);
                }
            }
        }
    }
}
