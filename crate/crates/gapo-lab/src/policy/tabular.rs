//! Explicit logit-table policy backend.
//!
//! Contexts are keyed on `(prompt identity hash, prefix length)`, so a
//! row fully determines the next-token distribution at a given response
//! step of a given prompt. Unmaterialized rows read as all-zero logits
//! (a uniform distribution); training and finite-difference probing
//! materialize rows on demand. The `BTreeMap` keeps coordinate order
//! deterministic for the flat parameter view.

use std::collections::BTreeMap;

use crate::error::{LabError, Result};
use crate::policy::{softmax, WeightedToken};
use crate::task_gen::{Prompt, TokenId};

/// Row key: prompt identity and response step.
pub type ContextKey = (u64, u16);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabularPolicy {
    vocab_size: usize,
    rows: BTreeMap<ContextKey, Vec<f64>>,
}

/// Sparse gradient: one dense row per touched context.
#[derive(Debug, Clone, Default)]
pub struct TabularGrads {
    pub rows: BTreeMap<ContextKey, Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(vocab_size: usize) -> Self {
        TabularPolicy {
            vocab_size,
            rows: BTreeMap::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn key(prompt: &Prompt, prefix_len: usize) -> ContextKey {
        (prompt.identity_hash(), prefix_len as u16)
    }

    pub fn forward_logits(&self, prompt: &Prompt, prefix: &[TokenId]) -> Vec<f64> {
        self.rows
            .get(&Self::key(prompt, prefix.len()))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.vocab_size])
    }

    /// Ensures a row exists so it participates in the flat view.
    pub fn materialize(&mut self, prompt: &Prompt, prefix_len: usize) {
        let vocab_size = self.vocab_size;
        self.rows
            .entry(Self::key(prompt, prefix_len))
            .or_insert_with(|| vec![0.0; vocab_size]);
    }

    /// Direct row access for hand-constructed test policies.
    pub fn set_row(&mut self, prompt: &Prompt, prefix_len: usize, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.vocab_size);
        self.rows.insert(Self::key(prompt, prefix_len), logits);
    }

    pub fn rows(&self) -> &BTreeMap<ContextKey, Vec<f64>> {
        &self.rows
    }

    /// For a table row, `d log softmax(row)[token] / d row` is simply
    /// `onehot(token) - softmax(row)`, scaled by the entry weight.
    pub fn grad_weighted_logprob(&self, entries: &[WeightedToken]) -> Result<TabularGrads> {
        let mut grads = TabularGrads::default();
        for entry in entries {
            if !entry.weight.is_finite() {
                return Err(LabError::NonFinite {
                    what: "gradient weight".to_string(),
                });
            }
            if entry.weight == 0.0 {
                continue;
            }
            let logits = self.forward_logits(entry.prompt, entry.prefix);
            let probs = softmax(&logits);
            let row = grads
                .rows
                .entry(Self::key(entry.prompt, entry.prefix.len()))
                .or_insert_with(|| vec![0.0; self.vocab_size]);
            for (r, p) in row.iter_mut().zip(probs.iter()) {
                *r -= entry.weight * p;
            }
            row[entry.token] += entry.weight;
        }
        Ok(grads)
    }

    pub fn add_scaled(&mut self, grads: &TabularGrads, scale: f64) {
        for (key, grad_row) in &grads.rows {
            let row = self
                .rows
                .entry(*key)
                .or_insert_with(|| vec![0.0; self.vocab_size]);
            for (r, g) in row.iter_mut().zip(grad_row.iter()) {
                *r += scale * g;
            }
        }
    }

    // ---- Flat coordinate view over materialized rows ----

    pub fn flat_len(&self) -> usize {
        self.rows.len() * self.vocab_size
    }

    pub fn flat_get(&self, index: usize) -> f64 {
        let row = self
            .rows
            .values()
            .nth(index / self.vocab_size)
            .expect("flat index out of range");
        row[index % self.vocab_size]
    }

    pub fn flat_add(&mut self, index: usize, delta: f64) {
        let vocab_size = self.vocab_size;
        let row = self
            .rows
            .values_mut()
            .nth(index / vocab_size)
            .expect("flat index out of range");
        row[index % vocab_size] += delta;
    }
}

impl TabularGrads {
    pub fn l2_norm(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&mut self, other: &TabularGrads) {
        for (key, grad_row) in &other.rows {
            match self.rows.get_mut(key) {
                Some(row) => {
                    for (r, g) in row.iter_mut().zip(grad_row.iter()) {
                        *r += g;
                    }
                }
                None => {
                    self.rows.insert(*key, grad_row.clone());
                }
            }
        }
    }

    /// Flattens in the policy's row order; every touched row must be
    /// materialized in the policy first.
    pub fn flatten_like(&self, policy: &TabularPolicy) -> Vec<f64> {
        for key in self.rows.keys() {
            assert!(
                policy.rows.contains_key(key),
                "gradient touches unmaterialized context {key:?}"
            );
        }
        let mut out = Vec::with_capacity(policy.flat_len());
        for (key, _) in policy.rows.iter() {
            match self.rows.get(key) {
                Some(row) => out.extend_from_slice(row),
                None => out.extend(std::iter::repeat(0.0).take(policy.vocab_size)),
            }
        }
        out
    }
}
