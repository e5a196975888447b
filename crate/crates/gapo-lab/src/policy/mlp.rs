//! Feed-forward policy with a position-pointer readout.
//!
//! Context features are the concatenation of
//!
//! - the pooled item context: the mean of `item embedding +
//!   per-position offset` over the displayed list, or the category
//!   token's embedding for open-ended prompts;
//! - the template embedding;
//! - the mean embedding of the response prefix;
//! - a one-hot response step index (capped).
//!
//! Two heads read the hidden state. The base head produces a logit per
//! vocabulary entry. The pointer head scores each *list position* from
//! a restricted feature set (template, prefix, step — deliberately
//! blind to item identity) and its scores are scattered onto the logits
//! of the tokens currently displayed at those positions. Because the
//! pointer cannot see which items are shown, any position profile it
//! learns on training categories transfers verbatim to categories it
//! has never seen, which is what lets a policy trained to select
//! uniformly keep selecting uniformly on held-out lists.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::policy::{softmax, PolicyConfig, WeightedToken};
use crate::task_gen::{Prompt, PromptMode, TokenId, MAX_LIST_LEN};

/// Width of the one-hot response-step feature; later steps share the
/// final slot.
pub const STEP_FEATURES: usize = 4;

/// Shape parameters of an MLP policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub vocab_size: usize,
    pub n_list_templates: usize,
    pub n_open_templates: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pointer_hidden_dim: usize,
}

impl MlpConfig {
    pub fn from_policy_config(
        cfg: &PolicyConfig,
        vocab_size: usize,
        n_list_templates: usize,
        n_open_templates: usize,
    ) -> Self {
        MlpConfig {
            vocab_size,
            n_list_templates,
            n_open_templates,
            embed_dim: cfg.embed_dim,
            hidden_dim: cfg.hidden_dim,
            pointer_hidden_dim: cfg.pointer_hidden_dim,
        }
    }

    /// Base-head input width.
    pub fn din(&self) -> usize {
        3 * self.embed_dim + STEP_FEATURES
    }

    /// Pointer-head input width (item context excluded).
    pub fn dinp(&self) -> usize {
        2 * self.embed_dim + STEP_FEATURES
    }
}

/// The trainable tensors; shared layout between parameters, gradients,
/// and optimizer moments. All matrices are row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlpTensors {
    /// Token embeddings, `vocab_size x embed_dim`.
    pub e: Vec<f64>,
    /// Template embeddings (list templates first), `(nl + no) x embed_dim`.
    pub et: Vec<f64>,
    /// Per-position offsets mixed into the item context, `MAX_LIST_LEN x embed_dim`.
    pub o: Vec<f64>,
    /// Base head: hidden layer `hidden_dim x din`, bias `hidden_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Base head: output layer `vocab_size x hidden_dim`, bias `vocab_size`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Pointer head: hidden layer `pointer_hidden_dim x dinp`, bias.
    pub w1p: Vec<f64>,
    pub b1p: Vec<f64>,
    /// Pointer head: position scores `MAX_LIST_LEN x pointer_hidden_dim`, bias.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Gradients share the tensor layout.
pub type MlpGrads = MlpTensors;

impl MlpTensors {
    fn zeros(cfg: &MlpConfig) -> Self {
        MlpTensors {
            e: vec![0.0; cfg.vocab_size * cfg.embed_dim],
            et: vec![0.0; (cfg.n_list_templates + cfg.n_open_templates) * cfg.embed_dim],
            o: vec![0.0; MAX_LIST_LEN * cfg.embed_dim],
            w1: vec![0.0; cfg.hidden_dim * cfg.din()],
            b1: vec![0.0; cfg.hidden_dim],
            w2: vec![0.0; cfg.vocab_size * cfg.hidden_dim],
            b2: vec![0.0; cfg.vocab_size],
            w1p: vec![0.0; cfg.pointer_hidden_dim * cfg.dinp()],
            b1p: vec![0.0; cfg.pointer_hidden_dim],
            w3: vec![0.0; MAX_LIST_LEN * cfg.pointer_hidden_dim],
            b3: vec![0.0; MAX_LIST_LEN],
        }
    }

    fn fields(&self) -> [&Vec<f64>; 11] {
        [
            &self.e, &self.et, &self.o, &self.w1, &self.b1, &self.w2, &self.b2, &self.w1p,
            &self.b1p, &self.w3, &self.b3,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.e,
            &mut self.et,
            &mut self.o,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w1p,
            &mut self.b1p,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn add(&mut self, other: &MlpTensors) {
        for (a, b) in self.fields_mut().into_iter().zip(other.fields()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &MlpTensors, scale: f64) {
        for (a, b) in self.fields_mut().into_iter().zip(other.fields()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.fields()
            .into_iter()
            .flat_map(|f| f.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.fields()
            .into_iter()
            .flat_map(|f| f.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.fields()
            .into_iter()
            .flat_map(|f| f.iter())
            .all(|v| v.is_finite())
    }
}

/// The MLP policy backend.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub config: MlpConfig,
    pub tensors: MlpTensors,
}

/// Cached intermediate state of one forward pass, reused by backward.
struct ForwardTrace {
    x: Vec<f64>,
    h: Vec<f64>,
    hp: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpPolicy {
    /// Initializes embeddings and weights i.i.d. uniform on
    /// `[-0.05, 0.05]`, biases zero.
    pub fn new(config: MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut tensors = MlpTensors::zeros(&config);
        for field in [
            &mut tensors.e,
            &mut tensors.et,
            &mut tensors.o,
            &mut tensors.w1,
            &mut tensors.w2,
            &mut tensors.w1p,
            &mut tensors.w3,
        ] {
            for v in field.iter_mut() {
                *v = rng.gen::<f64>() * 0.1 - 0.05;
            }
        }
        MlpPolicy { config, tensors }
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpTensors::zeros(&self.config)
    }

    pub fn add_scaled(&mut self, grads: &MlpGrads, scale: f64) {
        self.tensors.add_scaled(grads, scale);
    }

    fn template_row(&self, prompt: &Prompt) -> usize {
        match prompt.mode {
            PromptMode::ListSelection => prompt.template_id,
            PromptMode::OpenEnded => self.config.n_list_templates + prompt.template_id,
        }
    }

    /// Builds the base-head feature vector; the pointer head reads the
    /// suffix starting at `embed_dim` (template onward).
    fn features(&self, prompt: &Prompt, prefix: &[TokenId]) -> Vec<f64> {
        let de = self.config.embed_dim;
        let t = &self.tensors;
        let mut x = vec![0.0; self.config.din()];
        match prompt.mode {
            PromptMode::ListSelection => {
                let l = prompt.items.len();
                for (pos, &item) in prompt.items.iter().enumerate() {
                    let e_row = &t.e[item * de..(item + 1) * de];
                    let o_row = &t.o[pos * de..(pos + 1) * de];
                    for d in 0..de {
                        x[d] += (e_row[d] + o_row[d]) / l as f64;
                    }
                }
            }
            PromptMode::OpenEnded => {
                let e_row = &t.e[prompt.category_token * de..(prompt.category_token + 1) * de];
                x[..de].copy_from_slice(e_row);
            }
        }
        let tpl = self.template_row(prompt);
        x[de..2 * de].copy_from_slice(&t.et[tpl * de..(tpl + 1) * de]);
        if !prefix.is_empty() {
            for &tok in prefix {
                let e_row = &t.e[tok * de..(tok + 1) * de];
                for d in 0..de {
                    x[2 * de + d] += e_row[d] / prefix.len() as f64;
                }
            }
        }
        let step = prefix.len().min(STEP_FEATURES - 1);
        x[3 * de + step] = 1.0;
        x
    }

    fn trace(&self, prompt: &Prompt, prefix: &[TokenId]) -> ForwardTrace {
        let cfg = &self.config;
        let t = &self.tensors;
        let x = self.features(prompt, prefix);
        let xp = &x[cfg.embed_dim..];

        let mut h = vec![0.0; cfg.hidden_dim];
        for (i, hv) in h.iter_mut().enumerate() {
            let row = &t.w1[i * cfg.din()..(i + 1) * cfg.din()];
            let z: f64 = row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + t.b1[i];
            *hv = z.tanh();
        }
        let mut logits = t.b2.clone();
        for (v, logit) in logits.iter_mut().enumerate() {
            let row = &t.w2[v * cfg.hidden_dim..(v + 1) * cfg.hidden_dim];
            *logit += row.iter().zip(h.iter()).map(|(w, hv)| w * hv).sum::<f64>();
        }

        let mut hp = vec![0.0; cfg.pointer_hidden_dim];
        for (i, hv) in hp.iter_mut().enumerate() {
            let row = &t.w1p[i * cfg.dinp()..(i + 1) * cfg.dinp()];
            let z: f64 = row.iter().zip(xp.iter()).map(|(w, v)| w * v).sum::<f64>() + t.b1p[i];
            *hv = z.tanh();
        }
        if prompt.mode == PromptMode::ListSelection {
            for (pos, &item) in prompt.items.iter().enumerate() {
                let row = &t.w3[pos * cfg.pointer_hidden_dim..(pos + 1) * cfg.pointer_hidden_dim];
                let s: f64 =
                    row.iter().zip(hp.iter()).map(|(w, hv)| w * hv).sum::<f64>() + t.b3[pos];
                logits[item] += s;
            }
        }
        ForwardTrace { x, h, hp, logits }
    }

    pub fn forward_logits(&self, prompt: &Prompt, prefix: &[TokenId]) -> Vec<f64> {
        self.trace(prompt, prefix).logits
    }

    /// Accumulates the gradient of `sum_i w_i * log pi(token_i | ctx_i)`.
    pub fn grad_weighted_logprob(&self, entries: &[WeightedToken]) -> Result<MlpGrads> {
        let mut grads = self.zero_grads();
        for entry in entries {
            if !entry.weight.is_finite() {
                return Err(LabError::NonFinite {
                    what: "gradient weight".to_string(),
                });
            }
            if entry.weight == 0.0 {
                continue;
            }
            let trace = self.trace(entry.prompt, entry.prefix);
            let probs = softmax(&trace.logits);
            // d/dlogits of w * log softmax(logits)[token].
            let mut dlogits: Vec<f64> = probs.iter().map(|p| -entry.weight * p).collect();
            dlogits[entry.token] += entry.weight;
            self.backward(entry.prompt, entry.prefix, &trace, &dlogits, &mut grads);
        }
        if !grads.is_finite() {
            return Err(LabError::NonFinite {
                what: "policy gradient".to_string(),
            });
        }
        Ok(grads)
    }

    fn backward(
        &self,
        prompt: &Prompt,
        prefix: &[TokenId],
        trace: &ForwardTrace,
        dlogits: &[f64],
        grads: &mut MlpGrads,
    ) {
        let cfg = &self.config;
        let t = &self.tensors;
        let de = cfg.embed_dim;
        let (x, h, hp) = (&trace.x, &trace.h, &trace.hp);
        let xp = &x[de..];

        // Base output layer.
        for v in 0..cfg.vocab_size {
            let dv = dlogits[v];
            grads.b2[v] += dv;
            let row = &mut grads.w2[v * cfg.hidden_dim..(v + 1) * cfg.hidden_dim];
            for (gw, hv) in row.iter_mut().zip(h.iter()) {
                *gw += dv * hv;
            }
        }
        let mut dh = vec![0.0; cfg.hidden_dim];
        for v in 0..cfg.vocab_size {
            let dv = dlogits[v];
            if dv == 0.0 {
                continue;
            }
            let row = &t.w2[v * cfg.hidden_dim..(v + 1) * cfg.hidden_dim];
            for (dhi, w) in dh.iter_mut().zip(row.iter()) {
                *dhi += dv * w;
            }
        }

        // Pointer head: upstream is the scattered logit gradient.
        let mut dxp = vec![0.0; cfg.dinp()];
        if prompt.mode == PromptMode::ListSelection {
            let mut dhp = vec![0.0; cfg.pointer_hidden_dim];
            for (pos, &item) in prompt.items.iter().enumerate() {
                let ds = dlogits[item];
                grads.b3[pos] += ds;
                let row =
                    &mut grads.w3[pos * cfg.pointer_hidden_dim..(pos + 1) * cfg.pointer_hidden_dim];
                for (gw, hv) in row.iter_mut().zip(hp.iter()) {
                    *gw += ds * hv;
                }
                let wrow = &t.w3[pos * cfg.pointer_hidden_dim..(pos + 1) * cfg.pointer_hidden_dim];
                for (dhi, w) in dhp.iter_mut().zip(wrow.iter()) {
                    *dhi += ds * w;
                }
            }
            for i in 0..cfg.pointer_hidden_dim {
                let dz = dhp[i] * (1.0 - hp[i] * hp[i]);
                grads.b1p[i] += dz;
                let row = &mut grads.w1p[i * cfg.dinp()..(i + 1) * cfg.dinp()];
                for (gw, xv) in row.iter_mut().zip(xp.iter()) {
                    *gw += dz * xv;
                }
                let wrow = &t.w1p[i * cfg.dinp()..(i + 1) * cfg.dinp()];
                for (dxi, w) in dxp.iter_mut().zip(wrow.iter()) {
                    *dxi += dz * w;
                }
            }
        }

        // Base hidden layer.
        let mut dx = vec![0.0; cfg.din()];
        for i in 0..cfg.hidden_dim {
            let dz = dh[i] * (1.0 - h[i] * h[i]);
            grads.b1[i] += dz;
            let row = &mut grads.w1[i * cfg.din()..(i + 1) * cfg.din()];
            for (gw, xv) in row.iter_mut().zip(x.iter()) {
                *gw += dz * xv;
            }
            let wrow = &t.w1[i * cfg.din()..(i + 1) * cfg.din()];
            for (dxi, w) in dx.iter_mut().zip(wrow.iter()) {
                *dxi += dz * w;
            }
        }
        for (dxi, dxpi) in dx[de..].iter_mut().zip(dxp.iter()) {
            *dxi += dxpi;
        }

        // Scatter feature gradients into embeddings.
        match prompt.mode {
            PromptMode::ListSelection => {
                let l = prompt.items.len() as f64;
                for (pos, &item) in prompt.items.iter().enumerate() {
                    let e_row = &mut grads.e[item * de..(item + 1) * de];
                    for d in 0..de {
                        e_row[d] += dx[d] / l;
                    }
                    let o_row = &mut grads.o[pos * de..(pos + 1) * de];
                    for d in 0..de {
                        o_row[d] += dx[d] / l;
                    }
                }
            }
            PromptMode::OpenEnded => {
                let e_row = &mut grads.e
                    [prompt.category_token * de..(prompt.category_token + 1) * de];
                for d in 0..de {
                    e_row[d] += dx[d];
                }
            }
        }
        let tpl = self.template_row(prompt);
        let et_row = &mut grads.et[tpl * de..(tpl + 1) * de];
        for d in 0..de {
            et_row[d] += dx[de + d];
        }
        if !prefix.is_empty() {
            let n = prefix.len() as f64;
            for &tok in prefix {
                let e_row = &mut grads.e[tok * de..(tok + 1) * de];
                for d in 0..de {
                    e_row[d] += dx[2 * de + d] / n;
                }
            }
        }
    }

    // ---- Flat coordinate view ----

    pub fn flat_len(&self) -> usize {
        self.tensors.fields().into_iter().map(|f| f.len()).sum()
    }

    pub fn flat_get(&self, mut index: usize) -> f64 {
        for field in self.tensors.fields() {
            if index < field.len() {
                return field[index];
            }
            index -= field.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_add(&mut self, mut index: usize, delta: f64) {
        for field in self.tensors.fields_mut() {
            if index < field.len() {
                field[index] += delta;
                return;
            }
            index -= field.len();
        }
        panic!("flat index out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::log_softmax;
    use crate::rng::child_rng;
    use crate::task_gen::{Vocabulary, TOK_ANSWER_OPEN};
    use approx::assert_abs_diff_eq;

    fn tiny_setup() -> (Vocabulary, MlpPolicy, Prompt) {
        let vocab = Vocabulary::from_pools(
            &[
                ("metals", &["iron", "zinc", "gold", "tin"] as &[&str]),
                ("gases", &["neon", "argon", "xenon", "helium"] as &[&str]),
            ],
            &["choose one:"],
            &["name one of the {}."],
        )
        .unwrap();
        let cfg = MlpConfig {
            vocab_size: vocab.size(),
            n_list_templates: 1,
            n_open_templates: 1,
            embed_dim: 6,
            hidden_dim: 8,
            pointer_hidden_dim: 5,
        };
        let policy = MlpPolicy::new(cfg, &mut child_rng(3, "init", 0));
        let cat = vocab.category("metals").unwrap();
        let prompt = Prompt {
            template_id: 0,
            category: cat.name.clone(),
            category_token: cat.token,
            items: cat.items.clone(),
            mode: PromptMode::ListSelection,
        };
        (vocab, policy, prompt)
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let (_, policy, prompt) = tiny_setup();
        let a = policy.forward_logits(&prompt, &[TOK_ANSWER_OPEN]);
        let b = policy.forward_logits(&prompt, &[TOK_ANSWER_OPEN]);
        assert_eq!(a, b);
        assert_eq!(a.len(), policy.vocab_size());
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pointer_bias_moves_exactly_the_listed_items() {
        let (_, mut policy, prompt) = tiny_setup();
        let before = policy.forward_logits(&prompt, &[TOK_ANSWER_OPEN]);
        policy.tensors.b3[2] += 5.0;
        let after = policy.forward_logits(&prompt, &[TOK_ANSWER_OPEN]);
        for v in 0..policy.vocab_size() {
            let delta = after[v] - before[v];
            if v == prompt.items[2] {
                assert_abs_diff_eq!(delta, 5.0, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(delta, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn open_prompts_ignore_the_pointer_head() {
        let (vocab, mut policy, _) = tiny_setup();
        let cat = vocab.category("gases").unwrap();
        let open = Prompt {
            template_id: 0,
            category: cat.name.clone(),
            category_token: cat.token,
            items: vec![],
            mode: PromptMode::OpenEnded,
        };
        let before = policy.forward_logits(&open, &[]);
        for v in policy.tensors.b3.iter_mut() {
            *v += 3.0;
        }
        let after = policy.forward_logits(&open, &[]);
        assert_eq!(before, after);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let (_, mut policy, prompt) = tiny_setup();
        let token = prompt.items[1];
        let prefix = [TOK_ANSWER_OPEN];
        let entries = [WeightedToken {
            prompt: &prompt,
            prefix: &prefix,
            token,
            weight: 0.7,
        }];
        let analytic = policy.grad_weighted_logprob(&entries).unwrap().flatten();
        let h = 1e-5;
        let objective = |p: &MlpPolicy| -> f64 {
            0.7 * log_softmax(&p.forward_logits(&prompt, &prefix))[token]
        };
        let n = policy.flat_len();
        assert_eq!(analytic.len(), n);
        let mut max_err: f64 = 0.0;
        for i in 0..n {
            policy.flat_add(i, h);
            let up = objective(&policy);
            policy.flat_add(i, -2.0 * h);
            let down = objective(&policy);
            policy.flat_add(i, h);
            let fd = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(1e-6);
            max_err = max_err.max((fd - analytic[i]).abs() / denom);
        }
        assert!(max_err < 1e-4, "max relative error {max_err}");
    }

    #[test]
    fn zero_weight_entries_contribute_nothing() {
        let (_, policy, prompt) = tiny_setup();
        let prefix = [TOK_ANSWER_OPEN];
        let entries = [WeightedToken {
            prompt: &prompt,
            prefix: &prefix,
            token: prompt.items[0],
            weight: 0.0,
        }];
        let grads = policy.grad_weighted_logprob(&entries).unwrap();
        assert_eq!(grads.l2_norm(), 0.0);
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let (_, policy, prompt) = tiny_setup();
        let prefix = [];
        let entries = [WeightedToken {
            prompt: &prompt,
            prefix: &prefix,
            token: TOK_ANSWER_OPEN,
            weight: f64::NAN,
        }];
        assert!(policy.grad_weighted_logprob(&entries).is_err());
    }
}
