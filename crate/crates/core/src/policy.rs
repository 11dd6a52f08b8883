//! Attention-based knowledge mixture policy with maximum-coverage exploration.
//!
//! A query network maps the state to a vector that is compared with one
//! learnable key per component (the inner actor first, then every knowledge
//! policy). The softmax of the scaled dot products gives mixture weights; a
//! Gumbel-perturbed argmax selects the component that produces the action.
//! Gradients reach the selection through the straight-through estimator: the
//! forward pass uses the hard one-hot, the backward pass the tempered softmax.
//!
//! All components are Gaussians over pre-squash actions sharing one tanh
//! squash, so the mixture density of an action `a = tanh(x)` is
//! `Σ_j w_j N(x; μ_j, σ_j)` times the common squash Jacobian.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::approximators::mlp::forward_traced;
use crate::approximators::{
    gaussian::{gaussian_log_density_partials, squash_correction_partial},
    gaussian_log_density, squash_correction, GaussianHeadOutput, Mlp, MlpSpec, MlpTrace,
    ParamVector,
};
use crate::envs::{ObsLayout, TaskSpec};
use crate::error::{check_len, Error, Result};
use crate::knowledge::{KnowledgeKey, KnowledgePolicy, KnowledgeSet};
use crate::rng::{fill_standard_normal, standard_gumbel, stream, Stream};

/// Owner id of the inner actor's key.
pub const INNER_ID: &str = "inner";

/// Probability vector over `[inner, g_1, ..., g_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub w: Vec<f64>,
    pub raw_scores: Vec<f64>,
}

/// Output of the query network.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    pub u: Vec<f64>,
}

/// `β_t = exp(-d_e·t) + c_e`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub d_e: f64,
    pub c_e: f64,
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.d_e >= 0.0 && self.c_e >= 0.0 && self.d_e.is_finite() && self.c_e.is_finite() {
            Ok(())
        } else {
            Err(Error::Config("beta schedule needs finite d_e >= 0 and c_e >= 0".into()))
        }
    }
}

pub fn beta_at(schedule: &BetaSchedule, t: u64) -> f64 {
    libm::exp(-schedule.d_e * t as f64) + schedule.c_e
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = values.iter().map(|&v| libm::exp(v - m)).sum();
    m + libm::log(s)
}

fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|&s| s - lse).collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    log_softmax(scores).into_iter().map(libm::exp).collect()
}

/// Scaled dot-product weights `softmax(u·k_j / √d_k)`.
pub fn attention_weights(u: &QueryOutput, keys: &[&[f64]]) -> Result<MixtureWeights> {
    if keys.is_empty() {
        return Err(Error::Config("attention needs at least one key".into()));
    }
    let scale = libm::sqrt(u.u.len() as f64);
    let mut raw_scores = Vec::with_capacity(keys.len());
    for k in keys {
        check_len("knowledge key", u.u.len(), k.len())?;
        raw_scores.push(u.u.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<f64>() / scale);
    }
    Ok(MixtureWeights {
        w: softmax(&raw_scores),
        raw_scores,
    })
}

/// `-Σ w log w` with `0·log 0 = 0`.
pub fn categorical_entropy(w: &MixtureWeights) -> f64 {
    entropy_of(&w.w)
}

fn entropy_of(w: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in w {
        if p > 0.0 {
            h -= p * libm::log(p);
        }
    }
    h
}

/// Result of one straight-through Gumbel-softmax draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeSample {
    pub index: usize,
    /// Hard one-hot used in the forward pass.
    pub one_hot: Vec<f64>,
    /// Tempered softmax of the perturbed log-weights, used for gradients.
    pub soft: Vec<f64>,
}

fn select(log_w: &[f64], w: &[f64], gumbel: &[f64], temperature: f64) -> (usize, Vec<f64>) {
    let perturbed: Vec<f64> = log_w.iter().zip(gumbel).map(|(l, g)| l + g).collect();
    let index = match w.iter().position(|&p| p == 1.0) {
        Some(certain) => certain,
        None => perturbed
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0,
    };
    let tempered: Vec<f64> = perturbed.iter().map(|v| v / temperature).collect();
    (index, softmax(&tempered))
}

/// Draws a component index from `w` by Gumbel-perturbed argmax.
pub fn knowledge_sample<R: Rng + ?Sized>(
    w: &MixtureWeights,
    temperature: f64,
    rng: &mut R,
) -> Result<KnowledgeSample> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Config("gumbel temperature must be positive".into()));
    }
    let log_w: Vec<f64> = w.w.iter().map(|&p| libm::log(p)).collect();
    let gumbel: Vec<f64> = if w.w.len() == 1 {
        vec![0.0]
    } else {
        (0..w.w.len()).map(|_| standard_gumbel(rng)).collect()
    };
    let (index, soft) = select(&log_w, &w.w, &gumbel, temperature);
    let mut one_hot = vec![0.0; w.w.len()];
    one_hot[index] = 1.0;
    Ok(KnowledgeSample {
        index,
        one_hot,
        soft,
    })
}

/// What [`KianPolicy::act`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDiagnostics {
    pub weights: MixtureWeights,
    pub selected_index: usize,
    pub component_mean: Vec<f64>,
    pub component_std: Vec<f64>,
    pub log_prob: f64,
}

/// Network sizes and sampling temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct KianConfig {
    pub inner_hidden: Vec<usize>,
    pub query_hidden: Vec<usize>,
    pub key_dim: usize,
    pub temperature: f64,
}

impl Default for KianConfig {
    fn default() -> Self {
        Self {
            inner_hidden: vec![512, 512, 512],
            query_hidden: vec![64, 64, 64],
            key_dim: crate::knowledge::KEY_DIM,
            temperature: 1.0,
        }
    }
}

/// Pre-drawn randomness of one policy sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNoise {
    /// One standard-normal vector per component, inner first.
    pub normals: Vec<Vec<f64>>,
    /// One Gumbel variate per component; empty for a single component.
    pub gumbel: Vec<f64>,
}

impl PolicyNoise {
    /// Draw order: inner normals, knowledge normals, then Gumbel variates.
    pub fn draw<R: Rng + ?Sized>(components: usize, action_dim: usize, rng: &mut R) -> Self {
        let normals = (0..components)
            .map(|_| {
                let mut v = vec![0.0; action_dim];
                fill_standard_normal(rng, &mut v);
                v
            })
            .collect();
        let gumbel = if components > 1 {
            (0..components).map(|_| standard_gumbel(rng)).collect()
        } else {
            Vec::new()
        };
        Self { normals, gumbel }
    }
}

/// Everything the reverse pass needs from one sampled action.
#[derive(Debug, Clone)]
pub struct KianTrace {
    query_trace: MlpTrace,
    inner_trace: MlpTrace,
    inner_clamped: Vec<bool>,
    u: Vec<f64>,
    pub weights: Vec<f64>,
    log_w: Vec<f64>,
    soft: Vec<f64>,
    pub selected: usize,
    heads: Vec<GaussianHeadOutput>,
    noise: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    x: Vec<f64>,
    pub action: Vec<f64>,
    responsibilities: Vec<f64>,
    pub log_prob: f64,
    pub weight_entropy: f64,
}

impl KianTrace {
    /// Tempered softmax behind the straight-through selection.
    pub fn soft(&self) -> &[f64] {
        &self.soft
    }
}

/// Mixture policy over the inner actor and a knowledge set.
#[derive(Debug, Clone, PartialEq)]
pub struct KianPolicy {
    layout: ObsLayout,
    obs_dim: usize,
    action_dim: usize,
    key_dim: usize,
    /// Frozen knowledge policies; their keys live in `keys`.
    knowledge: Vec<KnowledgePolicy>,
    /// `[inner, g_1, ..., g_n]` keys, flattened.
    keys: ParamVector,
    query: Mlp,
    inner: Mlp,
    temperature: f64,
}

impl KianPolicy {
    /// Fresh policy for `task`: the inner actor, query and inner key are drawn
    /// from their own init streams of `seed`; knowledge keys come from `knowledge`.
    pub fn new(task: &TaskSpec, knowledge: KnowledgeSet, config: &KianConfig, seed: u64) -> Result<Self> {
        let inner = Mlp::init(
            MlpSpec::new(task.obs_dim, &config.inner_hidden, 2 * task.action_dim),
            &mut stream(seed, Stream::InitInner),
        )?;
        let query = Mlp::init(
            MlpSpec::new(task.obs_dim, &config.query_hidden, config.key_dim),
            &mut stream(seed, Stream::InitQuery),
        )?;
        let inner_key = KnowledgeKey::init(INNER_ID, config.key_dim, &mut stream(seed, Stream::InitKeys));
        Self::from_parts(task, knowledge, inner_key.embedding, query, inner, config.temperature)
    }

    pub fn from_parts(
        task: &TaskSpec,
        knowledge: KnowledgeSet,
        inner_key: Vec<f64>,
        query: Mlp,
        inner: Mlp,
        temperature: f64,
    ) -> Result<Self> {
        let key_dim = knowledge.key_dim();
        check_len("inner key", key_dim, inner_key.len())?;
        check_len("query input", task.obs_dim, query.spec.input_dim)?;
        check_len("query output", key_dim, query.spec.output_dim)?;
        check_len("inner actor input", task.obs_dim, inner.spec.input_dim)?;
        check_len("inner actor output", 2 * task.action_dim, inner.spec.output_dim)?;
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::Config("gumbel temperature must be positive".into()));
        }
        let mut keys = inner_key;
        for k in knowledge.keys() {
            keys.extend_from_slice(&k.embedding);
        }
        Ok(Self {
            layout: task.layout(),
            obs_dim: task.obs_dim,
            action_dim: task.action_dim,
            key_dim,
            knowledge: knowledge.policies().to_vec(),
            keys: ParamVector(keys),
            query,
            inner,
            temperature,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Number of mixture components, `n + 1`.
    pub fn components(&self) -> usize {
        self.knowledge.len() + 1
    }

    /// Knowledge policies in component order (component `j` is entry `j - 1`).
    pub fn knowledge_policies(&self) -> &[KnowledgePolicy] {
        &self.knowledge
    }

    pub fn query(&self) -> &Mlp {
        &self.query
    }

    pub fn inner(&self) -> &Mlp {
        &self.inner
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    /// Key of component `j` (0 is the inner actor).
    pub fn key(&self, j: usize) -> &[f64] {
        let d = self.key_dim();
        &self.keys[j * d..(j + 1) * d]
    }

    pub fn key_owner(&self, j: usize) -> String {
        if j == 0 {
            String::from(INNER_ID)
        } else {
            self.knowledge[j - 1].id.clone()
        }
    }

    /// Current keys paired with their owners, inner first.
    pub fn current_keys(&self) -> Vec<KnowledgeKey> {
        (0..self.components())
            .map(|j| KnowledgeKey {
                embedding: self.key(j).to_vec(),
                owner_policy_id: self.key_owner(j),
            })
            .collect()
    }

    /// The knowledge set carrying the keys as trained so far.
    pub fn knowledge_with_current_keys(&self) -> Result<KnowledgeSet> {
        let mut set = KnowledgeSet::empty(self.key_dim());
        // every key is supplied, so the generator is never drawn from
        let mut unused = stream(0, Stream::InitKnowledgeKeys);
        for (j, policy) in self.knowledge.iter().enumerate() {
            set = set.add_knowledge(policy.clone(), Some(self.key(j + 1).to_vec()), &mut unused)?;
        }
        Ok(set)
    }

    /// Trainable parameter blocks: inner actor, query, keys.
    pub fn param_blocks(&self) -> [&[f64]; 3] {
        [&self.inner.params, &self.query.params, &self.keys]
    }

    pub fn param_blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.inner.params, &mut self.query.params, &mut self.keys]
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        check_len("observation", self.obs_dim, obs.len())
    }

    fn scores(&self, u: &[f64]) -> Vec<f64> {
        let scale = libm::sqrt(self.key_dim() as f64);
        (0..self.components())
            .map(|j| u.iter().zip(self.key(j)).map(|(a, b)| a * b).sum::<f64>() / scale)
            .collect()
    }

    pub fn query_output(&self, obs: &[f64]) -> Result<QueryOutput> {
        self.check_obs(obs)?;
        Ok(QueryOutput {
            u: self.query.forward(obs)?,
        })
    }

    pub fn weights(&self, obs: &[f64]) -> Result<MixtureWeights> {
        let u = self.query_output(obs)?;
        let keys: Vec<&[f64]> = (0..self.components()).map(|j| self.key(j)).collect();
        attention_weights(&u, &keys)
    }

    fn heads(&self, obs: &[f64]) -> Result<(MlpTrace, Vec<bool>, Vec<GaussianHeadOutput>)> {
        let inner_trace = self.inner.forward_traced(obs)?;
        let (inner_head, clamped) = GaussianHeadOutput::from_network(inner_trace.output());
        let mut heads = Vec::with_capacity(self.components());
        heads.push(inner_head);
        for policy in &self.knowledge {
            heads.push(policy.component(&self.layout, obs, self.action_dim)?);
        }
        Ok((inner_trace, clamped, heads))
    }

    /// Samples an action, drawing noise from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<KianTrace> {
        let noise = PolicyNoise::draw(self.components(), self.action_dim, rng);
        self.sample_with_noise(obs, &noise, None)
    }

    /// Deterministic sample given pre-drawn noise. `anchor` replaces the
    /// stop-gradient copy of the soft selection in the straight-through
    /// estimator; leaving it `None` gives the usual estimator. Fixing it lets
    /// finite differences see the same surrogate the gradient describes.
    pub fn sample_with_noise(
        &self,
        obs: &[f64],
        noise: &PolicyNoise,
        anchor: Option<&[f64]>,
    ) -> Result<KianTrace> {
        self.check_obs(obs)?;
        let m = self.components();
        check_len("component noise", m, noise.normals.len())?;
        let query_trace = forward_traced(&self.query.spec, &self.query.params, obs)?;
        let u = query_trace.output().to_vec();
        let scores = self.scores(&u);
        let log_w = log_softmax(&scores);
        let weights: Vec<f64> = log_w.iter().map(|&l| libm::exp(l)).collect();

        let (inner_trace, inner_clamped, heads) = self.heads(obs)?;
        let mut pre = Vec::with_capacity(m);
        for (head, eps) in heads.iter().zip(&noise.normals) {
            check_len("gaussian noise", self.action_dim, eps.len())?;
            pre.push(
                head.mean
                    .iter()
                    .zip(&head.log_std)
                    .zip(eps)
                    .map(|((&mu, &ls), &e)| mu + libm::exp(ls) * e)
                    .collect::<Vec<f64>>(),
            );
        }

        let (selected, soft) = if m == 1 {
            (0, vec![1.0])
        } else {
            check_len("gumbel noise", m, noise.gumbel.len())?;
            select(&log_w, &weights, &noise.gumbel, self.temperature)
        };
        let mut x = pre[selected].clone();
        if m > 1 {
            let anchor = anchor.unwrap_or(&soft);
            check_len("selection anchor", m, anchor.len())?;
            for (j, p) in pre.iter().enumerate() {
                let delta = soft[j] - anchor[j];
                for (xd, pd) in x.iter_mut().zip(p) {
                    *xd += delta * pd;
                }
            }
        }
        let action: Vec<f64> = x.iter().map(|&v| libm::tanh(v)).collect();

        let joint: Vec<f64> = heads
            .iter()
            .zip(&log_w)
            .map(|(h, &lw)| lw + gaussian_log_density(&x, &h.mean, &h.log_std))
            .collect();
        let lse = log_sum_exp(&joint);
        let responsibilities = joint.iter().map(|&v| libm::exp(v - lse)).collect();
        let log_prob = lse - squash_correction(&x);
        if !log_prob.is_finite() {
            return Err(Error::NonFinite {
                what: "mixture log-probability",
                index: selected,
            });
        }
        let weight_entropy = entropy_of(&weights);
        Ok(KianTrace {
            query_trace,
            inner_trace,
            inner_clamped,
            u,
            weights,
            log_w,
            soft,
            selected,
            heads,
            noise: noise.normals.clone(),
            pre,
            x,
            action,
            responsibilities,
            log_prob,
            weight_entropy,
        })
    }

    /// Accumulates `d_log_prob·∇log π + d_action·∇a + d_entropy·∇H(w)` for one
    /// sample into the gradient blocks `[inner, query, keys]`.
    pub fn accumulate_grads(
        &self,
        t: &KianTrace,
        d_log_prob: f64,
        d_action: &[f64],
        d_entropy: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<()> {
        check_len("action gradient", self.action_dim, d_action.len())?;
        let m = self.components();
        let d = self.action_dim;
        let gl = d_log_prob;
        let mut g_soft = vec![0.0; m];
        let mut inner_up = vec![0.0; 2 * d];
        for k in 0..d {
            let a = t.action[k];
            let mut g_x = d_action[k] * (1.0 - a * a);
            let mut inner_partials = (0.0, 0.0);
            for (j, head) in t.heads.iter().enumerate() {
                let (gx, gm, gls) =
                    gaussian_log_density_partials(t.x[k], head.mean[k], head.log_std[k]);
                let scale = gl * t.responsibilities[j];
                g_x += scale * gx;
                if j == 0 {
                    inner_partials = (scale * gm, scale * gls);
                }
            }
            g_x -= gl * squash_correction_partial(a);
            if m > 1 {
                for (j, p) in t.pre.iter().enumerate() {
                    g_soft[j] += g_x * p[k];
                }
            }
            let g_pre = if t.selected == 0 { g_x } else { 0.0 };
            let head = &t.heads[0];
            inner_up[k] = inner_partials.0 + g_pre;
            inner_up[d + k] = if t.inner_clamped[k] {
                0.0
            } else {
                inner_partials.1 + g_pre * (libm::exp(head.log_std[k]) * t.noise[0][k])
            };
        }
        self.inner
            .backward_into(&t.inner_trace, &inner_up, &mut grads[0])?;

        if m == 1 {
            return Ok(());
        }
        // d/dz through log w (from log π), H(w) and the soft selection
        let g_logw: Vec<f64> = t.responsibilities.iter().map(|r| gl * r).collect();
        let sum_logw: f64 = g_logw.iter().sum();
        let h = t.weight_entropy;
        let soft_dot: f64 = t.soft.iter().zip(&g_soft).map(|(y, g)| y * g).sum();
        let mut g_z = vec![0.0; m];
        for j in 0..m {
            let w = t.weights[j];
            let entropy_term = if w > 0.0 { -w * (t.log_w[j] + h) } else { 0.0 };
            g_z[j] = g_logw[j] - w * sum_logw
                + d_entropy * entropy_term
                + t.soft[j] * (g_soft[j] - soft_dot) / self.temperature;
        }
        let kd = self.key_dim();
        let scale = libm::sqrt(kd as f64);
        let mut g_u = vec![0.0; kd];
        for (j, &gz) in g_z.iter().enumerate() {
            let key = self.key(j);
            for i in 0..kd {
                g_u[i] += gz * key[i] / scale;
                grads[2][j * kd + i] += gz * t.u[i] / scale;
            }
        }
        self.query
            .backward_into(&t.query_trace, &g_u, &mut grads[1])?;
        Ok(())
    }

    /// Samples an action and reports the mixture diagnostics.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, ActionDiagnostics)> {
        let t = self.sample(obs, rng)?;
        let head = &t.heads[t.selected];
        let diagnostics = ActionDiagnostics {
            weights: MixtureWeights {
                w: t.weights.clone(),
                raw_scores: self.scores(&t.u),
            },
            selected_index: t.selected,
            component_mean: head.mean.iter().map(|&m| libm::tanh(m)).collect(),
            component_std: head.std(),
            log_prob: t.log_prob,
        };
        Ok((t.action, diagnostics))
    }

    /// Deterministic action: the mean of the highest-weight component.
    pub fn greedy_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(obs)?;
        let best = w
            .w
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        let head = if best == 0 {
            GaussianHeadOutput::from_network(&self.inner.forward(obs)?).0
        } else {
            self.knowledge[best - 1].component(&self.layout, obs, self.action_dim)?
        };
        Ok(head.mean.iter().map(|&m| libm::tanh(m)).collect())
    }

    /// `log Σ_j w_j p_j(action | obs)` for an action inside the open cube.
    pub fn mixture_log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        check_len("action", self.action_dim, action.len())?;
        if let Some((index, &value)) = action
            .iter()
            .enumerate()
            .find(|(_, a)| a.is_nan() || a.abs() >= 1.0)
        {
            return Err(Error::Density { index, value });
        }
        let x: Vec<f64> = action.iter().map(|&a| libm::atanh(a)).collect();
        let w = self.weights(obs)?;
        let (_, _, heads) = self.heads(obs)?;
        let joint: Vec<f64> = heads
            .iter()
            .zip(&w.w)
            .map(|(h, &wj)| libm::log(wj) + gaussian_log_density(&x, &h.mean, &h.log_std))
            .collect();
        Ok(log_sum_exp(&joint) - squash_correction(&x))
    }

    pub fn weight_entropy(&self, obs: &[f64]) -> Result<f64> {
        Ok(categorical_entropy(&self.weights(obs)?))
    }
}
