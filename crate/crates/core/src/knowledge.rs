//! The expandable external knowledge set.
//!
//! Scripted policies are proportional controllers read off the observation
//! layout of the task they run on. They become densities by wrapping the
//! deterministic law in a tanh-squashed Gaussian with a fixed spread. Learned
//! actors from earlier tasks can join the set as frozen policies.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::approximators::{GaussianHeadOutput, Mlp};
use crate::envs::ObsLayout;
use crate::error::{check_len, Error, Result};
use crate::rng::uniform_symmetric;

/// Dimension of knowledge keys.
pub const KEY_DIM: usize = 4;
/// Spread of scripted policies in pre-squash action units.
pub const KNOWLEDGE_STD: f64 = 0.05;

/// Proportional gain and per-axis clamp of the scripted laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedGains {
    pub k_p: f64,
    /// Kept strictly below 1 so the squashed density is defined at the mean.
    pub bound: f64,
}

impl Default for ScriptedGains {
    fn default() -> Self {
        Self {
            k_p: 5.0,
            bound: 0.95,
        }
    }
}

/// Mean action and per-coordinate standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDist {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

type Vec3 = [f64; 3];

fn read3(obs: &[f64], at: usize) -> Vec3 {
    [obs[at], obs[at + 1], obs[at + 2]]
}

fn grasped(obs: &[f64], slot: Option<usize>) -> bool {
    slot.map(|i| obs[i] > 0.5).unwrap_or(false)
}

fn holder(layout: &ObsLayout, obs: &[f64]) -> Option<usize> {
    layout.arms.iter().position(|arm| grasped(obs, arm.grasp))
}

fn drive(mean: &mut [f64], arm: usize, from: Vec3, to: Vec3, gains: ScriptedGains) {
    for i in 0..3 {
        mean[3 * arm + i] = (gains.k_p * (to[i] - from[i])).clamp(-gains.bound, gains.bound);
    }
}

fn scripted_dist(mean: Vec<f64>) -> ActionDist {
    let std = vec![KNOWLEDGE_STD; mean.len()];
    ActionDist { mean, std }
}

fn arm_tasks_only(layout: &ObsLayout, action_dim: usize) -> bool {
    !layout.arms.is_empty() && action_dim == 3 * layout.arms.len()
}

/// Moves toward the object while it is free, otherwise toward the goal. In
/// bimanual tasks the holder (or the arm nearest a free object) moves and the
/// other arm stays put.
pub fn approach_policy(
    layout: &ObsLayout,
    obs: &[f64],
    action_dim: usize,
    gains: ScriptedGains,
) -> ActionDist {
    let mut mean = vec![0.0; action_dim];
    if !arm_tasks_only(layout, action_dim) {
        return scripted_dist(mean);
    }
    let ee = |arm: usize| read3(obs, layout.arms[arm].ee);
    match (holder(layout, obs), layout.object, layout.goal) {
        (Some(h), _, Some(goal)) => drive(&mut mean, h, ee(h), read3(obs, goal), gains),
        (None, Some(object), _) => {
            let object = read3(obs, object);
            let d2 = |arm: usize| {
                let e = ee(arm);
                (0..3).map(|i| (e[i] - object[i]) * (e[i] - object[i])).sum::<f64>()
            };
            let nearest = (1..layout.arms.len()).fold(0, |best, arm| {
                if d2(arm) < d2(best) {
                    arm
                } else {
                    best
                }
            });
            drive(&mut mean, nearest, ee(nearest), object, gains);
        }
        (None, None, Some(goal)) => drive(&mut mean, 0, ee(0), read3(obs, goal), gains),
        _ => {}
    }
    scripted_dist(mean)
}

/// Carries a held object to the goal; inactive while nothing is held.
pub fn transport_policy(
    layout: &ObsLayout,
    obs: &[f64],
    action_dim: usize,
    gains: ScriptedGains,
) -> ActionDist {
    let mut mean = vec![0.0; action_dim];
    if arm_tasks_only(layout, action_dim) {
        if let (Some(h), Some(goal)) = (holder(layout, obs), layout.goal) {
            drive(
                &mut mean,
                h,
                read3(obs, layout.arms[h].ee),
                read3(obs, goal),
                gains,
            );
        }
    }
    scripted_dist(mean)
}

/// Brings two arms together: the holder (or both arms when nothing is held)
/// moves to the midpoint, the receiving arm moves to the held object.
pub fn handover_policy(
    layout: &ObsLayout,
    obs: &[f64],
    action_dim: usize,
    gains: ScriptedGains,
) -> ActionDist {
    let mut mean = vec![0.0; action_dim];
    if arm_tasks_only(layout, action_dim) && layout.arms.len() == 2 {
        let e = [read3(obs, layout.arms[0].ee), read3(obs, layout.arms[1].ee)];
        let mid = [
            0.5 * (e[0][0] + e[1][0]),
            0.5 * (e[0][1] + e[1][1]),
            0.5 * (e[0][2] + e[1][2]),
        ];
        match (holder(layout, obs), layout.object) {
            (Some(h), Some(object)) => {
                let r = 1 - h;
                drive(&mut mean, h, e[h], mid, gains);
                drive(&mut mean, r, e[r], read3(obs, object), gains);
            }
            _ => {
                drive(&mut mean, 0, e[0], mid, gains);
                drive(&mut mean, 1, e[1], mid, gains);
            }
        }
    }
    scripted_dist(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnowledgeKind {
    ScriptedApproach,
    ScriptedTransport,
    ScriptedHandover,
    LearnedInnerActor,
}

impl KnowledgeKind {
    pub fn name(self) -> &'static str {
        match self {
            KnowledgeKind::ScriptedApproach => "ScriptedApproach",
            KnowledgeKind::ScriptedTransport => "ScriptedTransport",
            KnowledgeKind::ScriptedHandover => "ScriptedHandover",
            KnowledgeKind::LearnedInnerActor => "LearnedInnerActor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            KnowledgeKind::ScriptedApproach,
            KnowledgeKind::ScriptedTransport,
            KnowledgeKind::ScriptedHandover,
            KnowledgeKind::LearnedInnerActor,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Knowledge(format!("unknown knowledge kind `{s}`")))
    }
}

/// One external policy. Learned entries carry the frozen actor network whose
/// output is `[mean | log_std]` in pre-squash units.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgePolicy {
    pub id: String,
    pub kind: KnowledgeKind,
    pub gains: ScriptedGains,
    pub network: Option<Mlp>,
}

impl KnowledgePolicy {
    pub fn approach() -> Self {
        Self::scripted("approach", KnowledgeKind::ScriptedApproach)
    }

    pub fn transport() -> Self {
        Self::scripted("transport", KnowledgeKind::ScriptedTransport)
    }

    pub fn handover() -> Self {
        Self::scripted("handover", KnowledgeKind::ScriptedHandover)
    }

    fn scripted(id: &str, kind: KnowledgeKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            gains: ScriptedGains::default(),
            network: None,
        }
    }

    pub fn learned(id: impl Into<String>, network: Mlp) -> Result<Self> {
        if !network.spec.output_dim.is_multiple_of(2) {
            return Err(Error::Knowledge(
                "learned actor output must be [mean | log_std]".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            kind: KnowledgeKind::LearnedInnerActor,
            gains: ScriptedGains::default(),
            network: Some(network),
        })
    }

    /// Distribution in action units: the scripted law's mean, or `tanh` of a
    /// learned actor's pre-squash mean.
    pub fn act_dist(&self, layout: &ObsLayout, obs: &[f64], action_dim: usize) -> Result<ActionDist> {
        let g = self.gains;
        Ok(match self.kind {
            KnowledgeKind::ScriptedApproach => approach_policy(layout, obs, action_dim, g),
            KnowledgeKind::ScriptedTransport => transport_policy(layout, obs, action_dim, g),
            KnowledgeKind::ScriptedHandover => handover_policy(layout, obs, action_dim, g),
            KnowledgeKind::LearnedInnerActor => {
                let head = self.component(layout, obs, action_dim)?;
                ActionDist {
                    mean: head.mean.iter().map(|&m| libm::tanh(m)).collect(),
                    std: head.std(),
                }
            }
        })
    }

    /// Gaussian over pre-squash actions used inside the mixture.
    pub fn component(
        &self,
        layout: &ObsLayout,
        obs: &[f64],
        action_dim: usize,
    ) -> Result<GaussianHeadOutput> {
        match &self.network {
            Some(net) => {
                check_len("learned knowledge action", action_dim, net.spec.output_dim / 2)?;
                let raw = net.forward(obs)?;
                Ok(GaussianHeadOutput::from_network(&raw).0)
            }
            None => {
                let dist = self.act_dist(layout, obs, action_dim)?;
                let log_std = libm::log(KNOWLEDGE_STD);
                Ok(GaussianHeadOutput {
                    mean: dist.mean.iter().map(|&m| libm::atanh(m)).collect(),
                    log_std: vec![log_std; action_dim],
                })
            }
        }
    }
}

/// Learnable embedding identifying one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeKey {
    pub embedding: Vec<f64>,
    pub owner_policy_id: String,
}

impl KnowledgeKey {
    /// Uniform in ±1/√d_k, the same law as network weights.
    pub fn init<R: Rng + ?Sized>(owner: impl Into<String>, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(dim as f64);
        Self {
            embedding: (0..dim).map(|_| uniform_symmetric(rng, bound)).collect(),
            owner_policy_id: owner.into(),
        }
    }
}

/// Ordered external policies with their keys.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeSet {
    key_dim: usize,
    policies: Vec<KnowledgePolicy>,
    keys: Vec<KnowledgeKey>,
}

impl KnowledgeSet {
    pub fn empty(key_dim: usize) -> Self {
        Self {
            key_dim,
            policies: Vec::new(),
            keys: Vec::new(),
        }
    }

    /// The three scripted policies with fresh keys.
    pub fn scripted<R: Rng + ?Sized>(key_dim: usize, rng: &mut R) -> Result<Self> {
        Self::empty(key_dim)
            .add_knowledge(KnowledgePolicy::approach(), None, rng)?
            .add_knowledge(KnowledgePolicy::transport(), None, rng)?
            .add_knowledge(KnowledgePolicy::handover(), None, rng)
    }

    /// Returns a set with `policy` appended. A supplied key is kept as is;
    /// otherwise a fresh key is drawn.
    pub fn add_knowledge<R: Rng + ?Sized>(
        &self,
        policy: KnowledgePolicy,
        key: Option<Vec<f64>>,
        rng: &mut R,
    ) -> Result<Self> {
        if self.position(&policy.id).is_some() || policy.id == crate::policy::INNER_ID {
            return Err(Error::Knowledge(format!(
                "policy id `{}` is already registered",
                policy.id
            )));
        }
        let key = match key {
            Some(embedding) => {
                check_len("knowledge key", self.key_dim, embedding.len())?;
                if embedding.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Knowledge("knowledge key is not finite".into()));
                }
                KnowledgeKey {
                    embedding,
                    owner_policy_id: policy.id.clone(),
                }
            }
            None => KnowledgeKey::init(policy.id.clone(), self.key_dim, rng),
        };
        let mut next = self.clone();
        next.policies.push(policy);
        next.keys.push(key);
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn policies(&self) -> &[KnowledgePolicy] {
        &self.policies
    }

    pub fn keys(&self) -> &[KnowledgeKey] {
        &self.keys
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.policies.iter().position(|p| p.id == id)
    }
}
