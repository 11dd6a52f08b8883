//! Checkpoint container.
//!
//! ```text
//! SURGIRL-CHECKPOINT 1\n
//! {manifest JSON on one line}\n
//! <f64 little-endian blocks, in manifest order>
//! ```
//!
//! The manifest names every block with its length and carries the SHA-256 of
//! the concatenated block bytes. Everything numeric that training depends on
//! lives in blocks, so a load reproduces the saved state bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surgirl_core::approximators::{Activation, Mlp, MlpSpec, ParamVector};
use surgirl_core::envs::WorldState;
use surgirl_core::knowledge::{KnowledgeKind, KnowledgePolicy, KnowledgeSet, ScriptedGains};
use surgirl_core::learner::{Adam, IntervalStats, ReplayBuffer, Trainer, TrainerState, Transition};
use surgirl_core::policy::KianPolicy;
use surgirl_core::rng::{stream, RngState, Stream};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const MAGIC: &str = "SURGIRL-CHECKPOINT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: String,
}

impl NetworkSpec {
    fn of(spec: &MlpSpec) -> Self {
        Self {
            input_dim: spec.input_dim,
            hidden_dims: spec.hidden_dims.clone(),
            output_dim: spec.output_dim,
            activation: match spec.activation {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            }
            .to_string(),
        }
    }

    fn to_spec(&self) -> std::result::Result<MlpSpec, String> {
        let activation = match self.activation.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => return Err(format!("unknown activation `{other}`")),
        };
        Ok(MlpSpec::new(self.input_dim, &self.hidden_dims, self.output_dim).with_activation(activation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub kind: String,
    pub k_p: f64,
    pub bound: f64,
    /// Frozen actor of a learned entry; its parameters are block `knowledge/<id>`.
    pub network: Option<NetworkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngEntry {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngEntry {
    fn of(s: &RngState) -> Self {
        Self {
            seed: s.seed.iter().map(|b| format!("{b:02x}")).collect(),
            stream: s.stream,
            word_pos: s.word_pos.to_string(),
        }
    }

    fn to_state(&self) -> std::result::Result<RngState, String> {
        if self.seed.len() != 64 || !self.seed.is_ascii() {
            return Err("rng seed must be 64 hex digits".into());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| format!("rng seed: {e}"))?;
        }
        let word_pos = self
            .word_pos
            .parse()
            .map_err(|e| format!("rng word_pos: {e}"))?;
        Ok(RngState {
            seed,
            stream: self.stream,
            word_pos,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngSection {
    pub env: RngEntry,
    pub policy: RngEntry,
    pub learner: RngEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub capacity: usize,
    pub cursor: usize,
    pub len: usize,
    /// Stored transitions; zero when the buffer was left out.
    pub stored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub step: u64,
    /// The replay buffer is stored and training can continue exactly.
    pub resumable: bool,
    pub config: RunConfig,
    pub key_dim: usize,
    pub temperature: f64,
    /// Owner of each key in the `keys` block, inner actor first.
    pub key_owners: Vec<String>,
    pub knowledge: Vec<KnowledgeEntry>,
    pub query: NetworkSpec,
    pub inner: NetworkSpec,
    pub critic: NetworkSpec,
    pub alpha_mode: String,
    pub rng: RngSection,
    pub replay: ReplayEntry,
    pub blocks: Vec<BlockEntry>,
    /// SHA-256 of all block bytes, lowercase hex.
    pub hash: String,
}

/// Policy plus the full trainer state at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub policy: KianPolicy,
    pub state: TrainerState,
    pub resumable: bool,
}

/// A checkpoint file split into its manifest and named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub manifest: Manifest,
    pub blocks: Vec<(String, Vec<f64>)>,
}

impl RawCheckpoint {
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// SHA-256 of one block's bytes.
    pub fn block_hash(&self, name: &str) -> Option<String> {
        self.block(name).map(|v| {
            let mut h = Sha256::new();
            for x in v {
                h.update(x.to_le_bytes());
            }
            hex(&h.finalize())
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn blocks_hash(blocks: &[(String, Vec<f64>)]) -> String {
    let mut h = Sha256::new();
    for (_, v) in blocks {
        for x in v {
            h.update(x.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// SHA-256 of a whole file, used to reference checkpoints by content.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

const ACTOR_BLOCKS: [&str; 3] = ["inner", "query", "keys"];
const CRITIC_BLOCKS: [&str; 4] = ["q1", "q2", "target1", "target2"];

fn adam_block(a: &Adam) -> Vec<f64> {
    let mut v = vec![a.lr, a.beta1, a.beta2, a.eps, a.t as f64];
    v.extend_from_slice(&a.m);
    v.extend_from_slice(&a.v);
    v
}

fn adam_from(v: &[f64]) -> std::result::Result<Adam, String> {
    if v.len() < 5 || !(v.len() - 5).is_multiple_of(2) {
        return Err("optimizer block has the wrong length".into());
    }
    let n = (v.len() - 5) / 2;
    Ok(Adam {
        lr: v[0],
        beta1: v[1],
        beta2: v[2],
        eps: v[3],
        t: v[4] as u64,
        m: v[5..5 + n].to_vec(),
        v: v[5 + n..].to_vec(),
    })
}

fn knowledge_kind(kind: &str) -> std::result::Result<KnowledgeKind, String> {
    KnowledgeKind::parse(kind).map_err(|e| e.to_string())
}

impl Checkpoint {
    /// Captures a trainer built from `config`.
    pub fn from_trainer(config: &RunConfig, trainer: &Trainer<KianPolicy>, resumable: bool) -> Self {
        Self {
            config: config.clone(),
            policy: trainer.actor().clone(),
            state: trainer.export_state(),
            resumable,
        }
    }

    /// Rebuilds a trainer positioned exactly where this checkpoint was taken.
    pub fn into_trainer(self) -> Result<Trainer<KianPolicy>> {
        let resolved = self.config.resolve()?;
        let mut trainer = Trainer::new(resolved.spec, self.policy, resolved.learner, self.config.seed)?;
        trainer.restore_state(self.state)?;
        Ok(trainer)
    }

    fn to_raw(&self) -> RawCheckpoint {
        let p = &self.policy;
        let s = &self.state;
        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
        let keys: Vec<f64> = (0..p.components()).flat_map(|j| p.key(j).to_vec()).collect();
        blocks.push(("keys".into(), keys));
        blocks.push(("query".into(), p.query().params.to_vec()));
        blocks.push(("inner".into(), p.inner().params.to_vec()));
        let mut knowledge = Vec::new();
        for k in p.knowledge_policies() {
            if let Some(net) = &k.network {
                blocks.push((format!("knowledge/{}", k.id), net.params.to_vec()));
            }
            knowledge.push(KnowledgeEntry {
                id: k.id.clone(),
                kind: k.kind.name().to_string(),
                k_p: k.gains.k_p,
                bound: k.gains.bound,
                network: k.network.as_ref().map(|n| NetworkSpec::of(&n.spec)),
            });
        }
        for (name, params) in CRITIC_BLOCKS.iter().zip(&s.critics) {
            blocks.push((format!("critic/{name}"), params.clone()));
        }
        blocks.push(("entropy/log_alpha".into(), vec![s.log_alpha]));
        for (name, opt) in ACTOR_BLOCKS.iter().zip(&s.actor_opt) {
            blocks.push((format!("optim/actor/{name}"), adam_block(opt)));
        }
        for (name, opt) in CRITIC_BLOCKS.iter().zip(&s.critic_opt) {
            blocks.push((format!("optim/critic/{name}"), adam_block(opt)));
        }
        blocks.push(("optim/alpha".into(), adam_block(&s.alpha_opt)));
        blocks.push((
            "trainer/interval".into(),
            vec![
                s.interval.actor_loss_sum,
                s.interval.critic_loss_sum,
                s.interval.updates as f64,
            ],
        ));
        blocks.push(("env/state".into(), s.env_state.to_vec()));
        let stored = if self.resumable {
            let mut flat = Vec::new();
            for t in s.replay.transitions() {
                flat.extend_from_slice(&t.state);
                flat.extend_from_slice(&t.action);
                flat.push(t.reward);
                flat.extend_from_slice(&t.next_state);
                flat.push(t.done as u8 as f64);
            }
            blocks.push(("replay".into(), flat));
            s.replay.len()
        } else {
            0
        };
        let resolved = self
            .config
            .resolve()
            .expect("checkpoints are only built from validated configs");
        let critic_spec = MlpSpec::new(
            p.obs_dim() + p.action_dim(),
            &resolved.learner.critic_hidden,
            1,
        );
        let manifest = Manifest {
            version: VERSION,
            task: self.config.task.clone(),
            method: self.config.method.name().to_string(),
            seed: self.config.seed,
            step: s.step,
            resumable: self.resumable,
            config: self.config.clone(),
            key_dim: p.key_dim(),
            temperature: p.temperature(),
            key_owners: (0..p.components()).map(|j| p.key_owner(j)).collect(),
            knowledge,
            query: NetworkSpec::of(&p.query().spec),
            inner: NetworkSpec::of(&p.inner().spec),
            critic: NetworkSpec::of(&critic_spec),
            alpha_mode: match resolved.learner.alpha {
                surgirl_core::learner::AlphaMode::Fixed(_) => "fixed",
                surgirl_core::learner::AlphaMode::Auto { .. } => "auto",
            }
            .to_string(),
            rng: RngSection {
                env: RngEntry::of(&s.env_rng),
                policy: RngEntry::of(&s.policy_rng),
                learner: RngEntry::of(&s.learner_rng),
            },
            replay: ReplayEntry {
                capacity: s.replay.capacity(),
                cursor: s.replay.cursor(),
                len: s.replay.len(),
                stored,
            },
            blocks: blocks
                .iter()
                .map(|(name, v)| BlockEntry {
                    name: name.clone(),
                    len: v.len(),
                })
                .collect(),
            hash: blocks_hash(&blocks),
        };
        RawCheckpoint { manifest, blocks }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.to_raw())
    }

    /// Writes through a temporary file so a failed write never leaves a
    /// partial checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<String> {
        let raw = self.to_raw();
        let bytes = encode(&raw);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| HarnessError::io(path, e))?;
        Ok(raw.manifest.hash)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = read_raw(path)?;
        Self::from_raw(&raw).map_err(|reason| HarnessError::Malformed {
            path: path.to_path_buf(),
            reason,
        })
    }

    fn from_raw(raw: &RawCheckpoint) -> std::result::Result<Self, String> {
        let m = &raw.manifest;
        let config = m.config.clone();
        let resolved = config.resolve().map_err(|e| e.to_string())?;
        let block = |name: &str| {
            raw.block(name)
                .map(|v| v.to_vec())
                .ok_or_else(|| format!("missing block `{name}`"))
        };
        let net = |spec: &NetworkSpec, params: Vec<f64>| {
            Mlp::new(spec.to_spec()?, ParamVector(params)).map_err(|e| e.to_string())
        };
        let keys = block("keys")?;
        let d = m.key_dim;
        if d == 0 || keys.len() != d * (m.knowledge.len() + 1) {
            return Err("keys block does not match the knowledge manifest".into());
        }
        let mut set = KnowledgeSet::empty(d);
        // every key is supplied explicitly, so the generator is never drawn from
        let mut unused = stream(0, Stream::InitKnowledgeKeys);
        for (j, k) in m.knowledge.iter().enumerate() {
            let kind = knowledge_kind(&k.kind)?;
            let gains = ScriptedGains {
                k_p: k.k_p,
                bound: k.bound,
            };
            let policy = match (&k.network, kind) {
                (Some(spec), KnowledgeKind::LearnedInnerActor) => {
                    let network = net(spec, block(&format!("knowledge/{}", k.id))?)?;
                    let mut p = KnowledgePolicy::learned(k.id.clone(), network).map_err(|e| e.to_string())?;
                    p.gains = gains;
                    p
                }
                (None, KnowledgeKind::LearnedInnerActor) => {
                    return Err(format!("learned knowledge `{}` has no network", k.id));
                }
                (Some(_), _) => return Err(format!("scripted knowledge `{}` has a network", k.id)),
                (None, kind) => KnowledgePolicy {
                    id: k.id.clone(),
                    kind,
                    gains,
                    network: None,
                },
            };
            let key = keys[(j + 1) * d..(j + 2) * d].to_vec();
            set = set
                .add_knowledge(policy, Some(key), &mut unused)
                .map_err(|e| e.to_string())?;
        }
        let policy = KianPolicy::from_parts(
            &resolved.spec,
            set,
            keys[..d].to_vec(),
            net(&m.query, block("query")?)?,
            net(&m.inner, block("inner")?)?,
            m.temperature,
        )
        .map_err(|e| e.to_string())?;
        let critics = [
            block("critic/q1")?,
            block("critic/q2")?,
            block("critic/target1")?,
            block("critic/target2")?,
        ];
        let log_alpha = block("entropy/log_alpha")?;
        if log_alpha.len() != 1 {
            return Err("entropy/log_alpha must hold one value".into());
        }
        let mut actor_opt = Vec::new();
        for name in ACTOR_BLOCKS {
            actor_opt.push(adam_from(&block(&format!("optim/actor/{name}"))?)?);
        }
        let critic_opt = [
            adam_from(&block("optim/critic/q1")?)?,
            adam_from(&block("optim/critic/q2")?)?,
        ];
        let interval = block("trainer/interval")?;
        if interval.len() != 3 {
            return Err("trainer/interval must hold three values".into());
        }
        let replay = if m.resumable {
            let flat = block("replay")?;
            let (o, a) = (policy.obs_dim(), policy.action_dim());
            let width = 2 * o + a + 2;
            if flat.len() != width * m.replay.stored || m.replay.stored != m.replay.len {
                return Err("replay block does not match its manifest entry".into());
            }
            let data = flat
                .chunks_exact(width)
                .map(|c| Transition {
                    state: c[..o].to_vec(),
                    action: c[o..o + a].to_vec(),
                    reward: c[o + a],
                    next_state: c[o + a + 1..2 * o + a + 1].to_vec(),
                    done: c[2 * o + a + 1] != 0.0,
                })
                .collect();
            ReplayBuffer::from_parts(m.replay.capacity, m.replay.cursor, data)
        } else {
            ReplayBuffer::new(m.replay.capacity)
        }
        .map_err(|e| e.to_string())?;
        let state = TrainerState {
            step: m.step,
            critics,
            critic_opt,
            actor_opt,
            alpha_opt: adam_from(&block("optim/alpha")?)?,
            log_alpha: log_alpha[0],
            replay,
            env_state: WorldState::from_slice(&block("env/state")?).map_err(|e| e.to_string())?,
            env_rng: m.rng.env.to_state()?,
            policy_rng: m.rng.policy.to_state()?,
            learner_rng: m.rng.learner.to_state()?,
            interval: IntervalStats {
                actor_loss_sum: interval[0],
                critic_loss_sum: interval[1],
                updates: interval[2] as u64,
            },
        };
        Ok(Self {
            config,
            policy,
            state,
            resumable: m.resumable,
        })
    }
}

fn encode(raw: &RawCheckpoint) -> Vec<u8> {
    let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
    out.extend_from_slice(
        serde_json::to_string(&raw.manifest)
            .expect("manifests always serialize")
            .as_bytes(),
    );
    out.push(b'\n');
    for (_, v) in &raw.blocks {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Reads and verifies a checkpoint without rebuilding the policy.
pub fn read_raw(path: &Path) -> Result<RawCheckpoint> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes, path)
}

fn decode(bytes: &[u8], path: &Path) -> Result<RawCheckpoint> {
    let path: PathBuf = path.to_path_buf();
    let truncated = |reason: &str| HarnessError::Truncated {
        path: path.clone(),
        reason: reason.to_string(),
    };
    let malformed = |reason: String| HarnessError::Malformed {
        path: path.clone(),
        reason,
    };
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| truncated("no header line"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| malformed("header is not text".into()))?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| malformed(format!("not a checkpoint (header `{header}`)")))?;
    if version != VERSION.to_string() {
        return Err(HarnessError::VersionMismatch {
            path,
            found: version.to_string(),
            expected: VERSION,
        });
    }
    let rest = &bytes[header_end + 1..];
    let manifest_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| truncated("manifest line is incomplete"))?;
    let manifest: Manifest = serde_json::from_slice(&rest[..manifest_end])
        .map_err(|e| malformed(format!("manifest: {e}")))?;
    if manifest.version != VERSION {
        return Err(HarnessError::VersionMismatch {
            path,
            found: manifest.version.to_string(),
            expected: VERSION,
        });
    }
    let body = &rest[manifest_end + 1..];
    let declared: usize = manifest.blocks.iter().map(|b| b.len * 8).sum();
    if body.len() < declared {
        return Err(truncated(&format!(
            "{} of {declared} parameter bytes present",
            body.len()
        )));
    }
    if body.len() > declared {
        return Err(malformed(format!(
            "{} bytes after the last block",
            body.len() - declared
        )));
    }
    let mut blocks = Vec::with_capacity(manifest.blocks.len());
    let mut offset = 0;
    for b in &manifest.blocks {
        let v = body[offset..offset + 8 * b.len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks are 8 bytes")))
            .collect();
        offset += 8 * b.len;
        blocks.push((b.name.clone(), v));
    }
    let actual = blocks_hash(&blocks);
    if actual != manifest.hash {
        return Err(HarnessError::HashMismatch {
            path,
            expected: manifest.hash,
            actual,
        });
    }
    Ok(RawCheckpoint { manifest, blocks })
}

/// Manifest as indented JSON followed by one hash line per block.
pub fn describe(raw: &RawCheckpoint) -> String {
    let mut out = serde_json::to_string_pretty(&raw.manifest).expect("manifests always serialize");
    out.push('\n');
    for (name, v) in &raw.blocks {
        out.push_str(&format!(
            "{name} len={} sha256={}\n",
            v.len(),
            raw.block_hash(name).expect("block exists")
        ));
    }
    out
}
