//! Transfer between tasks.
//!
//! Three pipelines reuse increasingly large parts of a trained mixture policy:
//! the knowledge keys only, keys plus the query network, or everything
//! including the inner actor. Keys are matched by owner id, so a subset can be
//! carried over regardless of position. A trained inner actor can also join the
//! next task's knowledge set as a frozen policy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::envs::{TaskId, TaskSpec};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeKey, KnowledgePolicy, KnowledgeSet};
use crate::policy::{KianConfig, KianPolicy, INNER_ID};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    KeysOnly,
    KeysAndQuery,
    All,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::KeysOnly => "KeysOnly",
            Pipeline::KeysAndQuery => "KeysAndQuery",
            Pipeline::All => "All",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "keysonly" | "keys" => Ok(Pipeline::KeysOnly),
            "keysandquery" | "keys+query" => Ok(Pipeline::KeysAndQuery),
            "all" => Ok(Pipeline::All),
            _ => Err(Error::Config(format!("unknown pipeline `{s}`"))),
        }
    }

    pub fn copies_query(self) -> bool {
        matches!(self, Pipeline::KeysAndQuery | Pipeline::All)
    }

    pub fn copies_inner(self) -> bool {
        self == Pipeline::All
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub pipeline: Pipeline,
    /// Owner ids of the source keys to copy; `inner` names the inner actor's key.
    pub key_selection: Vec<String>,
    /// Add the source inner actor to the target's knowledge set.
    pub expand_with_inner: bool,
}

impl TransferPlan {
    /// Copies every key of `source`.
    pub fn all_keys(pipeline: Pipeline, source: &KianPolicy) -> Self {
        Self {
            pipeline,
            key_selection: (0..source.components()).map(|j| source.key_owner(j)).collect(),
            expand_with_inner: false,
        }
    }

    pub fn validate(&self, source_task: &TaskSpec, source: &KianPolicy, target: &TaskSpec) -> Result<()> {
        let fail = |component: &'static str, reason: String| {
            Err(Error::Transfer {
                component,
                reason,
            })
        };
        if self.key_selection.is_empty() {
            return fail("keys", "key selection is empty".into());
        }
        let owners: Vec<String> = (0..source.components()).map(|j| source.key_owner(j)).collect();
        for (i, id) in self.key_selection.iter().enumerate() {
            if !owners.contains(id) {
                return fail("keys", format!("source has no key owned by `{id}`"));
            }
            if self.key_selection[..i].contains(id) {
                return fail("keys", format!("`{id}` selected twice"));
            }
        }
        if self.pipeline.copies_query() && source_task.obs_dim != target.obs_dim {
            return fail(
                "query",
                format!(
                    "{} observations have {} dimensions, {} has {}",
                    source_task.task_id, source_task.obs_dim, target.task_id, target.obs_dim
                ),
            );
        }
        let inner_fits = source_task.obs_dim == target.obs_dim && source_task.action_dim == target.action_dim;
        if self.pipeline.copies_inner() && !inner_fits {
            return fail(
                "inner actor",
                format!(
                    "{} maps {} -> {}, {} needs {} -> {}",
                    source_task.task_id,
                    source_task.obs_dim,
                    source_task.action_dim,
                    target.task_id,
                    target.obs_dim,
                    target.action_dim
                ),
            );
        }
        if self.expand_with_inner && !inner_fits {
            return fail(
                "expanded inner actor",
                format!("{} actor does not fit {}", source_task.task_id, target.task_id),
            );
        }
        Ok(())
    }
}

/// Id under which a task's trained inner actor joins later knowledge sets.
pub fn learned_policy_id(task: TaskId) -> String {
    format!("{}-inner", task.name())
}

/// Appends the trained inner actor of `source` as a frozen knowledge policy
/// keyed by its trained inner key.
pub fn expand_knowledge(
    set: &KnowledgeSet,
    source_task: &TaskSpec,
    source: &KianPolicy,
    target: &TaskSpec,
) -> Result<KnowledgeSet> {
    if source_task.action_dim != target.action_dim || source_task.obs_dim != target.obs_dim {
        return Err(Error::Transfer {
            component: "expanded inner actor",
            reason: format!(
                "{} actor maps {} -> {}, {} needs {} -> {}",
                source_task.task_id,
                source_task.obs_dim,
                source_task.action_dim,
                target.task_id,
                target.obs_dim,
                target.action_dim
            ),
        });
    }
    let policy = KnowledgePolicy::learned(learned_policy_id(source_task.task_id), source.inner().clone())?;
    let mut unused = stream(0, Stream::InitKnowledgeKeys);
    set.add_knowledge(policy, Some(source.key(0).to_vec()), &mut unused)
}

/// Builds the initial policy for `target` from a trained `source`. Fresh parts
/// come from the init streams of `seed`; critics are never transferred.
pub fn transfer(
    plan: &TransferPlan,
    source_task: &TaskSpec,
    source: &KianPolicy,
    target: &TaskSpec,
    config: &KianConfig,
    seed: u64,
) -> Result<KianPolicy> {
    plan.validate(source_task, source, target)?;
    if config.key_dim != source.key_dim() {
        return Err(Error::Transfer {
            component: "keys",
            reason: format!("key dimension {} differs from source {}", config.key_dim, source.key_dim()),
        });
    }
    let selected = |id: &str| plan.key_selection.iter().any(|s| s == id);
    let trained: Vec<KnowledgeKey> = source.current_keys();
    let mut fresh = stream(seed, Stream::InitKnowledgeKeys);
    let mut set = KnowledgeSet::empty(source.key_dim());
    for (j, policy) in source.knowledge_policies().iter().enumerate() {
        let key = selected(&policy.id).then(|| trained[j + 1].embedding.clone());
        set = set.add_knowledge(policy.clone(), key, &mut fresh)?;
    }
    if plan.expand_with_inner {
        set = expand_knowledge(&set, source_task, source, target)?;
    }
    let base = KianPolicy::new(target, set.clone(), config, seed)?;
    let inner_key = if selected(INNER_ID) {
        source.key(0).to_vec()
    } else {
        base.key(0).to_vec()
    };
    let query = if plan.pipeline.copies_query() {
        source.query().clone()
    } else {
        base.query().clone()
    };
    let inner = if plan.pipeline.copies_inner() {
        source.inner().clone()
    } else {
        base.inner().clone()
    };
    KianPolicy::from_parts(target, set, inner_key, query, inner, config.temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineageEntry {
    pub task: TaskId,
    pub checkpoint_hash: String,
    /// `None` for the task trained from scratch.
    pub plan: Option<TransferPlan>,
}

/// Append-only record of a group run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineageRecord {
    entries: Vec<LineageEntry>,
}

impl LineageRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LineageEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LineageEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::knowledge::KnowledgeKind;
    use alloc::string::ToString;
    use alloc::vec;

    fn config() -> KianConfig {
        KianConfig {
            inner_hidden: vec![16, 16],
            query_hidden: vec![8],
            key_dim: 4,
            temperature: 1.0,
        }
    }

    fn trained(task: TaskId, seed: u64) -> (TaskSpec, KianPolicy) {
        let spec = TaskSpec::new(task);
        let set = KnowledgeSet::scripted(4, &mut stream(seed, Stream::InitKnowledgeKeys)).unwrap();
        let mut p = KianPolicy::new(&spec, set, &config(), seed).unwrap();
        // stand-in for training: perturb every block
        for block in p.param_blocks_mut() {
            for (i, v) in block.iter_mut().enumerate() {
                *v += 0.01 * ((i % 7) as f64 - 3.0);
            }
        }
        (spec, p)
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn keys_only_copies_keys_and_nothing_else() {
        let (src_spec, src) = trained(TaskId::MisOrient, 1);
        let target = TaskSpec::new(TaskId::EcmReach);
        let plan = TransferPlan {
            pipeline: Pipeline::KeysOnly,
            key_selection: ids(&["approach", "transport", "handover"]),
            expand_with_inner: false,
        };
        let p = transfer(&plan, &src_spec, &src, &target, &config(), 2).unwrap();
        for j in 1..4 {
            assert_eq!(p.key(j), src.key(j));
        }
        assert_ne!(p.key(0), src.key(0));
        assert_ne!(p.query().params, src.query().params);
        assert_eq!(p.obs_dim(), 6);
    }

    #[test]
    fn keys_and_query_with_partial_selection() {
        let (src_spec, src) = trained(TaskId::NeedleRegrasp, 3);
        let target = TaskSpec::new(TaskId::BiPegTransfer);
        let plan = TransferPlan {
            pipeline: Pipeline::KeysAndQuery,
            key_selection: ids(&["approach", "transport"]),
            expand_with_inner: false,
        };
        let p = transfer(&plan, &src_spec, &src, &target, &config(), 4).unwrap();
        assert_eq!(p.key(1), src.key(1));
        assert_eq!(p.key(2), src.key(2));
        assert_ne!(p.key(3), src.key(3));
        assert_eq!(p.query(), src.query());
        assert_ne!(p.inner(), src.inner());
    }

    #[test]
    fn all_copies_the_inner_actor() {
        let (src_spec, src) = trained(TaskId::NeedlePick, 5);
        let target = TaskSpec::new(TaskId::PegTransfer);
        let plan = TransferPlan::all_keys(Pipeline::All, &src);
        let p = transfer(&plan, &src_spec, &src, &target, &config(), 6).unwrap();
        assert_eq!(p.inner(), src.inner());
        assert_eq!(p.query(), src.query());
        for j in 0..4 {
            assert_eq!(p.key(j), src.key(j));
        }
        let obs = make_env(target, 6).unwrap().observe();
        assert_eq!(p.weights(&obs).unwrap(), src.weights(&obs).unwrap());
    }

    #[test]
    fn dimension_mismatches_name_the_component() {
        let (src_spec, src) = trained(TaskId::MisOrient, 7);
        let target = TaskSpec::new(TaskId::EcmReach);
        for (pipeline, component) in [(Pipeline::KeysAndQuery, "query"), (Pipeline::All, "query")] {
            let plan = TransferPlan::all_keys(pipeline, &src);
            match transfer(&plan, &src_spec, &src, &target, &config(), 8) {
                Err(Error::Transfer { component: c, .. }) => assert_eq!(c, component),
                other => panic!("{other:?}"),
            }
        }
        let (src_spec, src) = trained(TaskId::NeedleReach, 7);
        let target = TaskSpec::new(TaskId::NeedlePick);
        let plan = TransferPlan::all_keys(Pipeline::KeysOnly, &src);
        let mut bad = plan.clone();
        bad.key_selection.push("missing".into());
        assert!(matches!(bad.validate(&src_spec, &src, &target), Err(Error::Transfer { .. })));
        let mut empty = plan.clone();
        empty.key_selection.clear();
        assert!(empty.validate(&src_spec, &src, &target).is_err());
        let mut expand = plan;
        expand.expand_with_inner = true;
        assert!(transfer(&expand, &src_spec, &src, &target, &config(), 8).is_err());
    }

    #[test]
    fn expansion_grows_the_set_and_freezes_a_copy() {
        let (spec, src) = trained(TaskId::NeedleReach, 9);
        let set = src.knowledge_with_current_keys().unwrap();
        let grown = expand_knowledge(&set, &spec, &src, &spec).unwrap();
        assert_eq!(grown.len(), 4);
        let learned = &grown.policies()[3];
        assert_eq!(learned.kind, KnowledgeKind::LearnedInnerActor);
        assert_eq!(grown.keys()[3].embedding, src.key(0));
        let obs = make_env(spec.clone(), 9).unwrap().observe();
        let dist = learned.act_dist(&spec.layout(), &obs, 3).unwrap();
        let (head, _) = crate::approximators::GaussianHeadOutput::from_network(&src.inner().forward(&obs).unwrap());
        let source_action: Vec<f64> = head.mean.iter().map(|m| libm::tanh(*m)).collect();
        assert_eq!(dist.mean, source_action);

        let p = KianPolicy::new(&spec, grown.clone(), &config(), 10).unwrap();
        assert_eq!(p.weights(&obs).unwrap().w.len(), 5);

        let (spec2, src2) = trained(TaskId::EcmReach, 11);
        assert!(expand_knowledge(&grown, &spec2, &src2, &spec).is_err());
        let mut other = src.clone();
        other.param_blocks_mut()[0][0] += 1.0;
        let again = expand_knowledge(&grown, &TaskSpec::new(TaskId::NeedleReach), &other, &spec);
        assert!(matches!(again, Err(Error::Knowledge(_))), "duplicate id rejected");
    }

    #[test]
    fn chained_expansions_keep_order() {
        let (reach_spec, reach) = trained(TaskId::NeedleReach, 12);
        let target = TaskSpec::new(TaskId::NeedleReach);
        let plan = TransferPlan {
            pipeline: Pipeline::KeysOnly,
            key_selection: ids(&["approach"]),
            expand_with_inner: true,
        };
        let second = transfer(&plan, &reach_spec, &reach, &target, &config(), 13).unwrap();
        assert_eq!(second.knowledge_policies().len(), 4);
        let grown = expand_knowledge(
            &second.knowledge_with_current_keys().unwrap(),
            &TaskSpec { task_id: TaskId::EcmReach, ..TaskSpec::new(TaskId::NeedleReach) },
            &second,
            &target,
        )
        .unwrap();
        let order: Vec<&str> = grown.policies().iter().map(|p| p.id.as_str()).collect();
        assert_eq!(order, ["approach", "transport", "handover", "NeedleReach-inner", "ECMReach-inner"]);
    }

    #[test]
    fn fresh_blocks_follow_the_init_law() {
        let (src_spec, src) = trained(TaskId::NeedleReach, 14);
        let big = KianConfig {
            inner_hidden: vec![256],
            ..config()
        };
        let plan = TransferPlan::all_keys(Pipeline::KeysOnly, &src);
        let p = transfer(&plan, &src_spec, &src, &src_spec, &big, 15).unwrap();
        // first inner layer: 9 inputs, 256 outputs, uniform on ±1/3
        let w = &p.inner().params[..9 * 256];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected_var = (1.0f64 / 3.0).powi(2) / 3.0;
        assert!(mean.abs() < 4.0 * (expected_var / n).sqrt(), "{mean}");
        assert!((var - expected_var).abs() < 0.1 * expected_var, "{var}");
    }

    #[test]
    fn lineage_appends() {
        let mut l = LineageRecord::new();
        assert!(l.is_empty());
        l.push(LineageEntry {
            task: TaskId::StaticTrack,
            checkpoint_hash: "aa".into(),
            plan: None,
        });
        l.push(LineageEntry {
            task: TaskId::ActiveTrack,
            checkpoint_hash: "bb".into(),
            plan: Some(TransferPlan {
                pipeline: Pipeline::All,
                key_selection: ids(&["inner"]),
                expand_with_inner: false,
            }),
        });
        assert_eq!(l.len(), 2);
        assert_eq!(l.entries()[0].task, TaskId::StaticTrack);
        assert_eq!(Pipeline::parse("keysandquery").unwrap(), Pipeline::KeysAndQuery);
        assert!(Pipeline::parse("most").is_err());
    }
}
