use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::reward::RewardCoefficients;
use crate::error::{Error, Result};

/// Half extent of the normalized workspace box `[-0.5, 0.5]³`.
pub const WORKSPACE_HALF: f64 = 0.5;
/// Object–goal distance below which a gripper opens.
pub const RELEASE_DISTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskId {
    NeedleReach,
    EcmReach,
    MisOrient,
    GauzeRetrieve,
    NeedlePick,
    PegTransfer,
    NeedleRegrasp,
    BiPegTransfer,
    StaticTrack,
    ActiveTrack,
}

impl TaskId {
    pub const ALL: [TaskId; 10] = [
        TaskId::NeedleReach,
        TaskId::EcmReach,
        TaskId::MisOrient,
        TaskId::GauzeRetrieve,
        TaskId::NeedlePick,
        TaskId::PegTransfer,
        TaskId::NeedleRegrasp,
        TaskId::BiPegTransfer,
        TaskId::StaticTrack,
        TaskId::ActiveTrack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::NeedleReach => "NeedleReach",
            TaskId::EcmReach => "ECMReach",
            TaskId::MisOrient => "MisOrient",
            TaskId::GauzeRetrieve => "GauzeRetrieve",
            TaskId::NeedlePick => "NeedlePick",
            TaskId::PegTransfer => "PegTransfer",
            TaskId::NeedleRegrasp => "NeedleRegrasp",
            TaskId::BiPegTransfer => "BiPegTransfer",
            TaskId::StaticTrack => "StaticTrack",
            TaskId::ActiveTrack => "ActiveTrack",
        }
    }

    pub fn kind(self) -> TaskKind {
        match self {
            TaskId::NeedleReach | TaskId::EcmReach => TaskKind::Reach,
            TaskId::MisOrient => TaskKind::Orient,
            TaskId::GauzeRetrieve | TaskId::NeedlePick | TaskId::PegTransfer => TaskKind::Pick,
            TaskId::NeedleRegrasp | TaskId::BiPegTransfer => TaskKind::Bimanual,
            TaskId::StaticTrack | TaskId::ActiveTrack => TaskKind::Track,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// Families sharing dynamics and observation layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Reach,
    Orient,
    Pick,
    Bimanual,
    Track,
}

/// Where each semantic field lives inside an observation vector. Offsets
/// point at the first coordinate of a 3-vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsLayout {
    pub arms: Vec<ArmSlots>,
    pub object: Option<usize>,
    pub goal: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmSlots {
    pub ee: usize,
    pub grasp: Option<usize>,
}

/// Static description of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub arms: usize,
    pub horizon: usize,
    pub grasp_threshold: f64,
    pub coefficients: RewardCoefficients,
    /// Success tolerance: end-effector–goal distance for reaches, radians for
    /// orientation, image offset for tracking. Pick tasks succeed on release.
    pub goal_tolerance: f64,
    /// Per-step translation (m) or rotation (rad) of a unit action.
    pub action_scale: f64,
    /// End-effectors closer than this collide.
    pub collide_distance: f64,
    /// Consecutive in-tolerance steps required by tracking tasks.
    pub hold_steps: usize,
}

impl TaskSpec {
    /// Default desk-scale settings of `task_id`.
    pub fn new(task_id: TaskId) -> Self {
        let c = |c_og, c_ro, c_rg, p| RewardCoefficients { c_og, c_ro, c_rg, p };
        let (obs_dim, action_dim, arms) = match task_id.kind() {
            TaskKind::Reach if task_id == TaskId::EcmReach => (6, 3, 1),
            TaskKind::Reach => (9, 3, 1),
            TaskKind::Orient => (3, 1, 0),
            TaskKind::Pick => (16, 3, 1),
            TaskKind::Bimanual => (23, 6, 2),
            TaskKind::Track => (7, 2, 0),
        };
        let (horizon, grasp_threshold, coefficients, goal_tolerance, action_scale) = match task_id {
            TaskId::NeedleReach => (50, 0.05, c(0.0, 0.0, 1.0, 0.0), 0.02, 0.05),
            TaskId::EcmReach => (50, 0.05, c(0.0, 0.0, 1.0, 0.0), 0.02, 0.05),
            TaskId::MisOrient => (50, 0.05, c(0.0, 0.0, 1.0, 0.0), 0.02, 0.1),
            TaskId::GauzeRetrieve => (50, 0.05, c(1.0, 1.0, 0.0, 0.0), RELEASE_DISTANCE, 0.05),
            TaskId::NeedlePick => (50, 0.02, c(1.0, 1.0, 0.0, 0.0), RELEASE_DISTANCE, 0.05),
            TaskId::PegTransfer => (75, 0.03, c(1.0, 1.0, 0.0, 0.0), RELEASE_DISTANCE, 0.05),
            TaskId::NeedleRegrasp => (100, 0.03, c(1.0, 1.0, 0.0, 2.0), RELEASE_DISTANCE, 0.05),
            TaskId::BiPegTransfer => (100, 0.03, c(1.0, 1.0, 0.0, 2.0), RELEASE_DISTANCE, 0.05),
            TaskId::StaticTrack => (50, 0.05, c(0.0, 0.0, 1.0, 0.0), 0.02, 0.1),
            TaskId::ActiveTrack => (50, 0.05, c(0.0, 0.0, 1.0, 0.0), 0.02, 0.1),
        };
        Self {
            task_id,
            obs_dim,
            action_dim,
            arms,
            horizon,
            grasp_threshold,
            coefficients,
            goal_tolerance,
            action_scale,
            collide_distance: 0.005,
            hold_steps: 3,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.task_id.kind()
    }

    pub fn has_object(&self) -> bool {
        matches!(self.kind(), TaskKind::Pick | TaskKind::Bimanual)
    }

    /// Checks the ranges every task setting must respect.
    pub fn validate(&self) -> Result<()> {
        let reference = TaskSpec::new(self.task_id);
        if (self.obs_dim, self.action_dim, self.arms)
            != (reference.obs_dim, reference.action_dim, reference.arms)
        {
            return Err(Error::Config(format!(
                "{}: observation/action layout is fixed",
                self.task_id
            )));
        }
        if !(0.01..=0.1).contains(&self.grasp_threshold) {
            return Err(Error::Config(format!(
                "{}: grasp_threshold {} outside [0.01, 0.1]",
                self.task_id, self.grasp_threshold
            )));
        }
        let c = &self.coefficients;
        for (name, v) in [("c_og", c.c_og), ("c_ro", c.c_ro), ("c_rg", c.c_rg)] {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Config(format!(
                    "{}: {name} = {v} must be 0 or 1",
                    self.task_id
                )));
            }
        }
        if c.p != 0.0 && c.p != 2.0 {
            return Err(Error::Config(format!(
                "{}: collision penalty {} must be 0 or 2",
                self.task_id, c.p
            )));
        }
        if self.horizon == 0 || self.hold_steps == 0 {
            return Err(Error::Config(format!(
                "{}: horizon and hold_steps must be positive",
                self.task_id
            )));
        }
        if !(self.goal_tolerance > 0.0 && self.action_scale > 0.0 && self.collide_distance >= 0.0) {
            return Err(Error::Config(format!(
                "{}: tolerances and scales must be positive",
                self.task_id
            )));
        }
        Ok(())
    }

    /// Observation layout. Reach: `[ee, goal, goal-ee]` (ECMReach drops the
    /// difference); pick: `[ee, obj, goal, grasp, obj-ee, goal-obj]`;
    /// bimanual: `[ee1, ee2, obj, goal, grasp1, grasp2, obj-ee1, obj-ee2,
    /// goal-obj]`; orientation: `[roll, goal_roll, goal_roll-roll]`; tracking:
    /// `[yaw, pitch, target, image_offset]`.
    pub fn layout(&self) -> ObsLayout {
        match self.kind() {
            TaskKind::Reach => ObsLayout {
                arms: vec![ArmSlots { ee: 0, grasp: None }],
                object: None,
                goal: Some(3),
            },
            TaskKind::Pick => ObsLayout {
                arms: vec![ArmSlots {
                    ee: 0,
                    grasp: Some(9),
                }],
                object: Some(3),
                goal: Some(6),
            },
            TaskKind::Bimanual => ObsLayout {
                arms: vec![
                    ArmSlots {
                        ee: 0,
                        grasp: Some(12),
                    },
                    ArmSlots {
                        ee: 3,
                        grasp: Some(13),
                    },
                ],
                object: Some(6),
                goal: Some(9),
            },
            TaskKind::Orient | TaskKind::Track => ObsLayout {
                arms: Vec::new(),
                object: None,
                goal: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
        }
        assert!("NoSuchTask".parse::<TaskId>().is_err());
    }

    #[test]
    fn defaults_validate() {
        for t in TaskId::ALL {
            TaskSpec::new(t).validate().unwrap();
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        let mut s = TaskSpec::new(TaskId::NeedlePick);
        s.grasp_threshold = 0.2;
        assert!(s.validate().is_err());
        let mut s = TaskSpec::new(TaskId::NeedlePick);
        s.coefficients.c_og = 0.5;
        assert!(s.validate().is_err());
        let mut s = TaskSpec::new(TaskId::NeedlePick);
        s.coefficients.p = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn shared_layouts() {
        let pick = TaskSpec::new(TaskId::NeedlePick);
        for t in [TaskId::PegTransfer, TaskId::GauzeRetrieve] {
            let s = TaskSpec::new(t);
            assert_eq!((s.obs_dim, s.action_dim), (pick.obs_dim, pick.action_dim));
        }
        let a = TaskSpec::new(TaskId::NeedleRegrasp);
        let b = TaskSpec::new(TaskId::BiPegTransfer);
        assert_eq!((a.obs_dim, a.action_dim), (b.obs_dim, b.action_dim));
        let a = TaskSpec::new(TaskId::StaticTrack);
        let b = TaskSpec::new(TaskId::ActiveTrack);
        assert_eq!((a.obs_dim, a.action_dim), (b.obs_dim, b.action_dim));
        // group 1 tasks differ pairwise
        let g1: Vec<_> = [TaskId::MisOrient, TaskId::EcmReach, TaskId::NeedleReach]
            .iter()
            .map(|&t| TaskSpec::new(t).obs_dim)
            .collect();
        assert!(g1[0] != g1[1] && g1[1] != g1[2]);
    }
}
