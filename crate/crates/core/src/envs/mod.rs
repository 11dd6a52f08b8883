//! Physics-free kinematic analogs of ten surgical training tasks.
//!
//! End-effectors are points moved by bounded Cartesian steps, grasped objects
//! are rigidly attached to their gripper, and grippers open and close
//! automatically from distance thresholds. Tracking tasks steer a pinhole
//! camera instead of an arm.

mod camera;
mod reward;
mod task;

use alloc::vec::Vec;

use rand::Rng;

pub use camera::{camera_basis, project_to_image, ImageProjection, BEHIND_OFFSET, FOCAL_LENGTH};
pub use reward::{dense_reward, Distances, RewardCoefficients, SUCCESS_BONUS};
pub use task::{ArmSlots, ObsLayout, TaskId, TaskKind, TaskSpec, RELEASE_DISTANCE, WORKSPACE_HALF};

use crate::error::{check_len, Error, Result};
use crate::rng::{stream, Stream, StreamRng};

pub type Vec3 = [f64; 3];

/// Camera center for tracking tasks, on the workspace boundary looking +x.
pub const CAMERA_POSITION: Vec3 = [-0.5, 0.0, 0.0];
const ORIENTATION_LIMIT: f64 = 1.0;
const ROLL_LIMIT: f64 = 1.2;
/// Overlap of the two arms' reach along x in bimanual tasks.
const HANDOVER_HALF_WIDTH: f64 = 0.1;
const TRACK_AMPLITUDE: f64 = 0.05;
const TRACK_FREQUENCY: f64 = 0.1;

/// Complete mutable state of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ee: [Vec3; 2],
    pub grasped: [bool; 2],
    /// Manipulated object, or the tracked target for tracking tasks.
    pub object: Vec3,
    /// Placement goal, or the center of the target path for tracking tasks.
    pub goal: Vec3,
    /// `[yaw, pitch, roll]` of the camera.
    pub camera: [f64; 3],
    pub goal_roll: f64,
    pub path_phase: Vec3,
    pub step: usize,
    /// Set when a gripper opens; cleared once it moves out of grasp range.
    pub release_lock: [bool; 2],
    pub hold_count: usize,
}

impl WorldState {
    pub const ENCODED_LEN: usize = 25;

    fn zeroed() -> Self {
        Self {
            ee: [[0.0; 3]; 2],
            grasped: [false; 2],
            object: [0.0; 3],
            goal: [0.0; 3],
            camera: [0.0; 3],
            goal_roll: 0.0,
            path_phase: [0.0; 3],
            step: 0,
            release_lock: [false; 2],
            hold_count: 0,
        }
    }

    /// Flat encoding used by checkpoints.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::ENCODED_LEN);
        v.extend_from_slice(&self.ee[0]);
        v.extend_from_slice(&self.ee[1]);
        v.extend(self.grasped.iter().map(|&g| g as u8 as f64));
        v.extend_from_slice(&self.object);
        v.extend_from_slice(&self.goal);
        v.extend_from_slice(&self.camera);
        v.push(self.goal_roll);
        v.extend_from_slice(&self.path_phase);
        v.push(self.step as f64);
        v.extend(self.release_lock.iter().map(|&g| g as u8 as f64));
        v.push(self.hold_count as f64);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        check_len("world state", Self::ENCODED_LEN, v.len())?;
        let v3 = |i: usize| [v[i], v[i + 1], v[i + 2]];
        Ok(Self {
            ee: [v3(0), v3(3)],
            grasped: [v[6] != 0.0, v[7] != 0.0],
            object: v3(8),
            goal: v3(11),
            camera: v3(14),
            goal_roll: v[17],
            path_phase: v3(18),
            step: v[21] as usize,
            release_lock: [v[22] != 0.0, v[23] != 0.0],
            hold_count: v[24] as usize,
        })
    }

    pub fn holder(&self) -> Option<usize> {
        self.grasped.iter().position(|&g| g)
    }
}

/// Diagnostics of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    pub collision: bool,
    pub distances: Distances,
    /// Tracking target behind the image plane.
    pub behind_camera: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// `success || step >= horizon`
    pub done: bool,
    /// Episode ended by the horizon without success.
    pub truncated: bool,
    pub info: StepInfo,
}

/// One task instance with its own random stream.
#[derive(Debug, Clone)]
pub struct Env {
    spec: TaskSpec,
    state: WorldState,
    rng: StreamRng,
}

/// Builds an environment seeded from the `env` sub-stream of `seed` and draws
/// its first initial placement.
pub fn make_env(spec: TaskSpec, seed: u64) -> Result<Env> {
    Env::with_rng(spec, stream(seed, Stream::Env))
}

fn norm(a: &Vec3) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn uniform3<R: Rng + ?Sized>(rng: &mut R, lo: Vec3, hi: Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = if lo[i] == hi[i] {
            lo[i]
        } else {
            rng.random_range(lo[i]..hi[i])
        };
    }
    out
}

impl Env {
    pub fn with_rng(spec: TaskSpec, rng: StreamRng) -> Result<Self> {
        spec.validate()?;
        let mut env = Self {
            spec,
            state: WorldState::zeroed(),
            rng,
        };
        env.reset();
        Ok(env)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn set_state(&mut self, state: WorldState) {
        self.state = state;
    }

    pub fn rng(&self) -> &StreamRng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: StreamRng) {
        self.rng = rng;
    }

    /// Axis-aligned box each arm may occupy.
    fn arm_region(&self, arm: usize) -> (Vec3, Vec3) {
        let h = WORKSPACE_HALF;
        match (self.spec.kind(), arm) {
            (TaskKind::Bimanual, 0) => ([-h, -h, -h], [HANDOVER_HALF_WIDTH, h, h]),
            (TaskKind::Bimanual, _) => ([-HANDOVER_HALF_WIDTH, -h, -h], [h, h, h]),
            _ => ([-h; 3], [h; 3]),
        }
    }

    /// Draws a new initial placement and returns the first observation.
    pub fn reset(&mut self) -> Vec<f64> {
        let mut s = WorldState::zeroed();
        let rng = &mut self.rng;
        match self.spec.task_id {
            TaskId::NeedleReach | TaskId::EcmReach => {
                let (ee_lo, ee_hi) = if self.spec.task_id == TaskId::EcmReach {
                    ([-0.15, -0.15, 0.1], [0.15, 0.15, 0.2])
                } else {
                    ([-0.2, -0.2, 0.0], [0.2, 0.2, 0.1])
                };
                s.ee[0] = uniform3(rng, ee_lo, ee_hi);
                loop {
                    s.goal = uniform3(rng, [-0.2, -0.2, -0.1], [0.2, 0.2, 0.2]);
                    if dist(&s.goal, &s.ee[0]) > 0.05 {
                        break;
                    }
                }
            }
            TaskId::MisOrient => {
                s.goal_roll = rng.random_range(-0.2..0.2);
                let magnitude: f64 = rng.random_range(0.3..0.8);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                s.camera[2] = s.goal_roll + sign * magnitude;
            }
            TaskId::NeedlePick | TaskId::GauzeRetrieve => {
                s.ee[0] = uniform3(rng, [-0.2, -0.2, 0.0], [0.2, 0.2, 0.1]);
                let (table, goal_lo, goal_hi) = if self.spec.task_id == TaskId::NeedlePick {
                    (-0.15, [-0.2, -0.2, -0.05], [0.2, 0.2, 0.1])
                } else {
                    (-0.2, [-0.1, -0.1, 0.1], [0.1, 0.1, 0.2])
                };
                s.object = uniform3(rng, [-0.2, -0.2, table], [0.2, 0.2, table]);
                s.goal = uniform3(rng, goal_lo, goal_hi);
            }
            TaskId::PegTransfer => {
                s.ee[0] = uniform3(rng, [-0.1, -0.1, 0.05], [0.1, 0.1, 0.15]);
                s.object = uniform3(rng, [-0.25, -0.15, -0.1], [-0.1, 0.15, -0.1]);
                s.goal = uniform3(rng, [0.1, -0.15, -0.1], [0.25, 0.15, -0.1]);
            }
            TaskId::NeedleRegrasp | TaskId::BiPegTransfer => {
                s.ee[0] = uniform3(rng, [-0.25, -0.15, 0.0], [-0.1, 0.15, 0.1]);
                s.ee[1] = uniform3(rng, [0.1, -0.15, 0.0], [0.25, 0.15, 0.1]);
                s.goal = uniform3(rng, [0.15, -0.15, -0.05], [0.3, 0.15, 0.1]);
                if self.spec.task_id == TaskId::NeedleRegrasp {
                    s.object = s.ee[0];
                    s.grasped[0] = true;
                } else {
                    s.object = uniform3(rng, [-0.25, -0.15, -0.1], [-0.15, 0.15, -0.1]);
                }
            }
            TaskId::StaticTrack | TaskId::ActiveTrack => {
                s.camera[0] = rng.random_range(-0.1..0.1);
                s.camera[1] = rng.random_range(-0.1..0.1);
                s.goal = uniform3(rng, [0.0, -0.25, -0.2], [0.3, 0.25, 0.2]);
                if self.spec.task_id == TaskId::ActiveTrack {
                    s.path_phase = uniform3(
                        rng,
                        [0.0; 3],
                        [core::f64::consts::TAU; 3],
                    );
                }
                s.object = self.track_target(&s, 0);
            }
        }
        self.state = s;
        self.observe()
    }

    fn track_target(&self, s: &WorldState, t: usize) -> Vec3 {
        if self.spec.task_id != TaskId::ActiveTrack {
            return s.goal;
        }
        let mut p = s.goal;
        for (x, phase) in p.iter_mut().zip(s.path_phase) {
            *x += TRACK_AMPLITUDE * libm::sin(TRACK_FREQUENCY * t as f64 + phase);
        }
        p
    }

    fn projection(&self) -> ImageProjection {
        let s = &self.state;
        project_to_image([s.camera[0], s.camera[1]], sub(&s.object, &CAMERA_POSITION))
    }

    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let mut obs = Vec::with_capacity(self.spec.obs_dim);
        match self.spec.kind() {
            TaskKind::Reach => {
                obs.extend_from_slice(&s.ee[0]);
                obs.extend_from_slice(&s.goal);
                if self.spec.task_id == TaskId::NeedleReach {
                    obs.extend_from_slice(&sub(&s.goal, &s.ee[0]));
                }
            }
            TaskKind::Orient => {
                obs.extend_from_slice(&[s.camera[2], s.goal_roll, s.goal_roll - s.camera[2]]);
            }
            TaskKind::Pick => {
                obs.extend_from_slice(&s.ee[0]);
                obs.extend_from_slice(&s.object);
                obs.extend_from_slice(&s.goal);
                obs.push(s.grasped[0] as u8 as f64);
                obs.extend_from_slice(&sub(&s.object, &s.ee[0]));
                obs.extend_from_slice(&sub(&s.goal, &s.object));
            }
            TaskKind::Bimanual => {
                obs.extend_from_slice(&s.ee[0]);
                obs.extend_from_slice(&s.ee[1]);
                obs.extend_from_slice(&s.object);
                obs.extend_from_slice(&s.goal);
                obs.push(s.grasped[0] as u8 as f64);
                obs.push(s.grasped[1] as u8 as f64);
                obs.extend_from_slice(&sub(&s.object, &s.ee[0]));
                obs.extend_from_slice(&sub(&s.object, &s.ee[1]));
                obs.extend_from_slice(&sub(&s.goal, &s.object));
            }
            TaskKind::Track => {
                let p = self.projection();
                obs.extend_from_slice(&[s.camera[0], s.camera[1]]);
                obs.extend_from_slice(&s.object);
                obs.extend_from_slice(&p.offset);
            }
        }
        obs
    }

    /// Applies one action. Components are clamped to `[-1, 1]`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_len("action", self.spec.action_dim, action.len())?;
        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(Error::Input(alloc::format!(
                "action component {i} is not finite"
            )));
        }
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let scale = self.spec.action_scale;
        let mut collision = false;
        let mut behind_camera = false;
        match self.spec.kind() {
            TaskKind::Reach | TaskKind::Pick | TaskKind::Bimanual => {
                for arm in 0..self.spec.arms {
                    let (lo, hi) = self.arm_region(arm);
                    for i in 0..3 {
                        let target = self.state.ee[arm][i] + scale * a[3 * arm + i];
                        if target < lo[i] || target > hi[i] {
                            collision = true;
                        }
                        self.state.ee[arm][i] = target.clamp(lo[i], hi[i]);
                    }
                }
                if self.spec.arms == 2
                    && dist(&self.state.ee[0], &self.state.ee[1]) < self.spec.collide_distance
                {
                    collision = true;
                }
                if self.spec.has_object() {
                    self.update_grasp();
                }
            }
            TaskKind::Orient => {
                let roll = self.state.camera[2] + scale * a[0];
                self.state.camera[2] = roll.clamp(-ROLL_LIMIT, ROLL_LIMIT);
            }
            TaskKind::Track => {
                for (angle, step) in self.state.camera.iter_mut().zip(&a[..2]) {
                    *angle = (*angle + scale * step).clamp(-ORIENTATION_LIMIT, ORIENTATION_LIMIT);
                }
                let t = self.state.step + 1;
                let target = self.track_target(&self.state, t);
                self.state.object = target;
            }
        }
        self.state.step += 1;

        let s = &self.state;
        let mut distances = Distances::default();
        let success = match self.spec.kind() {
            TaskKind::Reach => {
                distances.d_rg = dist(&s.ee[0], &s.goal);
                distances.d_rg < self.spec.goal_tolerance
            }
            TaskKind::Orient => {
                distances.d_rg = libm::fabs(s.goal_roll - s.camera[2]);
                distances.d_rg < self.spec.goal_tolerance
            }
            TaskKind::Pick | TaskKind::Bimanual => {
                distances.d_og = dist(&s.object, &s.goal);
                distances.d_rg = dist(&s.ee[0], &s.goal);
                distances.d_ro = match s.holder() {
                    Some(0) if self.spec.arms == 2 => dist(&s.ee[1], &s.object),
                    Some(_) => 0.0,
                    None => (0..self.spec.arms)
                        .map(|arm| dist(&s.ee[arm], &s.object))
                        .fold(f64::INFINITY, f64::min),
                };
                s.holder().is_none() && distances.d_og < self.spec.goal_tolerance
            }
            TaskKind::Track => {
                let p = self.projection();
                behind_camera = p.behind;
                distances.d_rg = p.norm();
                if distances.d_rg < self.spec.goal_tolerance {
                    self.state.hold_count += 1;
                } else {
                    self.state.hold_count = 0;
                }
                self.state.hold_count >= self.spec.hold_steps
            }
        };
        let reward = dense_reward(distances, collision, success, &self.spec.coefficients);
        let out_of_time = self.state.step >= self.spec.horizon;
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            done: success || out_of_time,
            truncated: out_of_time && !success,
            info: StepInfo {
                success,
                collision,
                distances,
                behind_camera,
            },
        })
    }

    /// Rigid attachment, release near the goal, and distance-triggered grasp
    /// with handover between arms.
    fn update_grasp(&mut self) {
        let arms = self.spec.arms;
        let threshold = self.spec.grasp_threshold;
        let s = &mut self.state;
        if let Some(holder) = s.holder() {
            s.object = s.ee[holder];
            if dist(&s.object, &s.goal) < RELEASE_DISTANCE {
                s.grasped[holder] = false;
                s.release_lock[holder] = true;
            }
        }
        for arm in 0..arms {
            if s.release_lock[arm] && dist(&s.ee[arm], &s.object) > threshold {
                s.release_lock[arm] = false;
            }
        }
        let candidate = (0..arms)
            .filter(|&arm| !s.grasped[arm] && !s.release_lock[arm])
            .map(|arm| (arm, dist(&s.ee[arm], &s.object)))
            .filter(|&(_, d)| d < threshold)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((arm, _)) = candidate {
            if let Some(giver) = s.holder() {
                s.grasped[giver] = false;
                s.release_lock[giver] = true;
            }
            s.grasped[arm] = true;
            s.object = s.ee[arm];
        }
    }
}
