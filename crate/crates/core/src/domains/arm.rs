//! Planar k-link arm on a discretized joint lattice.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Domain, GoalPredicate, HeuristicFn, Problem, SnapError, StateId};

/// End effector must come this close to the goal pose.
pub const GOAL_TOLERANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleObstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("arm needs at least two links, got {0}")]
    TooFewLinks(usize),
    #[error("link {0} has non-positive length")]
    BadLinkLength(usize),
    #[error("joint step {0} rad does not divide a full turn evenly")]
    UnevenStep(f64),
    #[error("joint lattice with {steps} steps per joint and {links} links is too large")]
    LatticeTooLarge { steps: u64, links: usize },
    #[error("{what} joint vector has {got} entries, arm has {expected} links")]
    JointCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} configuration {joints:?} is in collision")]
    InCollision { what: &'static str, joints: Vec<f64> },
}

/// Arm scenario: geometry, obstacles and the task.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDomain {
    link_lengths: Vec<f64>,
    steps: u64,
    joint_step: f64,
    obstacles: Vec<CircleObstacle>,
    base: [f64; 2],
    goal_pose: [f64; 2],
    start: StateId,
    goal_joints: Option<StateId>,
}

impl ArmDomain {
    /// `start` and `goal_joints` are snapped onto the joint lattice. When
    /// `goal_joints` is given the goal pose is its end-effector position.
    pub fn new(
        link_lengths: Vec<f64>,
        joint_step: f64,
        obstacles: Vec<CircleObstacle>,
        base: [f64; 2],
        start: &[f64],
        goal_pose: [f64; 2],
        goal_joints: Option<&[f64]>,
    ) -> Result<Self, ArmError> {
        if link_lengths.len() < 2 {
            return Err(ArmError::TooFewLinks(link_lengths.len()));
        }
        if let Some(i) = link_lengths.iter().position(|l| !(*l > 0.0)) {
            return Err(ArmError::BadLinkLength(i));
        }
        let turns = TAU / joint_step;
        if !(joint_step > 0.0) || (turns - turns.round()).abs() > 1e-6 || turns.round() < 3.0 {
            return Err(ArmError::UnevenStep(joint_step));
        }
        let steps = turns.round() as u64;
        let links = link_lengths.len();
        if (steps as f64).powi(links as i32) >= u64::MAX as f64 / 2.0 {
            return Err(ArmError::LatticeTooLarge { steps, links });
        }
        let mut arm = Self {
            link_lengths,
            steps,
            joint_step: TAU / steps as f64,
            obstacles,
            base,
            goal_pose,
            start: StateId(0),
            goal_joints: None,
        };
        arm.start = arm.lattice_state("start", start)?;
        if let Some(goal) = goal_joints {
            let g = arm.lattice_state("goal", goal)?;
            arm.goal_joints = Some(g);
            arm.goal_pose = arm.end_effector(&arm.joints(g));
        }
        Ok(arm)
    }

    fn lattice_state(&self, what: &'static str, joints: &[f64]) -> Result<StateId, ArmError> {
        if joints.len() != self.links() {
            return Err(ArmError::JointCount {
                what,
                expected: self.links(),
                got: joints.len(),
            });
        }
        let s = self.encode(joints);
        if !self.is_valid(s) {
            return Err(ArmError::InCollision {
                what,
                joints: joints.to_vec(),
            });
        }
        Ok(s)
    }

    pub fn links(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joint_step(&self) -> f64 {
        self.joint_step
    }

    pub fn obstacles(&self) -> &[CircleObstacle] {
        &self.obstacles
    }

    pub fn base(&self) -> [f64; 2] {
        self.base
    }

    pub fn goal_pose(&self) -> [f64; 2] {
        self.goal_pose
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn goal_joints(&self) -> Option<StateId> {
        self.goal_joints
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    fn index_of(&self, angle: f64) -> u64 {
        let i = (angle / self.joint_step).round().rem_euclid(self.steps as f64);
        (i as u64) % self.steps
    }

    /// Lattice state nearest to a joint vector.
    pub fn encode(&self, joints: &[f64]) -> StateId {
        let mut id = 0u64;
        for a in joints.iter().rev() {
            id = id * self.steps + self.index_of(*a);
        }
        StateId(id)
    }

    fn indices(&self, state: StateId) -> Vec<u64> {
        let mut rest = state.0;
        (0..self.links())
            .map(|_| {
                let i = rest % self.steps;
                rest /= self.steps;
                i
            })
            .collect()
    }

    /// Joint angles of a lattice state, each in `[0, 2π)`.
    pub fn joints(&self, state: StateId) -> Vec<f64> {
        self.indices(state)
            .into_iter()
            .map(|i| i as f64 * self.joint_step)
            .collect()
    }

    /// Base, every joint position and finally the end effector.
    pub fn forward_kinematics(&self, joints: &[f64]) -> Vec<[f64; 2]> {
        let mut points = Vec::with_capacity(joints.len() + 1);
        let mut p = self.base;
        let mut heading = 0.0;
        points.push(p);
        for (len, q) in self.link_lengths.iter().zip(joints) {
            heading += q;
            p = [p[0] + len * heading.cos(), p[1] + len * heading.sin()];
            points.push(p);
        }
        points
    }

    pub fn end_effector(&self, joints: &[f64]) -> [f64; 2] {
        *self.forward_kinematics(joints).last().unwrap()
    }

    pub fn in_collision(&self, joints: &[f64]) -> bool {
        let points = self.forward_kinematics(joints);
        points.windows(2).any(|seg| {
            self.obstacles
                .iter()
                .any(|o| segment_point_distance(seg[0], seg[1], o.center) <= o.radius)
        })
    }

    /// Workspace distance from the end effector to the goal pose divided by
    /// the total reach. A rotation of `δ` moves the end effector at most
    /// `reach · δ`, so the scaled value never exceeds the joint-space path
    /// cost.
    pub fn baseline_heuristic(&self, state: StateId) -> f64 {
        let ee = self.end_effector(&self.joints(state));
        (ee[0] - self.goal_pose[0]).hypot(ee[1] - self.goal_pose[1]) / self.reach()
    }

    /// Distance left to the goal region, scaled like the baseline. Shrinking
    /// by the tolerance keeps it 1-Lipschitz in joint space and zero on every
    /// goal state, hence consistent.
    pub fn pose_anchor_heuristic(&self, state: StateId) -> f64 {
        let ee = self.end_effector(&self.joints(state));
        let d = (ee[0] - self.goal_pose[0]).hypot(ee[1] - self.goal_pose[1]);
        (d - GOAL_TOLERANCE).max(0.0) / self.reach()
    }

    fn wrapped(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    pub fn problem(self: &Arc<Self>) -> Problem {
        let arm = self.clone();
        let baseline: HeuristicFn = Arc::new(move |s| arm.baseline_heuristic(s));
        let (goal, anchor): (GoalPredicate, HeuristicFn) = match self.goal_joints {
            Some(g) => (Arc::new(move |s| s == g), self.toward(g)),
            None => {
                let arm = self.clone();
                let pose = self.goal_pose;
                let goal: GoalPredicate = Arc::new(move |s| {
                    let ee = arm.end_effector(&arm.joints(s));
                    (ee[0] - pose[0]).hypot(ee[1] - pose[1]) <= GOAL_TOLERANCE
                });
                let arm = self.clone();
                let anchor: HeuristicFn = Arc::new(move |s| arm.pose_anchor_heuristic(s));
                (goal, anchor)
            }
        };
        Problem {
            domain: self.clone(),
            start: self.start,
            goal,
            anchor,
            baseline,
        }
    }
}

fn segment_point_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).hypot(p[1] - cy)
}

impl Domain for ArmDomain {
    fn dimension(&self) -> usize {
        self.links()
    }

    fn is_valid(&self, state: StateId) -> bool {
        let size = self.steps.pow(self.links() as u32);
        state.0 < size && !self.in_collision(&self.joints(state))
    }

    fn successors(&self, state: StateId, out: &mut Vec<(StateId, f64)>) {
        let idx = self.indices(state);
        let mut place = 1u64;
        for &i in &idx {
            let up = (i + 1) % self.steps;
            let down = (i + self.steps - 1) % self.steps;
            for j in [up, down] {
                let next = StateId(state.0 - i * place + j * place);
                if !self.in_collision(&self.joints(next)) {
                    out.push((next, self.joint_step));
                }
            }
            place *= self.steps;
        }
    }

    fn configuration(&self, state: StateId) -> Vec<f64> {
        self.joints(state)
    }

    fn nearest(&self, raw: &[f64]) -> Result<StateId, SnapError> {
        if raw.len() != self.links() {
            return Err(SnapError::Dimension {
                expected: self.links(),
                got: raw.len(),
            });
        }
        if raw.iter().any(|a| !a.is_finite()) {
            return Err(SnapError::OutOfBounds(raw.to_vec()));
        }
        Ok(self.encode(raw))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| self.wrapped(*x, *y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn toward(&self, target: StateId) -> HeuristicFn {
        let arm = self.clone();
        let goal = self.joints(target);
        Arc::new(move |s| arm.distance(&arm.joints(s), &goal))
    }
}
