//! Approach and return-home navigation for a unicycle base.
//!
//! Rotate-then-translate: the base turns toward the goal at a rate
//! proportional to the heading error and drives only while that error is
//! small. The final step is clamped so the base lands on the goal instead
//! of overshooting it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MoveFault, MoveMode, MovingFlags};
use crate::bus::Millis;
use crate::config::MovingConfig;
use crate::est::EnvironmentSnapshot;
use crate::geometry::{integrate, wrap_angle, Point, Pose};
use crate::planner::Directive;
use crate::scalar::Scalar;
use crate::simworld::VelocityCommand;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams<T = f64> {
    pub v_max: T,
    pub omega_max: T,
    pub k_omega: T,
    pub heading_gate: T,
}

impl ControlParams<f64> {
    pub fn from_config(c: &MovingConfig) -> Self {
        Self {
            v_max: c.v_max,
            omega_max: c.omega_max,
            k_omega: c.k_omega,
            heading_gate: c.heading_gate,
        }
    }
}

/// Velocity toward `goal` for one control period of `dt_s` seconds.
/// Returns `(v, omega, heading_error)`.
pub fn goto_control<T: Scalar>(pose: &Pose<T>, goal: &Point<T>, dt_s: T, p: &ControlParams<T>) -> (T, T, T) {
    let dist = pose.position().distance(goal);
    let err = wrap_angle(pose.position().bearing_to(goal) - pose.heading);
    let omega = (p.k_omega * err).max(-p.omega_max).min(p.omega_max);
    let v = if err.abs() < p.heading_gate {
        p.v_max.min(dist / dt_s)
    } else {
        T::zero()
    };
    (v, omega, err)
}

/// Turn-in-place toward `heading`. Returns `(omega, error)`.
pub fn face_control<T: Scalar>(pose: &Pose<T>, heading: T, dt_s: T, p: &ControlParams<T>) -> (T, T) {
    let err = wrap_angle(heading - pose.heading);
    let limit = p.omega_max.min(err.abs() / dt_s);
    ((p.k_omega * err).max(-limit).min(limit), err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Phase {
    Translate,
    Face,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveState {
    pub mode: MoveMode,
    pub pose: Pose,
    pub target: Option<Point>,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveError {
    #[error("person {0} is not in the latest snapshot")]
    TargetLost(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoverOutput {
    pub velocity: VelocityCommand,
    pub flags: MovingFlags,
}

pub struct Mover {
    cfg: MovingConfig,
    params: ControlParams,
    home: Pose,
    state: MoveState,
    cmd: VelocityCommand,
    person_sum: (f64, f64, u32),
    missing: u32,
    lost_after: u32,
    fault_sent: bool,
}

impl Mover {
    pub fn new(cfg: MovingConfig, home: Pose, lost_after: u32) -> Self {
        Self {
            params: ControlParams::from_config(&cfg),
            cfg,
            home,
            state: MoveState {
                mode: MoveMode::IdleAtHome,
                pose: home,
                target: None,
                phase: Phase::Translate,
            },
            cmd: VelocityCommand::default(),
            person_sum: (0.0, 0.0, 0),
            missing: 0,
            lost_after,
            fault_sent: false,
        }
    }

    pub fn state(&self) -> &MoveState {
        &self.state
    }

    pub fn mode(&self) -> MoveMode {
        self.state.mode
    }

    pub fn sync_pose(&mut self, pose: Pose) {
        self.state.pose = pose;
    }

    fn person_estimate(&self) -> Option<Point> {
        let (x, y, n) = self.person_sum;
        (n > 0).then(|| Point::new(x / n as f64, y / n as f64))
    }

    /// Standoff point on the ray from the robot to the person.
    fn approach_goal(&self, person: Point) -> Point {
        let robot = self.state.pose.position();
        let d = robot.distance(&person);
        if d <= self.cfg.standoff {
            return robot;
        }
        let k = (d - self.cfg.standoff) / d;
        Point::new(robot.x + k * (person.x - robot.x), robot.y + k * (person.y - robot.y))
    }

    pub fn command(&mut self, directive: &Directive, snapshot: Option<&EnvironmentSnapshot>) -> Result<(), MoveError> {
        match *directive {
            Directive::ApproachPerson { identity } => {
                let person = snapshot
                    .and_then(|s| s.person(identity))
                    .ok_or(MoveError::TargetLost(identity))?;
                self.person_sum = (person.position.x, person.position.y, 1);
                self.missing = 0;
                self.fault_sent = false;
                self.state.mode = MoveMode::Approaching { identity };
                self.state.phase = Phase::Translate;
                self.state.target = Some(self.approach_goal(person.position));
            }
            Directive::ReturnHome => {
                let away = self.state.pose.position().distance(&self.home.position()) > self.cfg.arrival_tolerance;
                if self.state.mode != MoveMode::IdleAtHome || away {
                    self.state.mode = MoveMode::Returning;
                    self.state.phase = Phase::Translate;
                    self.state.target = Some(self.home.position());
                }
            }
            Directive::StartConversation { .. } | Directive::StopConversation => {}
        }
        Ok(())
    }

    /// Folds a snapshot into the target estimate. Reports a lost target
    /// once it has been missing for `lost_after` snapshots in a row.
    pub fn observe(&mut self, snap: &EnvironmentSnapshot) -> Option<MoveFault> {
        let MoveMode::Approaching { identity } = self.state.mode else {
            return None;
        };
        match snap.person(identity) {
            Some(p) => {
                self.missing = 0;
                self.person_sum.0 += p.position.x;
                self.person_sum.1 += p.position.y;
                self.person_sum.2 += 1;
                None
            }
            None => {
                self.missing += 1;
                if self.missing >= self.lost_after && !self.fault_sent {
                    self.fault_sent = true;
                    Some(MoveFault::TargetLost { t: snap.t, identity })
                } else {
                    None
                }
            }
        }
    }

    /// Dead-reckons the last command over `dt_ms`, or takes the measured
    /// pose when there is one, then computes the next command.
    pub fn step(&mut self, now: Millis, dt_ms: Millis, measured: Option<Pose>) -> MoverOutput {
        let dt = dt_ms as f64 / 1000.0;
        if let Some(pose) = measured {
            self.state.pose = pose;
        } else if dt_ms > 0 {
            self.state.pose = integrate(&self.state.pose, self.cmd.v, self.cmd.omega, dt);
        }
        self.cmd = self.control(dt.max(1e-3));
        MoverOutput {
            velocity: self.cmd,
            flags: MovingFlags::of(now, self.state.mode),
        }
    }

    fn control(&mut self, dt: f64) -> VelocityCommand {
        let navigating = matches!(self.state.mode, MoveMode::Approaching { .. } | MoveMode::Returning);
        if !navigating {
            return VelocityCommand::default();
        }
        if self.state.phase == Phase::Translate {
            if let (MoveMode::Approaching { .. }, Some(person)) = (self.state.mode, self.person_estimate()) {
                self.state.target = Some(self.approach_goal(person));
            }
            let goal = self.state.target.expect("navigating has a target");
            let dist = self.state.pose.position().distance(&goal);
            let (v, omega, err) = goto_control(&self.state.pose, &goal, dt, &self.params);
            // Inside tolerance, stop rather than spin for the last millimetres.
            let arrived = dist <= 1e-6
                || (dist <= self.cfg.arrival_tolerance && err.abs() >= self.params.heading_gate);
            if !arrived {
                return VelocityCommand { v, omega };
            }
            self.state.phase = Phase::Face;
        }
        let heading = match self.state.mode {
            MoveMode::Approaching { .. } => match self.person_estimate() {
                Some(p) => self.state.pose.position().bearing_to(&p),
                None => self.state.pose.heading,
            },
            _ => self.home.heading,
        };
        let (omega, err) = face_control(&self.state.pose, heading, dt, &self.params);
        if err.abs() > self.cfg.facing_tolerance {
            return VelocityCommand { v: 0.0, omega };
        }
        self.state.mode = match self.state.mode {
            MoveMode::Approaching { identity } => MoveMode::AtPerson { identity },
            _ => MoveMode::IdleAtHome,
        };
        self.state.target = None;
        self.state.phase = Phase::Translate;
        VelocityCommand::default()
    }
}
