use serde::{Deserialize, Serialize};

use super::geometry::{MazeGeometry, CONTACT_SLACK};
use super::task::{Direction, GateCrossing, StepEvents, Task};

/// Physical constants and integration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub gravity: f64,
    /// Viscous rolling friction coefficient (1/s).
    pub rolling_friction: f64,
    /// Below this speed (m/s) the ball may stick.
    pub stick_speed: f64,
    /// ... provided the driving acceleration (m/s²) is also below this.
    pub stick_accel: f64,
    pub restitution: f64,
    /// Fraction of tangential velocity removed by a wall impact.
    pub tangential_damping: f64,
    /// Control interval (s).
    pub dt: f64,
    pub substeps: u32,
    pub tilt_max_deg: f64,
    pub tilt_step_deg: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            gravity: 9.81,
            rolling_friction: 0.3,
            stick_speed: 1e-4,
            stick_accel: 0.05,
            restitution: 0.3,
            tangential_damping: 0.2,
            dt: 0.05,
            substeps: 10,
            tilt_max_deg: 5.0,
            tilt_step_deg: 1.0,
        }
    }
}

impl Physics {
    pub fn tilt_max(&self) -> f64 {
        self.tilt_max_deg.to_radians()
    }

    pub fn tilt_step(&self) -> f64 {
        self.tilt_step_deg.to_radians()
    }
}

/// The five discrete controls: ±1° about either board axis, or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    TiltXPlus,
    TiltXMinus,
    TiltYPlus,
    TiltYMinus,
    Noop,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::TiltXPlus,
        Action::TiltXMinus,
        Action::TiltYPlus,
        Action::TiltYMinus,
        Action::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (axis, sign) of the tilt change, `None` for no-op.
    pub(crate) fn tilt_delta(self) -> Option<(usize, f64)> {
        match self {
            Action::TiltXPlus => Some((0, 1.0)),
            Action::TiltXMinus => Some((0, -1.0)),
            Action::TiltYPlus => Some((1, 1.0)),
            Action::TiltYMinus => Some((1, -1.0)),
            Action::Noop => None,
        }
    }

    /// Counterpart under reflection across the x-axis.
    pub fn mirrored(self) -> Action {
        match self {
            Action::TiltYPlus => Action::TiltYMinus,
            Action::TiltYMinus => Action::TiltYPlus,
            a => a,
        }
    }
}

/// Dynamic state of the board. `tilt[i]` drives the gravity component along axis `i`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BoardState {
    pub ball_pos: [f64; 2],
    pub ball_vel: [f64; 2],
    pub tilt: [f64; 2],
    pub step_count: u64,
}

impl BoardState {
    pub fn radius(&self) -> f64 {
        norm(self.ball_pos)
    }

    pub fn is_finite(&self) -> bool {
        self.ball_pos
            .iter()
            .chain(&self.ball_vel)
            .chain(&self.tilt)
            .all(|v| v.is_finite())
    }

    pub fn mirrored(&self) -> Self {
        BoardState {
            ball_pos: [self.ball_pos[0], -self.ball_pos[1]],
            ball_vel: [self.ball_vel[0], -self.ball_vel[1]],
            tilt: [self.tilt[0], -self.tilt[1]],
            step_count: self.step_count,
        }
    }

    /// Flat (pos, vel, tilt) layout used by trajectory files.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.ball_pos[0],
            self.ball_pos[1],
            self.ball_vel[0],
            self.ball_vel[1],
            self.tilt[0],
            self.tilt[1],
        ]
    }

    pub fn from_array(a: [f64; 6], step_count: u64) -> Self {
        BoardState {
            ball_pos: [a[0], a[1]],
            ball_vel: [a[2], a[3]],
            tilt: [a[4], a[5]],
            step_count,
        }
    }
}

#[inline]
pub(crate) fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Normal velocity component along outward normal `n` must be non-negative after an impact
/// with a surface whose free side is along `n`.
#[inline]
fn impact(vel: &mut [f64; 2], n: [f64; 2], phys: &Physics) {
    let vn = vel[0] * n[0] + vel[1] * n[1];
    if vn < 0.0 {
        let vt = [vel[0] - vn * n[0], vel[1] - vn * n[1]];
        let keep = 1.0 - phys.tangential_damping;
        vel[0] = vt[0] * keep - phys.restitution * vn * n[0];
        vel[1] = vt[1] * keep - phys.restitution * vn * n[1];
    }
}

const RESOLVE_PASSES: usize = 4;

/// Pushes the ball out of the board rim, wall arcs and gate end points.
/// `prev` is the last admissible position and decides which side of a wall the ball belongs to.
/// Returns the number of contacts resolved.
pub(crate) fn resolve_contacts(
    geom: &MazeGeometry,
    phys: &Physics,
    prev: [f64; 2],
    pos: &mut [f64; 2],
    vel: &mut [f64; 2],
) -> u32 {
    let rb = geom.ball_radius;
    let reach = rb - CONTACT_SLACK;
    let prev_r = norm(prev);
    let mut contacts = 0;
    for _ in 0..RESOLVE_PASSES {
        let mut touched = false;
        let r = norm(*pos);
        let limit = geom.max_ball_distance();
        if r > limit + CONTACT_SLACK {
            let n = [pos[0] / r, pos[1] / r];
            *pos = [n[0] * limit, n[1] * limit];
            impact(vel, [-n[0], -n[1]], phys);
            touched = true;
            contacts += 1;
        }
        for wall in &geom.walls {
            let r = norm(*pos);
            if (r - wall.radius).abs() >= reach {
                // end points sit on the wall circle, so they are out of reach too
                continue;
            }
            if !wall.in_gate(*pos, r) {
                let n = [pos[0] / r, pos[1] / r];
                if prev_r >= wall.radius {
                    let target = wall.radius + rb;
                    *pos = [n[0] * target, n[1] * target];
                    impact(vel, n, phys);
                } else {
                    let target = wall.radius - rb;
                    *pos = [n[0] * target, n[1] * target];
                    impact(vel, [-n[0], -n[1]], phys);
                }
                touched = true;
                contacts += 1;
            }
            for gate in &wall.gates {
                for end in &gate.ends {
                    let d = [pos[0] - end[0], pos[1] - end[1]];
                    let dist = norm(d);
                    if dist < reach && dist > 0.0 {
                        let n = [d[0] / dist, d[1] / dist];
                        *pos = [end[0] + n[0] * rb, end[1] + n[1] * rb];
                        impact(vel, n, phys);
                        touched = true;
                        contacts += 1;
                    }
                }
            }
        }
        if !touched {
            return contacts;
        }
    }
    if geom.is_blocked(*pos) && !geom.is_blocked(prev) {
        // unresolved corner case: fall back to the last admissible position
        *pos = prev;
        *vel = [0.0, 0.0];
        contacts += 1;
    }
    contacts
}

/// Integrates one control interval after the action has been applied to the tilt.
/// Integration stops early at the substep where the task reaches its terminal condition.
pub(crate) fn integrate(
    geom: &MazeGeometry,
    phys: &Physics,
    task: Task,
    state: &mut BoardState,
    events: &mut StepEvents,
) {
    let h = phys.dt / phys.substeps as f64;
    let acc = [
        phys.gravity * state.tilt[0].sin(),
        phys.gravity * state.tilt[1].sin(),
    ];
    let drive = norm(acc);
    let c = phys.rolling_friction;
    for _ in 0..phys.substeps {
        let mut vel = state.ball_vel;
        if norm(vel) < phys.stick_speed && drive < phys.stick_accel {
            state.ball_vel = [0.0, 0.0];
            continue;
        }
        // semi-implicit Euler
        vel[0] += (acc[0] - c * vel[0]) * h;
        vel[1] += (acc[1] - c * vel[1]) * h;
        let prev = state.ball_pos;
        let mut pos = [prev[0] + vel[0] * h, prev[1] + vel[1] * h];
        events.wall_contacts += resolve_contacts(geom, phys, prev, &mut pos, &mut vel);
        state.ball_pos = pos;
        state.ball_vel = vel;

        let (r0, r1) = (norm(prev), norm(pos));
        for (k, wall) in geom.walls.iter().enumerate() {
            let outside_before = r0 >= wall.radius;
            let outside_after = r1 >= wall.radius;
            if outside_before != outside_after {
                let direction = if outside_before {
                    Direction::Inward
                } else {
                    Direction::Outward
                };
                events.gate_crossings.push(GateCrossing {
                    wall: k + 1,
                    direction,
                });
                if let Task::StepsToGo(goal) = task {
                    if goal == k + 1 && direction == Direction::Inward {
                        events.terminal = true;
                    }
                }
            }
        }
        if task == Task::Full && r1 < geom.center_goal_radius {
            events.terminal = true;
        }
        if events.terminal {
            break;
        }
    }
}
