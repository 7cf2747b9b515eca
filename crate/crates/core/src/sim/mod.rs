//! Tilting circular maze: geometry, deterministic physics, task rules and rendering.
//!
//! A [`Maze`] bundles an immutable [`MazeGeometry`] with its [`Physics`] constants and is
//! cheap to share read-only across threads. [`Maze::step`] is a pure function of
//! `(state, action, task)`, so any rollout can be replayed bit-exactly.

mod geodesic;
mod geometry;
mod physics;
mod render;
mod task;

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use geodesic::{GeodesicField, GRID_SIZE};
pub use geometry::{Gate, GateConfig, GeometryConfig, MazeGeometry, WallConfig, WallRing};
pub use physics::{Action, BoardState, Physics};
pub use render::{Observation, Renderer, BACKGROUND, BALL, WALL};
pub use task::{Direction, GateCrossing, StepEvents, Task};

use crate::util::rng_for;
use physics::norm;
use crate::{Error, Result};

/// Geometry and physics as stored in a key-value (TOML) config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MazeConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub physics: Physics,
}

impl MazeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("maze config serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: BoardState,
    pub reward: f64,
    pub events: StepEvents,
}

/// The simulator.
#[derive(Debug)]
pub struct Maze {
    geometry: MazeGeometry,
    physics: Physics,
    geodesic: OnceLock<GeodesicField>,
}

impl Clone for Maze {
    fn clone(&self) -> Self {
        Maze {
            geometry: self.geometry.clone(),
            physics: self.physics,
            geodesic: self.geodesic.clone(),
        }
    }
}

impl Maze {
    pub fn new(geometry: MazeGeometry, physics: Physics) -> Result<Self> {
        if !(physics.dt > 0.0 && physics.substeps > 0 && physics.tilt_max_deg > 0.0 && physics.tilt_step_deg > 0.0) {
            return Err(Error::Config("dt, substeps and tilt limits must be positive".into()));
        }
        Ok(Maze {
            geometry,
            physics,
            geodesic: OnceLock::new(),
        })
    }

    pub fn from_config(cfg: &MazeConfig) -> Result<Self> {
        Self::new(MazeGeometry::build(&cfg.geometry)?, cfg.physics)
    }

    pub fn default_five_ring() -> Self {
        Self::from_config(&MazeConfig::default()).expect("default maze is valid")
    }

    pub fn desk_three_ring() -> Self {
        Self::from_config(&MazeConfig {
            geometry: GeometryConfig::desk_three_ring(),
            physics: Physics::default(),
        })
        .expect("desk maze is valid")
    }

    pub fn geometry(&self) -> &MazeGeometry {
        &self.geometry
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn config(&self) -> MazeConfig {
        MazeConfig {
            geometry: self.geometry.config().clone(),
            physics: self.physics,
        }
    }

    /// Hash over geometry and physics.
    pub fn hash(&self) -> String {
        crate::util::sha256_hex(self.config().to_toml_string().as_bytes())
    }

    pub fn mirrored(&self) -> Self {
        Maze {
            geometry: self.geometry.mirrored(),
            physics: self.physics,
            geodesic: OnceLock::new(),
        }
    }

    /// Ball at rest at a seeded uniform angle in the middle of the outermost ring band.
    pub fn reset(&self, seed: u64) -> BoardState {
        let mut rng = rng_for(seed, &[0x7e5e7]);
        let angle: f64 = rng.gen_range(0.0..TAU);
        let g = &self.geometry;
        let r = 0.5 * (g.walls[0].radius + g.ball_radius + g.max_ball_distance());
        BoardState {
            ball_pos: [r * angle.cos(), r * angle.sin()],
            ball_vel: [0.0, 0.0],
            tilt: [0.0, 0.0],
            step_count: 0,
        }
    }

    pub fn apply_tilt(&self, tilt: [f64; 2], action: Action) -> [f64; 2] {
        let mut tilt = tilt;
        let step = self.physics.tilt_step();
        let max = self.physics.tilt_max();
        if let Some((axis, sign)) = action.tilt_delta() {
            tilt[axis] = (tilt[axis] + sign * step).clamp(-max, max);
        }
        tilt
    }

    /// One control interval: tilt update, then `substeps` semi-implicit Euler substeps with
    /// contact resolution and gate-crossing detection.
    pub fn step(&self, state: &BoardState, action: Action, task: Task) -> Result<StepOutcome> {
        if !state.is_finite() {
            return Err(Error::Integration(format!("non-finite input state {state:?}")));
        }
        let mut next = *state;
        next.tilt = self.apply_tilt(state.tilt, action);
        let mut events = StepEvents::default();
        physics::integrate(&self.geometry, &self.physics, task, &mut next, &mut events);
        if !next.is_finite() {
            return Err(Error::Integration(format!("integration produced {next:?}")));
        }
        next.step_count = state.step_count + 1;
        let reward = task.reward(&events);
        Ok(StepOutcome {
            state: next,
            reward,
            events,
        })
    }

    pub fn radial_distance(state: &BoardState) -> f64 {
        state.radius()
    }

    pub fn geodesic_field(&self) -> &GeodesicField {
        self.geodesic.get_or_init(|| GeodesicField::build(&self.geometry))
    }

    pub fn geodesic_distance(&self, position: [f64; 2]) -> Result<f64> {
        self.geodesic_field().distance(&self.geometry, position)
    }

    /// 1 for the outermost band, `n_walls + 1` for the central region.
    pub fn ring_index(&self, position: [f64; 2]) -> usize {
        let r = norm(position);
        1 + self.geometry.walls.iter().filter(|w| r < w.radius).count()
    }

    pub fn is_goal(&self, state: &BoardState, task: Task) -> bool {
        match task {
            Task::Full => state.radius() < self.geometry.center_goal_radius,
            Task::StepsToGo(k) => self.ring_index(state.ball_pos) > k,
        }
    }

    pub fn renderer(&self, size: usize) -> Renderer {
        Renderer::new(&self.geometry, size, self.physics.tilt_max())
    }

    pub fn render(&self, state: &BoardState, size: usize) -> Observation {
        self.renderer(size).render(state)
    }
}
