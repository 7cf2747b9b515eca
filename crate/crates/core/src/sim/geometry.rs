use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::util::sha256_hex;
use super::physics::norm;
use crate::{Error, Result};

/// One gate as written in a config file, angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub center_deg: f64,
    pub half_width_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallConfig {
    pub radius: f64,
    pub gates: Vec<GateConfig>,
}

/// Static board description as read from a key-value config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub board_radius: f64,
    pub ball_radius: f64,
    pub center_goal_radius: f64,
    pub walls: Vec<WallConfig>,
}

impl GeometryConfig {
    /// Evenly spaced gates on every wall, rotated by `offset_deg` from one wall to the next.
    pub fn rings(
        board_radius: f64,
        ball_radius: f64,
        center_goal_radius: f64,
        radii: &[f64],
        gates_per_wall: usize,
        half_width_deg: f64,
        offset_deg: f64,
    ) -> Self {
        let walls = radii
            .iter()
            .enumerate()
            .map(|(k, &radius)| WallConfig {
                radius,
                gates: (0..gates_per_wall)
                    .map(|j| GateConfig {
                        center_deg: (k as f64 * offset_deg + j as f64 * 360.0 / gates_per_wall as f64)
                            .rem_euclid(360.0),
                        half_width_deg,
                    })
                    .collect(),
            })
            .collect();
        GeometryConfig {
            board_radius,
            ball_radius,
            center_goal_radius,
            walls,
        }
    }

    /// Five ring walls with two gates each, adjacent walls rotated by 90°.
    pub fn default_five_ring() -> Self {
        Self::rings(0.10, 0.005, 0.015, &[0.085, 0.07, 0.055, 0.04, 0.025], 2, 36.0, 90.0)
    }

    /// Reduced three-ring board used for desk-scale learning runs.
    pub fn desk_three_ring() -> Self {
        Self::rings(0.10, 0.005, 0.015, &[0.08, 0.055, 0.03], 2, 36.0, 90.0)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" | "five-ring" => Ok(Self::default_five_ring()),
            "desk" | "three-ring" => Ok(Self::desk_three_ring()),
            other => Err(Error::Config(format!("unknown geometry preset '{other}'"))),
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self::default_five_ring()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    /// Center angle in [0, 2π).
    pub center: f64,
    pub half_width: f64,
    pub(crate) dir: [f64; 2],
    pub(crate) cos_half: f64,
    /// Wall end points bounding the opening.
    pub(crate) ends: [[f64; 2]; 2],
}

impl Gate {
    fn new(radius: f64, center: f64, half_width: f64) -> Self {
        let (lo, hi) = (center - half_width, center + half_width);
        Gate {
            center,
            half_width,
            dir: [center.cos(), center.sin()],
            cos_half: half_width.cos(),
            ends: [
                [radius * lo.cos(), radius * lo.sin()],
                [radius * hi.cos(), radius * hi.sin()],
            ],
        }
    }

    /// Whether the direction of `p` (with norm `r`) lies inside the angular window.
    #[inline]
    pub(crate) fn contains_dir(&self, p: [f64; 2], r: f64) -> bool {
        p[0] * self.dir[0] + p[1] * self.dir[1] >= r * self.cos_half
    }

    fn mirrored(&self) -> Self {
        Gate {
            center: if self.center == 0.0 { 0.0 } else { TAU - self.center },
            half_width: self.half_width,
            dir: [self.dir[0], -self.dir[1]],
            cos_half: self.cos_half,
            ends: [
                [self.ends[0][0], -self.ends[0][1]],
                [self.ends[1][0], -self.ends[1][1]],
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WallRing {
    pub radius: f64,
    pub gates: Vec<Gate>,
}

impl WallRing {
    #[inline]
    pub(crate) fn in_gate(&self, p: [f64; 2], r: f64) -> bool {
        self.gates.iter().any(|g| g.contains_dir(p, r))
    }
}

/// Overlap (m) below which a resting contact is not re-resolved. Pushing the ball out to
/// exactly `R + r_ball` can land a rounding error inside the wall.
pub const CONTACT_SLACK: f64 = 1e-12;

/// Validated static board.
#[derive(Clone, Debug, PartialEq)]
pub struct MazeGeometry {
    pub board_radius: f64,
    pub ball_radius: f64,
    pub center_goal_radius: f64,
    pub walls: Vec<WallRing>,
    config: GeometryConfig,
}

impl MazeGeometry {
    pub fn build(config: &GeometryConfig) -> Result<Self> {
        let GeometryConfig {
            board_radius,
            ball_radius,
            center_goal_radius,
            ref walls,
        } = *config;
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(board_radius) || !finite_pos(ball_radius) || !finite_pos(center_goal_radius) {
            return Err(Error::Config("board, ball and goal radii must be positive".into()));
        }
        if walls.is_empty() {
            return Err(Error::Config("geometry needs at least one wall".into()));
        }
        let mut rings = Vec::with_capacity(walls.len());
        for (i, wall) in walls.iter().enumerate() {
            let idx = i + 1;
            if !finite_pos(wall.radius) {
                return Err(Error::Config(format!("wall {idx}: radius must be positive")));
            }
            if i > 0 && wall.radius >= walls[i - 1].radius {
                return Err(Error::Config(format!(
                    "wall {idx}: radii not decreasing ({} after {})",
                    wall.radius,
                    walls[i - 1].radius
                )));
            }
            if wall.radius <= center_goal_radius + ball_radius {
                return Err(Error::Config(format!(
                    "wall {idx}: radius {} must exceed center_goal_radius + ball_radius",
                    wall.radius
                )));
            }
            if i == 0 && wall.radius + ball_radius >= board_radius - ball_radius {
                return Err(Error::Config(format!(
                    "wall {idx}: outermost ring leaves no room for the ball"
                )));
            }
            if wall.gates.is_empty() {
                return Err(Error::Config(format!("wall {idx}: needs at least one gate")));
            }
            let min_half = (ball_radius / wall.radius).asin();
            let mut gates = Vec::with_capacity(wall.gates.len());
            for g in &wall.gates {
                let half = g.half_width_deg.to_radians();
                if !(half.is_finite() && half > 0.0) {
                    return Err(Error::Config(format!("wall {idx}: gate half width must be positive")));
                }
                if half <= min_half {
                    return Err(Error::Config(format!(
                        "wall {idx}: gate at {}° too narrow for the ball",
                        g.center_deg
                    )));
                }
                let center = g.center_deg.to_radians().rem_euclid(TAU);
                gates.push(Gate::new(wall.radius, center, half));
            }
            // windows must not overlap, including across the 0/2π seam
            let mut order: Vec<usize> = (0..gates.len()).collect();
            order.sort_by(|&a, &b| gates[a].center.total_cmp(&gates[b].center));
            for w in 0..order.len() {
                let a = &gates[order[w]];
                let b = &gates[order[(w + 1) % order.len()]];
                let gap = if order.len() == 1 {
                    TAU
                } else {
                    (b.center - a.center).rem_euclid(TAU)
                };
                if gap < a.half_width + b.half_width || (order.len() == 1 && a.half_width >= PI) {
                    return Err(Error::Config(format!("wall {idx}: overlapping gates")));
                }
            }
            rings.push(WallRing {
                radius: wall.radius,
                gates,
            });
        }
        Ok(MazeGeometry {
            board_radius,
            ball_radius,
            center_goal_radius,
            walls: rings,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.config
    }

    pub fn n_walls(&self) -> usize {
        self.walls.len()
    }

    /// Largest admissible distance of the ball center from the board center.
    pub fn max_ball_distance(&self) -> f64 {
        self.board_radius - self.ball_radius
    }

    /// Content hash of the board definition, stable across runs.
    pub fn hash(&self) -> String {
        let text = toml::to_string(&self.config).unwrap_or_default();
        sha256_hex(text.as_bytes())
    }

    /// Reflection across the x-axis. Stored gate directions are negated exactly so
    /// mirrored physics reproduces mirrored trajectories bit for bit.
    pub fn mirrored(&self) -> Self {
        let walls = self
            .walls
            .iter()
            .map(|w| WallRing {
                radius: w.radius,
                gates: w.gates.iter().map(Gate::mirrored).collect(),
            })
            .collect();
        let mut config = self.config.clone();
        for w in &mut config.walls {
            for g in &mut w.gates {
                g.center_deg = (360.0 - g.center_deg).rem_euclid(360.0);
            }
        }
        MazeGeometry {
            walls,
            config,
            ..*self
        }
    }

    /// Whether a ball centred at `p` overlaps any wall segment or end point, or leaves the board.
    pub fn is_blocked(&self, p: [f64; 2]) -> bool {
        let r = norm(p);
        if r > self.max_ball_distance() + CONTACT_SLACK {
            return true;
        }
        let rb = self.ball_radius - CONTACT_SLACK;
        for w in &self.walls {
            if (r - w.radius).abs() < rb && !w.in_gate(p, r) {
                return true;
            }
            for g in &w.gates {
                for e in &g.ends {
                    if norm([p[0] - e[0], p[1] - e[1]]) < rb {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Penetration depth of a ball at `p` into the rim, any wall annulus outside the gate
    /// windows, or any gate end point. Zero for admissible positions.
    pub fn wall_penetration(&self, p: [f64; 2]) -> f64 {
        let r = norm(p);
        let mut worst = (r - self.max_ball_distance()).max(0.0);
        for w in &self.walls {
            let gap = (r - w.radius).abs();
            if gap < self.ball_radius && !w.in_gate(p, r) {
                worst = worst.max(self.ball_radius - gap);
            }
            for g in &w.gates {
                for e in &g.ends {
                    let d = norm([p[0] - e[0], p[1] - e[1]]);
                    worst = worst.max(self.ball_radius - d);
                }
            }
        }
        worst
    }

    /// CSV dump: one row per gate with its wall index and radius.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("wall,radius,gate,center_deg,half_width_deg,window_start_deg,window_end_deg\n");
        for (i, w) in self.walls.iter().enumerate() {
            for (j, g) in w.gates.iter().enumerate() {
                let c = g.center.to_degrees();
                let h = g.half_width.to_degrees();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    i + 1,
                    w.radius,
                    j,
                    c,
                    h,
                    (c - h).rem_euclid(360.0),
                    (c + h).rem_euclid(360.0)
                ));
            }
        }
        out
    }
}
