use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::geometry::MazeGeometry;
use super::physics::norm;
use crate::{Error, Result};

pub const GRID_SIZE: usize = 201;

/// Contact resolution leaves the ball within this distance of a surface.
const PENETRATION_TOL: f64 = 1e-9;

/// Shortest collision-free path length to the goal disc, precomputed on an 8-connected
/// occupancy grid covering the board (edge cost = Euclidean step length).
#[derive(Clone, Debug)]
pub struct GeodesicField {
    n: usize,
    extent: f64,
    spacing: f64,
    goal_radius: f64,
    dist: Vec<f64>,
}

impl GeodesicField {
    pub fn build(geom: &MazeGeometry) -> Self {
        Self::with_resolution(geom, GRID_SIZE)
    }

    pub fn with_resolution(geom: &MazeGeometry, n: usize) -> Self {
        assert!(n >= 3);
        let extent = geom.board_radius;
        let spacing = 2.0 * extent / (n - 1) as f64;
        let node = |i: usize, j: usize| [-extent + j as f64 * spacing, -extent + i as f64 * spacing];
        let free: Vec<bool> = (0..n * n).map(|k| !geom.is_blocked(node(k / n, k % n))).collect();

        let mut dist = vec![f64::INFINITY; n * n];
        let mut heap = BinaryHeap::new();
        for k in 0..n * n {
            let p = node(k / n, k % n);
            if free[k] && norm(p) <= geom.center_goal_radius {
                dist[k] = 0.0;
                heap.push(Reverse((0u64, k)));
            }
        }
        let diag = spacing * std::f64::consts::SQRT_2;
        while let Some(Reverse((bits, k))) = heap.pop() {
            let d = f64::from_bits(bits);
            if d > dist[k] {
                continue;
            }
            let (i, j) = ((k / n) as isize, (k % n) as isize);
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= n as isize || nj >= n as isize {
                        continue;
                    }
                    let nk = ni as usize * n + nj as usize;
                    if !free[nk] {
                        continue;
                    }
                    let cost = if di != 0 && dj != 0 {
                        // no corner cutting
                        let a = ni as usize * n + j as usize;
                        let b = i as usize * n + nj as usize;
                        if !free[a] || !free[b] {
                            continue;
                        }
                        diag
                    } else {
                        spacing
                    };
                    let nd = d + cost;
                    if nd < dist[nk] {
                        dist[nk] = nd;
                        // non-negative floats order like their bit patterns
                        heap.push(Reverse((nd.to_bits(), nk)));
                    }
                }
            }
        }
        GeodesicField {
            n,
            extent,
            spacing,
            goal_radius: geom.center_goal_radius,
            dist,
        }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn node_distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Distance from `p`, which must be an admissible ball position.
    pub fn distance(&self, geom: &MazeGeometry, p: [f64; 2]) -> Result<f64> {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::Domain("non-finite position".into()));
        }
        if geom.wall_penetration(p) > PENETRATION_TOL {
            return Err(Error::Domain(format!(
                "position ({:.5}, {:.5}) is inside a wall or off the board",
                p[0], p[1]
            )));
        }
        if norm(p) <= self.goal_radius {
            return Ok(0.0);
        }
        let fi = (p[1] + self.extent) / self.spacing;
        let fj = (p[0] + self.extent) / self.spacing;
        let (bi, bj) = (fi.floor() as isize, fj.floor() as isize);
        for reach in 0..4isize {
            let mut best = f64::INFINITY;
            for i in (bi - reach)..=(bi + 1 + reach) {
                for j in (bj - reach)..=(bj + 1 + reach) {
                    if i < 0 || j < 0 || i >= self.n as isize || j >= self.n as isize {
                        continue;
                    }
                    let d = self.dist[i as usize * self.n + j as usize];
                    if d.is_finite() {
                        let q = [
                            -self.extent + j as f64 * self.spacing,
                            -self.extent + i as f64 * self.spacing,
                        ];
                        best = best.min(d + norm([p[0] - q[0], p[1] - q[1]]));
                    }
                }
            }
            if best.is_finite() {
                return Ok(best);
            }
        }
        Err(Error::Domain("position not connected to the goal region".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GeometryConfig;

    #[test]
    fn zero_at_center() {
        let g = MazeGeometry::build(&GeometryConfig::default()).unwrap();
        let f = GeodesicField::build(&g);
        assert_eq!(f.distance(&g, [0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn inside_wall_is_domain_error() {
        let g = MazeGeometry::build(&GeometryConfig::default()).unwrap();
        let f = GeodesicField::build(&g);
        // wall 1 at 0.085, gates centred at 0° and 180°: 90° is solid wall
        let err = f.distance(&g, [0.0, 0.085]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
