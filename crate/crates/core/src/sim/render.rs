use std::path::Path;

use super::geometry::MazeGeometry;
use super::physics::{norm, BoardState};
use crate::Result;

pub const BACKGROUND: f64 = 0.0;
pub const WALL: f64 = 0.5;
pub const BALL: f64 = 1.0;

/// Top-down grayscale raster, row 0 at the top (+y), values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub image: Vec<f64>,
    /// (pos, vel, tilt) scaled to [−1, 1] when requested.
    pub state_vector: Option<[f64; 6]>,
}

impl Observation {
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.image[row * self.width + col]
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.image[y as usize * self.width + x as usize];
            image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        img.save(path)
            .map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Rasteriser with the static wall layer cached; per call only the ball is drawn. Tilt is
/// not drawn, it shows only through the ball's motion.
#[derive(Clone, Debug)]
pub struct Renderer {
    size: usize,
    extent: f64,
    ball_draw_radius: f64,
    base: Vec<f64>,
    max_speed: f64,
    tilt_max: f64,
}

impl Renderer {
    pub fn new(geom: &MazeGeometry, size: usize, tilt_max: f64) -> Self {
        assert!(size > 0, "render size must be positive");
        let extent = geom.board_radius;
        let pix = 2.0 * extent / size as f64;
        let mut base = vec![BACKGROUND; size * size];
        for row in 0..size {
            for col in 0..size {
                let p = pixel_center(extent, size, row, col);
                let r = norm(p);
                let on_wall = geom
                    .walls
                    .iter()
                    .any(|w| (r - w.radius).abs() <= 0.5 * pix && !w.in_gate(p, r));
                if on_wall {
                    base[row * size + col] = WALL;
                }
            }
        }
        Renderer {
            size,
            extent,
            // at coarse resolutions the disc is widened so it always covers a pixel center
            ball_draw_radius: geom.ball_radius.max(0.75 * pix),
            base,
            max_speed: 1.0,
            tilt_max,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Pixel rows/cols touched by a ball at `pos`, inclusive bounds.
    pub fn ball_bbox(&self, pos: [f64; 2]) -> (usize, usize, usize, usize) {
        let pix = 2.0 * self.extent / self.size as f64;
        let rd = self.ball_draw_radius;
        let to_col = |x: f64| ((x + self.extent) / pix).floor();
        let to_row = |y: f64| ((self.extent - y) / pix).floor();
        let clamp = |v: f64| v.clamp(0.0, (self.size - 1) as f64) as usize;
        (
            clamp(to_row(pos[1] + rd)),
            clamp(to_row(pos[1] - rd)),
            clamp(to_col(pos[0] - rd)),
            clamp(to_col(pos[0] + rd)),
        )
    }

    pub fn render_into(&self, state: &BoardState, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.base);
        let (r0, r1, c0, c1) = self.ball_bbox(state.ball_pos);
        let rd2 = self.ball_draw_radius * self.ball_draw_radius;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = pixel_center(self.extent, self.size, row, col);
                let dx = p[0] - state.ball_pos[0];
                let dy = p[1] - state.ball_pos[1];
                if dx * dx + dy * dy <= rd2 {
                    out[row * self.size + col] = BALL;
                }
            }
        }
    }

    pub fn render(&self, state: &BoardState) -> Observation {
        let mut image = Vec::with_capacity(self.size * self.size);
        self.render_into(state, &mut image);
        Observation {
            height: self.size,
            width: self.size,
            image,
            state_vector: None,
        }
    }

    pub fn render_with_state(&self, state: &BoardState) -> Observation {
        let mut obs = self.render(state);
        obs.state_vector = Some(self.state_vector(state));
        obs
    }

    pub fn state_vector(&self, s: &BoardState) -> [f64; 6] {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        [
            c(s.ball_pos[0] / self.extent),
            c(s.ball_pos[1] / self.extent),
            c(s.ball_vel[0] / self.max_speed),
            c(s.ball_vel[1] / self.max_speed),
            c(s.tilt[0] / self.tilt_max),
            c(s.tilt[1] / self.tilt_max),
        ]
    }
}

#[inline]
fn pixel_center(extent: f64, size: usize, row: usize, col: usize) -> [f64; 2] {
    let pix = 2.0 * extent / size as f64;
    [
        -extent + (col as f64 + 0.5) * pix,
        extent - (row as f64 + 0.5) * pix,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GeometryConfig;

    fn setup() -> (MazeGeometry, Renderer) {
        let g = MazeGeometry::build(&GeometryConfig::default()).unwrap();
        let r = Renderer::new(&g, 64, 5f64.to_radians());
        (g, r)
    }

    fn state_at(x: f64, y: f64) -> BoardState {
        BoardState {
            ball_pos: [x, y],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let (_, r) = setup();
        let s = state_at(0.03, -0.02);
        assert_eq!(r.render(&s), r.render(&s));
    }

    #[test]
    fn values_in_palette() {
        let (_, r) = setup();
        let obs = r.render(&state_at(0.0, 0.09));
        assert!(obs.image.iter().all(|&v| v == BACKGROUND || v == WALL || v == BALL));
        assert!(obs.image.iter().any(|&v| v == WALL));
    }

    #[test]
    fn ball_disc_is_fully_lit() {
        let (g, r) = setup();
        let s = state_at(0.011, 0.004);
        let obs = r.render(&s);
        let pix = 2.0 * g.board_radius / 64.0;
        let mut lit = Vec::new();
        for row in 0..64 {
            for col in 0..64 {
                let p = pixel_center(g.board_radius, 64, row, col);
                if norm([p[0] - s.ball_pos[0], p[1] - s.ball_pos[1]]) <= g.ball_radius.max(0.75 * pix) {
                    lit.push(obs.pixel(row, col));
                }
            }
        }
        assert!(!lit.is_empty());
        assert_eq!(lit.iter().sum::<f64>() / lit.len() as f64, 1.0);
    }

    #[test]
    fn position_change_only_touches_ball_boxes() {
        let (_, r) = setup();
        let a = state_at(0.09, 0.0);
        let b = state_at(-0.01, 0.005);
        let (ia, ib) = (r.render(&a), r.render(&b));
        let boxes = [r.ball_bbox(a.ball_pos), r.ball_bbox(b.ball_pos)];
        for row in 0..64 {
            for col in 0..64 {
                let inside = boxes
                    .iter()
                    .any(|&(r0, r1, c0, c1)| (r0..=r1).contains(&row) && (c0..=c1).contains(&col));
                if !inside {
                    assert_eq!(ia.pixel(row, col), ib.pixel(row, col));
                }
            }
        }
        assert_ne!(ia, ib);
    }

    #[test]
    fn tilt_is_not_drawn() {
        let (_, r) = setup();
        let mut a = state_at(0.05, 0.05);
        let flat = r.render(&a);
        a.tilt = [0.05, -0.03];
        assert_eq!(flat, r.render(&a));
    }

    #[test]
    fn coarse_raster_still_shows_ball() {
        let g = MazeGeometry::build(&GeometryConfig::desk_three_ring()).unwrap();
        let r = Renderer::new(&g, 16, 0.1);
        for k in 0..50 {
            let a = k as f64 * 0.37;
            let obs = r.render(&state_at(0.0675 * a.cos(), 0.0675 * a.sin()));
            assert!(obs.image.iter().any(|&v| v == BALL));
        }
    }
}
