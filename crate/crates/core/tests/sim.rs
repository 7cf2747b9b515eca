use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bimgame::sim::{Action, BoardState, Direction, Maze, Task};

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn actions(seed: u64, n: usize) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Action::ALL[rng.gen_range(0..Action::COUNT)]).collect()
}

/// A ball resting just outside wall `k` (0-based), centred on its first gate, rolling inward.
fn at_gate(maze: &Maze, k: usize, speed: f64) -> BoardState {
    let g = maze.geometry();
    let w = &g.walls[k];
    let (c, s) = (w.gates[0].center.cos(), w.gates[0].center.sin());
    let r = w.radius + 1.5 * g.ball_radius;
    BoardState {
        ball_pos: [r * c, r * s],
        ball_vel: [-speed * c, -speed * s],
        ..Default::default()
    }
}

#[test]
fn reset_angles_are_spread() {
    let maze = Maze::default_five_ring();
    let angles: BTreeSet<u64> = (0..100)
        .map(|s| {
            let p = maze.reset(s).ball_pos;
            (p[1].atan2(p[0]) * 1e6).round() as i64 as u64
        })
        .collect();
    assert!(angles.len() >= 50, "{}", angles.len());
    for s in 0..100 {
        let st = maze.reset(s);
        assert_eq!(maze.ring_index(st.ball_pos), 1);
        assert!(st.radius() > maze.geometry().walls[0].radius);
        assert!(st.radius() < maze.geometry().board_radius - maze.geometry().ball_radius);
    }
}

#[test]
fn inward_gate_crossing_pays_one_and_advances_ring() {
    let maze = Maze::default_five_ring();
    for k in 0..maze.geometry().walls.len() {
        let mut s = at_gate(&maze, k, 0.2);
        let ring = maze.ring_index(s.ball_pos);
        let mut total = 0.0;
        let mut crossings = Vec::new();
        for _ in 0..20 {
            let out = maze.step(&s, Action::Noop, Task::Full).unwrap();
            total += out.reward;
            crossings.extend(out.events.gate_crossings);
            s = out.state;
            if maze.ring_index(s.ball_pos) != ring {
                break;
            }
        }
        assert_eq!(maze.ring_index(s.ball_pos), ring + 1, "wall {k}");
        assert_eq!(total, 1.0);
        assert_eq!(crossings.len(), 1);
        assert_eq!(crossings[0].wall, k + 1);
        assert_eq!(crossings[0].direction, Direction::Inward);
    }
}

#[test]
fn ball_driven_into_a_wall_stays_outside_it() {
    let maze = Maze::default_five_ring();
    let g = maze.geometry();
    // opposite the first gate of wall 1, tilted hard toward the center
    let a = g.walls[0].gates[0].center + std::f64::consts::PI / 2.0;
    let r = g.walls[0].radius + 1.5 * g.ball_radius;
    let mut s = BoardState {
        ball_pos: [r * a.cos(), r * a.sin()],
        ball_vel: [-0.5 * a.cos(), -0.5 * a.sin()],
        ..Default::default()
    };
    let push = if a.cos() > 0.0 { Action::TiltXMinus } else { Action::TiltXPlus };
    let mut contacts = 0;
    for i in 0..1000 {
        let o = maze.step(&s, if i < 40 { push } else { Action::Noop }, Task::Full).unwrap();
        contacts += o.events.wall_contacts;
        s = o.state;
        assert!(g.wall_penetration(s.ball_pos) <= 1e-9, "step {i}: {s:?}");
    }
    assert!(contacts > 0);
}

#[test]
fn geodesic_prefers_the_gate_side() {
    let maze = Maze::default_five_ring();
    let g = maze.geometry();
    let w = &g.walls[0];
    let r = w.radius + 2.0 * g.ball_radius;
    let c = w.gates[0].center;
    let near = maze.geodesic_distance([r * c.cos(), r * c.sin()]).unwrap();
    // the angle farthest from every gate of this wall
    let far_angle = (0..3600)
        .map(|i| i as f64 * std::f64::consts::TAU / 3600.0)
        .max_by(|a, b| {
            let gap = |x: f64| {
                w.gates
                    .iter()
                    .map(|gt| {
                        let d = (x - gt.center).rem_euclid(std::f64::consts::TAU);
                        d.min(std::f64::consts::TAU - d)
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            gap(*a).total_cmp(&gap(*b))
        })
        .unwrap();
    let far = maze.geodesic_distance([r * far_angle.cos(), r * far_angle.sin()]).unwrap();
    assert!(near < far, "{near} vs {far}");
    assert_eq!(maze.geodesic_distance([0.0, 0.0]).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_is_bit_exact(seed in 0u64..10_000) {
        let maze = Maze::desk_three_ring();
        let acts = actions(seed, 200);
        let run = || {
            let mut s = maze.reset(seed);
            let mut out = Vec::new();
            for &a in &acts {
                let o = maze.step(&s, a, Task::Full).unwrap();
                out.push((o.state.to_array().map(f64::to_bits), o.reward.to_bits()));
                s = o.state;
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn containment_and_full_reward_is_ring_change(seed in 0u64..10_000) {
        let maze = Maze::default_five_ring();
        let g = maze.geometry();
        let mut s = maze.reset(seed);
        let ring0 = maze.ring_index(s.ball_pos);
        let mut total = 0.0;
        for a in actions(seed, 300) {
            let o = maze.step(&s, a, Task::Full).unwrap();
            total += o.reward;
            s = o.state;
            prop_assert!(g.wall_penetration(s.ball_pos) <= 1e-9);
            prop_assert!(s.radius() <= g.max_ball_distance() + 1e-9);
            prop_assert!(s.tilt.iter().all(|t| t.abs() <= maze.physics().tilt_max() + 1e-15));
        }
        prop_assert_eq!(total, maze.ring_index(s.ball_pos) as f64 - ring0 as f64);
    }

    #[test]
    fn mirror_symmetry(seed in 0u64..10_000) {
        let maze = Maze::default_five_ring();
        let mirror = maze.mirrored();
        let mut s = maze.reset(seed);
        let mut m = s.mirrored();
        for a in actions(seed, 100) {
            s = maze.step(&s, a, Task::Full).unwrap().state;
            m = mirror.step(&m, a.mirrored(), Task::Full).unwrap().state;
            let e = s.mirrored();
            prop_assert!(norm([e.ball_pos[0] - m.ball_pos[0], e.ball_pos[1] - m.ball_pos[1]]) < 1e-9);
            prop_assert!(norm([e.ball_vel[0] - m.ball_vel[0], e.ball_vel[1] - m.ball_vel[1]]) < 1e-9);
        }
    }

    #[test]
    fn friction_dissipates_on_a_level_board(
        angle in 0.0..std::f64::consts::TAU,
        heading in 0.0..std::f64::consts::TAU,
        speed in 0.0..0.3f64,
    ) {
        let maze = Maze::default_five_ring();
        let g = maze.geometry();
        // middle of the ring between walls 2 and 3
        let r = 0.5 * (g.walls[1].radius + g.walls[2].radius);
        let mut s = BoardState {
            ball_pos: [r * angle.cos(), r * angle.sin()],
            ball_vel: [speed * heading.cos(), speed * heading.sin()],
            ..Default::default()
        };
        for _ in 0..20 {
            let o = maze.step(&s, Action::Noop, Task::Full).unwrap();
            if o.events.wall_contacts > 0 {
                break;
            }
            prop_assert!(norm(o.state.ball_vel) <= norm(s.ball_vel));
            s = o.state;
        }
    }

    #[test]
    fn geodesic_dominates_radial_lower_bound(x in -0.1..0.1f64, y in -0.1..0.1f64) {
        let maze = Maze::default_five_ring();
        let g = maze.geometry();
        prop_assume!(norm([x, y]) <= g.max_ball_distance() && !g.is_blocked([x, y]));
        if let Ok(d) = maze.geodesic_distance([x, y]) {
            prop_assert!(d >= norm([x, y]) - g.center_goal_radius - 1e-12);
        }
    }
}
