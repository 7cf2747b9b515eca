//! End-to-end acceptance run. Prints one `criterion N: PASS|FAIL` line per criterion and
//! exits nonzero if any fails. `ACCEPTANCE_ONLY=2,5` restricts the run to a subset.
//! Artifacts (histograms, curves, checkpoints) land in `$CARGO_TARGET_TMPDIR/acceptance`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bimgame::expert::{
    build_dataset, distance, generate_trajectory, length_histogram, shooting_step, Dataset, DatasetOptions,
    DistanceMode, Sampling, ShootingConfig,
};
use bimgame::harness::plot::{bar_chart, line_chart, save_png, series_from_csv};
use bimgame::harness::{gradcheck_suite, median, speedup_report};
use bimgame::imitation::{
    dagger, dataset_episodes, pretrain, renderer_for, train_episodes, DaggerConfig, Episode, LossTerms,
    PretrainConfig,
};
use bimgame::neural::{Architecture, NetworkParams};
use bimgame::rl::chain::{random_potential, train_tabular, ChainMdp, TabularConfig};
use bimgame::rl::{
    evaluate_policy, train, A3CConfig, A3CResult, EpisodeEnv, Init, PotentialTracker,
};
use bimgame::sim::{Action, BoardState, Maze, Task};

// criterion 1
const ROLLOUT_SEEDS: u64 = 100;
const ROLLOUT_STEPS: usize = 1000;
const MAX_PENETRATION: f64 = 1e-9;
// criterion 2
const MPC_EPISODES: u64 = 100;
const MPC_MAX_STEPS: usize = 5000;
const MPC_MIN_SOLVED: usize = 90;
// criterion 3
const ORACLE_STATES: usize = 100;
// criterion 4
const GRAD_TOL: f64 = 1e-4;
// criterion 5
const SHAPING_EPISODES: u64 = 50;
const TELESCOPE_TOL: f64 = 1e-10;
// criterion 6
const DESK_TRAJECTORIES: usize = 200;
const DESK_MAX_STEPS: usize = 3000;
const MIN_TEST_ACCURACY: f64 = 0.22;
const OVERFIT_TRAJECTORIES: usize = 10;
const OVERFIT_EPOCHS: usize = 250;
const MIN_OVERFIT_ACCURACY: f64 = 0.80;
// criterion 7
const RL_SEEDS: [u64; 3] = [0, 1, 2];
const RL_BUDGET: u64 = 1_000_000;
const THRESHOLD_FRACTION: f64 = 0.8;
const MIN_SPEEDUP: f64 = 1.67;
// criterion 8
const CHAIN_POTENTIALS: u64 = 5;
// criterion 9
const DAGGER_ITERATIONS: usize = 10;
// criterion 10
const SPARSITY_TRANSITIONS: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn bits(s: &BoardState) -> [u64; 6] {
    s.to_array().map(f64::to_bits)
}

fn random_action(rng: &mut impl Rng) -> Action {
    Action::ALL[rng.gen_range(0..Action::COUNT)]
}

/// Random-action rollout from `seed`, checking containment after every step.
fn rollout(maze: &Maze, seed: u64) -> (Vec<[u64; 6]>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = maze.reset(seed);
    let mut states = vec![bits(&s)];
    let mut worst = 0.0f64;
    for _ in 0..ROLLOUT_STEPS {
        s = maze.step(&s, random_action(&mut rng), Task::Full).unwrap().state;
        worst = worst.max(maze.geometry().wall_penetration(s.ball_pos));
        assert!(s.radius() <= maze.geometry().max_ball_distance() + MAX_PENETRATION);
        states.push(bits(&s));
    }
    (states, worst)
}

fn criterion_1() -> Outcome {
    let maze = Maze::default_five_ring();
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for seed in 0..ROLLOUT_SEEDS {
        let (a, pa) = rollout(&maze, seed);
        let (b, _) = rollout(&maze, seed);
        mismatches += (a != b) as usize;
        worst = worst.max(pa);
    }
    outcome(
        mismatches == 0 && worst <= MAX_PENETRATION,
        format!("{ROLLOUT_SEEDS} seeds x {ROLLOUT_STEPS} steps, {mismatches} non-reproducible, max penetration {worst:.3e} m"),
    )
}

fn criterion_2(out: &Path) -> Outcome {
    let maze = Maze::default_five_ring();
    let cfg = ShootingConfig { candidates: 10, horizon: 20, ..Default::default() };
    let trajs: Vec<_> = (0..MPC_EPISODES)
        .map(|seed| generate_trajectory(&maze, Task::Full, &cfg, seed, MPC_MAX_STEPS).unwrap())
        .collect();
    let solved: Vec<_> = trajs.iter().filter(|t| t.solved).cloned().collect();
    let replay_ok = trajs.iter().take(10).all(|t| t.replays_exactly(&maze, Task::Full).unwrap());
    let hist = length_histogram(&solved, 100).unwrap();
    fs::write(out.join("mpc_lengths.csv"), hist.to_csv()).unwrap();
    let bars: Vec<(f64, f64, f64)> = hist
        .bins
        .iter()
        .map(|&(a, c)| (a as f64, (a + hist.bin_width) as f64, c as f64))
        .collect();
    save_png(&bar_chart(&bars), out.join("mpc_lengths.png")).unwrap();
    let mut lens: Vec<f64> = solved.iter().map(|t| t.len() as f64).collect();
    lens.sort_by(f64::total_cmp);
    outcome(
        solved.len() >= MPC_MIN_SOLVED && hist.total() == solved.len() && replay_ok,
        format!(
            "{}/{MPC_EPISODES} solved within {MPC_MAX_STEPS} steps (need {MPC_MIN_SOLVED}), median length {}, histogram in mpc_lengths.csv",
            solved.len(),
            median(&lens).unwrap_or(f64::NAN)
        ),
    )
}

/// Brute force over the five actions: largest d(s) - d(s'), lowest index on ties.
fn brute_force_best(maze: &Maze, s: &BoardState, mode: DistanceMode) -> Action {
    let d0 = distance(maze, s, mode).unwrap();
    let mut best = (Action::ALL[0], f64::NEG_INFINITY);
    for a in Action::ALL {
        let next = maze.step(s, a, Task::Full).unwrap().state;
        let gain = d0 - distance(maze, &next, mode).unwrap();
        if gain > best.1 {
            best = (a, gain);
        }
    }
    best.0
}

fn criterion_3() -> Outcome {
    let maze = Maze::default_five_ring();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agree = [0usize; 2];
    for i in 0..ORACLE_STATES {
        let mut s = maze.reset(i as u64);
        for _ in 0..rng.gen_range(0..400) {
            s = maze.step(&s, random_action(&mut rng), Task::Full).unwrap().state;
        }
        for (k, mode) in [DistanceMode::Radial, DistanceMode::Geodesic].into_iter().enumerate() {
            let cfg = ShootingConfig {
                horizon: 1,
                sampling: Sampling::Exhaustive,
                reward_mode: mode,
                ..Default::default()
            };
            let (a, _) = shooting_step(&maze, &s, Task::Full, &cfg, &mut rng).unwrap();
            agree[k] += (a == brute_force_best(&maze, &s, mode)) as usize;
        }
    }
    outcome(
        agree == [ORACLE_STATES; 2],
        format!("agreement radial {}/{ORACLE_STATES}, geodesic {}/{ORACLE_STATES}", agree[0], agree[1]),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut covered = true;
    for seed in 0..3 {
        let (pre, rl) = gradcheck_suite(seed).unwrap();
        for r in [&pre, &rl] {
            worst = worst.max(r.max_rel_error);
            covered &= r.checked > r.n_params / 2;
        }
    }
    outcome(
        worst <= GRAD_TOL && covered,
        format!("3 seeds, pretrain and A3C losses, max relative error {worst:.2e} (tolerance {GRAD_TOL:.0e})"),
    )
}

fn criterion_5() -> Outcome {
    let maze = Maze::desk_three_ring();
    let arch = Architecture::desk();
    let renderer = maze.renderer(arch.input_size);
    let vhat = NetworkParams::init(arch, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let gamma = 0.99;
    let expert = ShootingConfig { horizon: 10, ..Default::default() };
    let mut worst = 0.0f64;
    let mut terminal_count = 0;
    for seed in 0..SHAPING_EPISODES {
        let traj = generate_trajectory(&maze, Task::STG1, &expert, seed, 600).unwrap();
        // odd seeds are cut short so half the episodes end without a terminal transition
        let len = if seed % 2 == 1 { traj.len() / 2 } else { traj.len() };
        let mut env = EpisodeEnv::new(&maze, Task::STG1, &renderer, seed, len);
        let mut tracker = PotentialTracker::start(&vhat, &env.input()).unwrap();
        let (mut potentials, mut rewards, mut shaped) = (vec![tracker.current()], vec![], vec![]);
        for t in &traj.steps[..len] {
            let step = env.step(t.action.index()).unwrap();
            shaped.push(tracker.advance(step.reward, &env.input(), step.terminal, gamma).unwrap());
            potentials.push(tracker.current());
            rewards.push(step.reward);
        }
        terminal_count += env.terminal as usize;
        let disc = |xs: &[f64]| xs.iter().enumerate().map(|(t, x)| gamma.powi(t as i32) * x).sum::<f64>();
        let tail = if env.terminal { 0.0 } else { gamma.powi(len as i32) * potentials[len] };
        let gap = (disc(&shaped) - (disc(&rewards) + tail - potentials[0])).abs();
        worst = worst.max(gap);
    }
    outcome(
        worst <= TELESCOPE_TOL && terminal_count > 0 && terminal_count < SHAPING_EPISODES as usize,
        format!("{SHAPING_EPISODES} episodes ({terminal_count} terminal), max telescoping gap {worst:.2e}"),
    )
}

/// Desk FULL dataset and its pretrained network, shared by criteria 6, 7 and 9.
struct Pretrained {
    maze: Maze,
    data: Dataset,
    params: NetworkParams,
    test_accuracy: f64,
}

fn pretrained(out: &Path) -> Pretrained {
    let maze = Maze::desk_three_ring();
    let opts = DatasetOptions { n_trajectories: DESK_TRAJECTORIES, max_steps: DESK_MAX_STEPS, ..Default::default() };
    let data = build_dataset(&maze, Task::Full, &ShootingConfig::default(), &opts).unwrap();
    let res = pretrain(&maze, &data, &PretrainConfig::default()).unwrap();
    fs::write(out.join("pretrain.csv"), res.curve_csv()).unwrap();
    res.params.save(out.join("pretrain.net")).unwrap();
    Pretrained { maze, data, test_accuracy: res.best_test.accuracy, params: res.params }
}

fn criterion_6(pre: &Pretrained) -> Outcome {
    let cfg = PretrainConfig {
        epochs: OVERFIT_EPOCHS,
        l2_lambda: 0.0,
        eval_every: 25,
        optimizer: bimgame::neural::RmsPropConfig { lr: 5e-3, ..PretrainConfig::default().optimizer },
        ..Default::default()
    };
    let (train, _) = dataset_episodes(&pre.data, cfg.gamma).unwrap();
    let small: Vec<&Episode> = train.iter().take(OVERFIT_TRAJECTORIES).collect();
    let steps: usize = small.iter().map(|e| e.len()).sum();
    let renderer = renderer_for(&pre.maze, &cfg);
    let overfit = train_episodes(&small, &small, &renderer, &cfg, LossTerms::BOTH, None).unwrap();
    let kept = pre.data.trajectories.len();
    outcome(
        kept >= DESK_TRAJECTORIES && pre.test_accuracy > MIN_TEST_ACCURACY && overfit.best_test.accuracy > MIN_OVERFIT_ACCURACY,
        format!(
            "{kept} trajectories, test accuracy {:.3} (need > {MIN_TEST_ACCURACY}); overfit on {OVERFIT_TRAJECTORIES} trajectories ({steps} steps) train accuracy {:.3} (need > {MIN_OVERFIT_ACCURACY})",
            pre.test_accuracy, overfit.best_test.accuracy
        ),
    )
}

fn a3c(pre: &Pretrained, seed: u64, init: Init) -> A3CResult {
    let cfg = A3CConfig { budget: RL_BUDGET, seed, ..Default::default() };
    train(&pre.maze, &cfg, init, None).unwrap()
}

fn criterion_7(pre: &Pretrained, out: &Path) -> (Outcome, Vec<NetworkParams>) {
    let threshold = THRESHOLD_FRACTION * pre.data.mean_return();
    let mut bounds = Vec::new();
    let mut parts = Vec::new();
    let mut finals = Vec::new();
    let mut series = Vec::new();
    for seed in RL_SEEDS {
        let base = a3c(pre, seed, Init::Random);
        let treat = a3c(pre, seed, Init::Params(pre.params.clone()));
        for (name, r) in [("a3c", &base), ("pre_a3c", &treat)] {
            let csv = r.curve.to_csv();
            fs::write(out.join(format!("{name}_s{seed}.csv")), &csv).unwrap();
            if seed == RL_SEEDS[0] {
                series.push(series_from_csv(name, &csv, "step", "ma100").unwrap());
            }
        }
        let s = speedup_report(&base.curve, &treat.curve, threshold);
        let last = |r: &A3CResult| r.curve.points.last().map_or(f64::NAN, |p| p.ma100);
        parts.push(format!("s{seed}: {s}, final ma100 {:.2} vs {:.2}", last(&base), last(&treat)));
        bounds.extend(s.censored_lower_bound(RL_BUDGET));
        finals.push(treat.params);
    }
    save_png(&line_chart(&series), out.join("a3c_curves.png")).unwrap();
    let m = if bounds.len() == RL_SEEDS.len() { median(&bounds) } else { None };
    let o = outcome(
        m.is_some_and(|m| m >= MIN_SPEEDUP),
        format!(
            "threshold {threshold:.2} (0.8 x expert {:.2}), budget {RL_BUDGET}; {}; median speed-up {} (need >= {MIN_SPEEDUP}; unreached baselines count as budget / t_pretrained)",
            pre.data.mean_return(),
            parts.join(", "),
            m.map_or("n/a".into(), |m| format!("{m:.2}"))
        ),
    );
    (o, finals)
}

fn criterion_8() -> Outcome {
    let mdp = ChainMdp::default();
    let optimal = mdp.optimal_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = TabularConfig::default();
    let plain = train_tabular(&mdp, None, &cfg).unwrap().greedy;
    let mut same = 0;
    for _ in 0..CHAIN_POTENTIALS {
        let phi = random_potential(mdp.n_states, 2.0, &mut rng);
        same += (train_tabular(&mdp, Some(&phi), &cfg).unwrap().greedy == plain) as u64;
    }
    outcome(
        plain == optimal && same == CHAIN_POTENTIALS,
        format!("unshaped greedy {plain:?}, optimal {optimal:?}, {same}/{CHAIN_POTENTIALS} random potentials agree"),
    )
}

fn criterion_9(pre: &Pretrained, finals: &[NetworkParams], out: &Path) -> Outcome {
    let stg1 = DaggerConfig {
        task: Task::STG1,
        iterations: DAGGER_ITERATIONS,
        stop_at_return: Some(0.0),
        ..Default::default()
    };
    let res = dagger(&pre.maze, &ShootingConfig::default(), &stg1).unwrap();
    fs::write(out.join("dagger_stg1.csv"), res.metrics_csv()).unwrap();
    let last = res.iterations.last().unwrap();
    let stg1_pass = last.eval.mean_return > 0.0;

    let queries = pre.data.n_steps(&pre.data.train);
    let full = DaggerConfig {
        task: Task::Full,
        iterations: DAGGER_ITERATIONS,
        max_queries: Some(queries),
        train: PretrainConfig { epochs: 5, ..Default::default() },
        ..Default::default()
    };
    let res = dagger(&pre.maze, &ShootingConfig::default(), &full).unwrap();
    fs::write(out.join("dagger_full.csv"), res.metrics_csv()).unwrap();
    let dagger_full = res.iterations.last().unwrap();
    let renderer = pre.maze.renderer(Architecture::desk().input_size);
    let returns: Vec<f64> = finals
        .iter()
        .map(|p| {
            evaluate_policy(&pre.maze, Task::Full, p, &renderer, &full.eval_seeds, Task::Full.episode_cap(), full.eval_mode, 9)
                .unwrap()
                .mean_return
        })
        .collect();
    let rl = median(&returns);
    let full_pass = rl.is_some_and(|r| dagger_full.eval.mean_return < r);
    outcome(
        stg1_pass && full_pass,
        format!(
            "STG1 return {:.2} after {} iterations; FULL at {} expert queries: DAgger {:.2} vs pretrain+A3C median {:.2} ({} eval episodes each)",
            last.eval.mean_return,
            last.iteration,
            dagger_full.expert_queries,
            dagger_full.eval.mean_return,
            rl.unwrap_or(f64::NAN),
            full.eval_seeds.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let maze = Maze::default_five_ring();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut violations = 0;
    let mut crossings = 0;
    let mut n = 0;
    for task in [Task::Full, Task::STG1, Task::STG2] {
        let mut seed = 0;
        let mut s = maze.reset(seed);
        for t in 0..SPARSITY_TRANSITIONS {
            let out = maze.step(&s, random_action(&mut rng), task).unwrap();
            let ok = match task {
                Task::Full => {
                    let change = maze.ring_index(out.state.ball_pos) as f64 - maze.ring_index(s.ball_pos) as f64;
                    crossings += (change != 0.0) as usize;
                    out.reward == change
                }
                _ => out.reward == if out.events.terminal { 1.0 } else { 0.0 },
            };
            violations += (!ok || out.events.terminal != maze.is_goal(&out.state, task)) as usize;
            n += 1;
            s = out.state;
            if out.events.terminal || t % 500 == 499 {
                seed += 1;
                s = maze.reset(seed);
            }
        }
    }
    outcome(
        violations == 0 && crossings > 0,
        format!("{n} transitions over FULL/STG1/STG2, {crossings} ring changes, {violations} violations"),
    )
}

fn selected() -> Option<BTreeSet<u32>> {
    let v = std::env::var("ACCEPTANCE_ONLY").ok()?;
    Some(v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
}

fn main() -> ExitCode {
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&out).unwrap();
    let only = selected();
    let want = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));
    let mut failed = 0;
    let mut report = |n: u32, start: Instant, o: Outcome| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!("criterion {n}: {verdict} ({:.0}s) {}", start.elapsed().as_secs_f64(), o.detail);
    };
    let quick: [(u32, fn() -> Outcome); 6] =
        [(1, criterion_1), (3, criterion_3), (4, criterion_4), (5, criterion_5), (8, criterion_8), (10, criterion_10)];
    for (n, f) in quick {
        if want(n) {
            let t = Instant::now();
            report(n, t, f());
        }
    }
    if want(2) {
        let t = Instant::now();
        report(2, t, criterion_2(&out));
    }
    if want(6) || want(7) || want(9) {
        let t = Instant::now();
        let pre = pretrained(&out);
        if want(6) {
            report(6, t, criterion_6(&pre));
        }
        if want(7) || want(9) {
            let t = Instant::now();
            let (o, finals) = criterion_7(&pre, &out);
            if want(7) {
                report(7, t, o);
            }
            if want(9) {
                let t = Instant::now();
                report(9, t, criterion_9(&pre, &finals, &out));
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
