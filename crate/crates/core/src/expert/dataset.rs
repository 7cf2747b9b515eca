use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shooting::{plan, ShootingConfig};
use crate::sim::{Action, BoardState, Maze, Observation, Renderer, Task};
use crate::util::rng_for;
use crate::{Error, Result};

/// One recorded control step: the state the action was chosen in, the action, and the task
/// reward of the resulting transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: BoardState,
    pub action: Action,
    pub reward: f64,
}

/// A closed-loop expert rollout. Observations are rendered on demand from the stored states.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub episode_seed: u64,
    pub steps: Vec<Transition>,
    pub final_state: BoardState,
    pub terminal: bool,
    pub solved: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn observation(&self, i: usize, renderer: &Renderer) -> Observation {
        renderer.render(&self.steps[i].state)
    }

    /// Re-simulates the recorded actions from the first state and checks that every state,
    /// reward and the terminal flag come out bit-identical.
    pub fn replays_exactly(&self, maze: &Maze, task: Task) -> Result<bool> {
        let Some(first) = self.steps.first() else {
            return Ok(true);
        };
        let mut s = first.state;
        let mut terminal = false;
        for (i, t) in self.steps.iter().enumerate() {
            if t.state != s {
                return Ok(false);
            }
            let out = maze.step(&s, t.action, task)?;
            if out.reward.to_bits() != t.reward.to_bits() {
                return Ok(false);
            }
            terminal = out.events.terminal;
            if terminal && i + 1 != self.steps.len() {
                return Ok(false);
            }
            s = out.state;
        }
        Ok(s == self.final_state && terminal == self.terminal)
    }
}

/// Closed-loop MPC rollout from `reset(episode_seed)`, re-planning every control step.
pub fn generate_trajectory(
    maze: &Maze,
    task: Task,
    cfg: &ShootingConfig,
    episode_seed: u64,
    max_steps: usize,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::Precondition("max_steps must be at least 1".into()));
    }
    task.validate(maze.geometry().n_walls())?;
    let mut rng = rng_for(cfg.rng_seed, &[episode_seed]);
    let mut state = maze.reset(episode_seed);
    let mut steps = Vec::new();
    let mut terminal = false;
    while steps.len() < max_steps {
        let decision = plan(maze, &state, task, cfg, &mut rng)?;
        let out = maze.step(&state, decision.action, task)?;
        steps.push(Transition {
            state,
            action: decision.action,
            reward: out.reward,
        });
        state = out.state;
        if out.events.terminal {
            terminal = true;
            break;
        }
    }
    Ok(Trajectory {
        episode_seed,
        steps,
        final_state: state,
        terminal,
        solved: terminal,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub shooting: ShootingConfig,
    pub trajectories: Vec<Trajectory>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub n_trajectories: usize,
    pub test_fraction: f64,
    pub max_steps: usize,
    pub keep_unsolved: bool,
    /// Episode seeds are `first_seed .. first_seed + n`.
    pub first_seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            n_trajectories: 100,
            test_fraction: 0.2,
            max_steps: 5000,
            keep_unsolved: false,
            first_seed: 0,
        }
    }
}

impl Dataset {
    pub fn n_steps(&self, indices: &[usize]) -> usize {
        indices.iter().map(|&i| self.trajectories[i].len()).sum()
    }

    pub fn train_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.train.iter().map(|&i| &self.trajectories[i])
    }

    pub fn test_trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.test.iter().map(|&i| &self.trajectories[i])
    }

    pub fn mean_return(&self) -> f64 {
        let n = self.trajectories.len().max(1) as f64;
        self.trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / n
    }

    /// Whole-trajectory split with a seeded shuffle.
    pub fn split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, &[0x5717]));
        let mut n_test = (n as f64 * test_fraction).round() as usize;
        if test_fraction > 0.0 && n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        }
        let mut test = order.split_off(n - n_test);
        order.sort_unstable();
        test.sort_unstable();
        Ok((order, test))
    }
}

/// Generates `n_trajectories` expert rollouts in parallel (merged in seed order) and splits
/// them into train/test by whole trajectories.
pub fn build_dataset(maze: &Maze, task: Task, cfg: &ShootingConfig, opts: &DatasetOptions) -> Result<Dataset> {
    if opts.n_trajectories < 2 {
        return Err(Error::Precondition("need at least 2 trajectories".into()));
    }
    let all: Vec<Trajectory> = (0..opts.n_trajectories as u64)
        .into_par_iter()
        .map(|i| generate_trajectory(maze, task, cfg, opts.first_seed + i, opts.max_steps))
        .collect::<Result<_>>()?;
    let trajectories: Vec<Trajectory> = all
        .into_iter()
        .filter(|t| opts.keep_unsolved || t.solved)
        .collect();
    if trajectories.len() < 2 {
        return Err(Error::Dataset(format!(
            "only {} usable trajectories out of {}",
            trajectories.len(),
            opts.n_trajectories
        )));
    }
    let (train, test) = Dataset::split(trajectories.len(), opts.test_fraction, cfg.rng_seed)?;
    Ok(Dataset {
        task,
        shooting: *cfg,
        trajectories,
        train,
        test,
    })
}

/// Counts of solved-trajectory lengths in bins `[k·w, (k+1)·w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthHistogram {
    pub bin_width: usize,
    /// (bin start, count), contiguous from the first to the last occupied bin.
    pub bins: Vec<(usize, usize)>,
}

impl LengthHistogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.1).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for &(start, count) in &self.bins {
            out.push_str(&format!("{},{},{}\n", start, start + self.bin_width, count));
        }
        out
    }
}

pub fn length_histogram(trajectories: &[Trajectory], bin_width: usize) -> Result<LengthHistogram> {
    if bin_width == 0 {
        return Err(Error::Config("bin width must be positive".into()));
    }
    let lengths: Vec<usize> = trajectories.iter().filter(|t| t.solved).map(|t| t.len()).collect();
    if trajectories.is_empty() {
        return Err(Error::Dataset("histogram of an empty dataset".into()));
    }
    let Some(&min) = lengths.iter().min() else {
        return Ok(LengthHistogram { bin_width, bins: Vec::new() });
    };
    let max = *lengths.iter().max().unwrap();
    let (lo, hi) = (min / bin_width, max / bin_width);
    let mut bins: Vec<(usize, usize)> = (lo..=hi).map(|b| (b * bin_width, 0)).collect();
    for l in lengths {
        bins[l / bin_width - lo].1 += 1;
    }
    Ok(LengthHistogram { bin_width, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(len: usize, solved: bool) -> Trajectory {
        Trajectory {
            episode_seed: 0,
            steps: vec![
                Transition { state: BoardState::default(), action: Action::Noop, reward: 0.0 };
                len
            ],
            final_state: BoardState::default(),
            terminal: solved,
            solved,
        }
    }

    #[test]
    fn histogram_single_bin() {
        let h = length_histogram(&[fake(100, true)], 50).unwrap();
        assert_eq!(h.bins, vec![(100, 1)]);
        assert_eq!(h.to_csv(), "bin_start,bin_end,count\n100,150,1\n");
    }

    #[test]
    fn histogram_counts_only_solved() {
        let ts = vec![fake(10, true), fake(60, true), fake(70, true), fake(3000, false)];
        let h = length_histogram(&ts, 25).unwrap();
        assert_eq!(h.total(), 3);
        assert_eq!(h.bins, vec![(0, 1), (25, 0), (50, 2)]);
    }

    #[test]
    fn split_sizes_and_disjoint() {
        let (train, test) = Dataset::split(100, 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert!(train.iter().all(|i| !test.contains(i)));
        let (train, test) = Dataset::split(2, 0.01, 3).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn zero_max_steps_is_precondition_error() {
        let m = Maze::desk_three_ring();
        let err = generate_trajectory(&m, Task::Full, &ShootingConfig::default(), 0, 0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn short_rollout_replays() {
        let m = Maze::desk_three_ring();
        let t = generate_trajectory(&m, Task::Full, &ShootingConfig::default(), 3, 60).unwrap();
        assert!(!t.is_empty());
        assert!(t.replays_exactly(&m, Task::Full).unwrap());
        let mut bad = t.clone();
        bad.steps[5].reward += 1.0;
        assert!(!bad.replays_exactly(&m, Task::Full).unwrap());
    }
}
