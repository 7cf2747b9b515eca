use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{forward, NetworkInput, NetworkOutput, NetworkParams, RecurrentState};
use crate::sim::{Action, BoardState, Maze, Renderer, Task};
use crate::util::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// argmax of π, ties to the lowest index.
    Greedy,
    Sample,
}

pub fn sample_action(policy: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let dist = WeightedIndex::new(policy)
        .map_err(|e| Error::Numeric(format!("cannot sample from policy {policy:?}: {e}")))?;
    Ok(dist.sample(rng))
}

pub fn greedy_action(policy: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in policy.iter().enumerate() {
        if p > policy[best] {
            best = i;
        }
    }
    best
}

pub fn choose(policy: &[f64], mode: PolicyMode, rng: &mut impl Rng) -> Result<usize> {
    match mode {
        PolicyMode::Greedy => Ok(greedy_action(policy)),
        PolicyMode::Sample => sample_action(policy, rng),
    }
}

/// One episode of the game seen from the network's side: the board state plus the
/// previous action/reward that feed the LSTM.
#[derive(Clone, Debug)]
pub struct EpisodeEnv<'a> {
    pub maze: &'a Maze,
    pub task: Task,
    pub renderer: &'a Renderer,
    pub state: BoardState,
    pub prev_action: Option<usize>,
    pub prev_reward: f64,
    pub steps: usize,
    pub cap: usize,
    pub episode_return: f64,
    pub done: bool,
    pub terminal: bool,
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    /// The task reached its goal.
    pub terminal: bool,
    /// The episode is over, by goal or by the step cap.
    pub done: bool,
}

impl<'a> EpisodeEnv<'a> {
    pub fn new(maze: &'a Maze, task: Task, renderer: &'a Renderer, seed: u64, cap: usize) -> Self {
        EpisodeEnv {
            maze,
            task,
            renderer,
            state: maze.reset(seed),
            prev_action: None,
            prev_reward: 0.0,
            steps: 0,
            cap,
            episode_return: 0.0,
            done: false,
            terminal: false,
        }
    }

    pub fn input(&self) -> NetworkInput {
        NetworkInput {
            image: self.renderer.render(&self.state).image,
            prev_action: self.prev_action,
            prev_reward: self.prev_reward,
        }
    }

    pub fn step(&mut self, action: usize) -> Result<EnvStep> {
        if self.done {
            return Err(Error::Precondition("step after end of episode".into()));
        }
        let a = Action::from_index(action)
            .ok_or_else(|| Error::Precondition(format!("action index {action} out of range")))?;
        let out = self.maze.step(&self.state, a, self.task)?;
        self.state = out.state;
        self.prev_action = Some(action);
        self.prev_reward = out.reward;
        self.steps += 1;
        self.episode_return += out.reward;
        self.terminal = out.events.terminal;
        self.done = self.terminal || self.steps >= self.cap;
        Ok(EnvStep {
            reward: out.reward,
            terminal: self.terminal,
            done: self.done,
        })
    }
}

/// Network plus its recurrent state, stepped alongside an [`EpisodeEnv`].
#[derive(Clone, Debug)]
pub struct PolicyRunner<'p> {
    pub params: &'p NetworkParams,
    pub state: RecurrentState,
}

impl<'p> PolicyRunner<'p> {
    pub fn new(params: &'p NetworkParams) -> Self {
        PolicyRunner {
            params,
            state: RecurrentState::zeros(params.arch()),
        }
    }

    pub fn act(&mut self, input: &NetworkInput) -> Result<NetworkOutput> {
        let out = forward(self.params, input, &self.state)?;
        self.state = out.state.clone();
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub task_return: f64,
    pub steps: usize,
    pub solved: bool,
}

pub fn run_policy_episode(
    maze: &Maze,
    task: Task,
    params: &NetworkParams,
    renderer: &Renderer,
    seed: u64,
    cap: usize,
    mode: PolicyMode,
    rng: &mut impl Rng,
) -> Result<EpisodeSummary> {
    let mut env = EpisodeEnv::new(maze, task, renderer, seed, cap);
    let mut pol = PolicyRunner::new(params);
    while !env.done {
        let out = pol.act(&env.input())?;
        env.step(choose(&out.policy, mode, rng)?)?;
    }
    Ok(EpisodeSummary {
        seed,
        task_return: env.episode_return,
        steps: env.steps,
        solved: env.terminal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub solved_fraction: f64,
    pub mean_steps: f64,
}

/// Mean task return of `params` over `seeds`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    maze: &Maze,
    task: Task,
    params: &NetworkParams,
    renderer: &Renderer,
    seeds: &[u64],
    cap: usize,
    mode: PolicyMode,
    rng_seed: u64,
) -> Result<EvalSummary> {
    if seeds.is_empty() {
        return Err(Error::Precondition("evaluation needs at least one seed".into()));
    }
    let mut total = 0.0;
    let mut solved = 0;
    let mut steps = 0;
    for &s in seeds {
        let mut rng = rng_for(rng_seed, &[s]);
        let e = run_policy_episode(maze, task, params, renderer, s, cap, mode, &mut rng)?;
        total += e.task_return;
        solved += e.solved as usize;
        steps += e.steps;
    }
    let n = seeds.len() as f64;
    Ok(EvalSummary {
        episodes: seeds.len(),
        mean_return: total / n,
        solved_fraction: solved as f64 / n,
        mean_steps: steps as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_prefers_first_max() {
        assert_eq!(greedy_action(&[0.2, 0.3, 0.3, 0.1, 0.1]), 1);
    }

    #[test]
    fn sampling_follows_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0; 5];
        for _ in 0..5000 {
            counts[sample_action(&[0.0, 0.5, 0.5, 0.0, 0.0], &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0] + counts[3] + counts[4], 0);
        assert!((counts[1] as i32 - 2500).abs() < 200);
    }

    #[test]
    fn episode_respects_cap_and_is_reproducible() {
        let maze = Maze::desk_three_ring();
        let a = Architecture::tiny();
        let r = maze.renderer(a.input_size);
        let p = NetworkParams::init(a, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let run = || {
            run_policy_episode(&maze, Task::Full, &p, &r, 4, 30, PolicyMode::Sample, &mut ChaCha8Rng::seed_from_u64(2))
                .unwrap()
        };
        let e = run();
        assert!(e.steps <= 30);
        assert_eq!(e, run());
    }

    #[test]
    fn step_after_done_is_an_error() {
        let maze = Maze::desk_three_ring();
        let r = maze.renderer(8);
        let mut env = EpisodeEnv::new(&maze, Task::Full, &r, 0, 1);
        assert!(env.step(4).unwrap().done);
        assert!(env.step(4).is_err());
    }
}
