use rand::Rng;
use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::pretrain::{train_episodes, LossTerms, PretrainConfig};
use crate::expert::{shooting_step, ShootingConfig};
use crate::neural::NetworkParams;
use crate::rl::{choose, evaluate_policy, EpisodeEnv, EvalSummary, PolicyMode, PolicyRunner};
use crate::sim::{Action, Maze, Task};
use crate::util::{mix_seed, rng_for};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaggerConfig {
    pub task: Task,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Step cap for data-collection rollouts; defaults to the task's episode cap.
    pub rollout_cap: Option<usize>,
    /// Per-iteration supervised training (policy head and cross-entropy only).
    pub train: PretrainConfig,
    /// Continue from the previous iteration's weights instead of retraining from scratch.
    pub warm_start: bool,
    pub eval_seeds: Vec<u64>,
    pub eval_mode: PolicyMode,
    /// Stop once the evaluation return exceeds this value.
    pub stop_at_return: Option<f64>,
    /// Total expert labels allowed; the last rollout is cut short to fit.
    pub max_queries: Option<usize>,
    pub seed: u64,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        DaggerConfig {
            task: Task::STG1,
            iterations: 10,
            episodes_per_iteration: 10,
            rollout_cap: None,
            train: PretrainConfig {
                epochs: 10,
                ..Default::default()
            },
            warm_start: false,
            eval_seeds: (2_000_000..2_000_020).collect(),
            eval_mode: PolicyMode::Sample,
            stop_at_return: None,
            max_queries: None,
            seed: 0,
        }
    }
}

impl DaggerConfig {
    /// Mixture weight β_i of the expert in iteration `i` (1-based): 1, then 0.
    pub fn beta(&self, iteration: usize) -> f64 {
        if iteration <= 1 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DaggerIteration {
    pub iteration: usize,
    pub beta: f64,
    pub aggregate_episodes: usize,
    pub aggregate_steps: usize,
    /// Cumulative expert labels requested so far.
    pub expert_queries: usize,
    pub eval: EvalSummary,
}

#[derive(Clone, Debug)]
pub struct DaggerResult {
    pub params: NetworkParams,
    pub iterations: Vec<DaggerIteration>,
    pub aggregate: Vec<Episode>,
}

impl DaggerResult {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("iteration,beta,episodes,steps,expert_queries,eval_return,eval_solved\n");
        for it in &self.iterations {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                it.iteration,
                it.beta,
                it.aggregate_episodes,
                it.aggregate_steps,
                it.expert_queries,
                it.eval.mean_return,
                it.eval.solved_fraction
            ));
        }
        out
    }
}

/// Expert label for the `t`-th state of the episode started from `episode_seed`. The label
/// random stream depends only on these two numbers, so a re-query returns the same action.
pub fn expert_label(
    maze: &Maze,
    task: Task,
    expert: &ShootingConfig,
    episode_seed: u64,
    t: usize,
    state: &crate::sim::BoardState,
) -> Result<Action> {
    let mut rng = rng_for(expert.rng_seed, &[0xDA66, episode_seed, t as u64]);
    Ok(shooting_step(maze, state, task, expert, &mut rng)?.0)
}

/// One data-collection rollout: the learner (or, with probability β per step, the expert)
/// drives, and every visited state is labelled by the expert.
fn collect(
    maze: &Maze,
    cfg: &DaggerConfig,
    expert: &ShootingConfig,
    policy: Option<&NetworkParams>,
    beta: f64,
    episode_seed: u64,
    max_len: usize,
) -> Result<Episode> {
    let renderer = maze.renderer(cfg.train.arch.input_size);
    let cap = cfg.rollout_cap.unwrap_or_else(|| cfg.task.episode_cap()).min(max_len);
    let mut env = EpisodeEnv::new(maze, cfg.task, &renderer, episode_seed, cap);
    let mut runner = policy.map(PolicyRunner::new);
    let mut rng = rng_for(cfg.seed, &[0xDA67, episode_seed]);
    let (mut states, mut executed, mut rewards, mut labels) = (vec![], vec![], vec![], vec![]);
    while !env.done {
        let label = expert_label(maze, cfg.task, expert, episode_seed, env.steps, &env.state)?;
        // the learner's recurrent state advances every step, whoever acts
        let learner = match runner.as_mut() {
            Some(r) => Some(r.act(&env.input())?),
            None => None,
        };
        let use_expert = beta >= 1.0 || (beta > 0.0 && rng.gen::<f64>() < beta);
        let action = match (use_expert, learner) {
            (false, Some(out)) => Action::ALL[choose(&out.policy, PolicyMode::Sample, &mut rng)?],
            (false, None) => return Err(Error::Precondition("β < 1 needs a learner policy".into())),
            (true, _) => label,
        };
        states.push(env.state);
        labels.push(label);
        executed.push(action);
        rewards.push(env.step(action.index())?.reward);
    }
    Episode::new(states, executed, rewards, labels, cfg.train.gamma)
}

/// DAgger with β_1 = 1, β_i = 0 afterwards, retraining on the growing aggregate each iteration.
pub fn dagger(maze: &Maze, expert: &ShootingConfig, cfg: &DaggerConfig) -> Result<DaggerResult> {
    if cfg.iterations == 0 || cfg.episodes_per_iteration == 0 || cfg.max_queries == Some(0) {
        return Err(Error::Config("DAgger needs at least one iteration and one episode".into()));
    }
    cfg.task.validate(maze.geometry().n_walls())?;
    expert.validate()?;
    let renderer = maze.renderer(cfg.train.arch.input_size);
    let eval_cap = cfg.task.episode_cap();
    let mut aggregate: Vec<Episode> = Vec::new();
    let mut queries = 0usize;
    let mut params: Option<NetworkParams> = None;
    let mut history = Vec::new();
    let budget = cfg.max_queries.unwrap_or(usize::MAX);
    for it in 1..=cfg.iterations {
        if queries >= budget {
            break;
        }
        let beta = cfg.beta(it);
        for e in 0..cfg.episodes_per_iteration {
            if queries >= budget {
                break;
            }
            let seed = mix_seed(cfg.seed, &[0xDA68, it as u64, e as u64]);
            let ep = collect(maze, cfg, expert, params.as_ref(), beta, seed, budget - queries)?;
            queries += ep.len();
            aggregate.push(ep);
        }
        let refs: Vec<&Episode> = aggregate.iter().collect();
        let train_cfg = PretrainConfig {
            seed: mix_seed(cfg.train.seed, &[it as u64]),
            ..cfg.train
        };
        let init = if cfg.warm_start { params.clone() } else { None };
        let res = train_episodes(&refs, &refs, &renderer, &train_cfg, LossTerms::POLICY_ONLY, init)?;
        let p = res.params;
        let eval = evaluate_policy(
            maze,
            cfg.task,
            &p,
            &renderer,
            &cfg.eval_seeds,
            eval_cap,
            cfg.eval_mode,
            mix_seed(cfg.seed, &[0xDA69]),
        )?;
        history.push(DaggerIteration {
            iteration: it,
            beta,
            aggregate_episodes: aggregate.len(),
            aggregate_steps: aggregate.iter().map(Episode::len).sum(),
            expert_queries: queries,
            eval,
        });
        params = Some(p);
        if cfg.stop_at_return.is_some_and(|target| eval.mean_return > target) {
            break;
        }
    }
    Ok(DaggerResult {
        params: params.expect("at least one iteration ran"),
        iterations: history,
        aggregate,
    })
}
