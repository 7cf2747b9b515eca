use std::sync::Mutex;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{evaluate_policy, sample_action, EpisodeEnv, EvalSummary, PolicyMode};
use super::curve::LearningCurve;
use super::shaping::{PotentialTracker, ShapingConfig};
use crate::neural::{
    backward, clip_grad_norm, forward, log_softmax, rmsprop_update, unroll, Architecture, LossEval,
    NetworkInput, NetworkParams, OutputGrad, RecurrentState, RmsPropConfig, RmsPropState,
};
use crate::sim::{Maze, Renderer, Task};
use crate::util::{mix_seed, rng_for};
use crate::{Error, Result};

const TAG_INIT: u64 = 0xA3C0;
const TAG_WORKER: u64 = 0xA3C1;
const TAG_EPISODE: u64 = 0xA3C2;
const TAG_EVAL: u64 = 0xA3C3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A3CConfig {
    pub task: Task,
    pub workers: usize,
    /// n-step rollout length.
    pub t_max: usize,
    pub gamma: f64,
    /// Entropy bonus coefficient β.
    pub entropy_beta: f64,
    pub optimizer: RmsPropConfig,
    pub grad_clip: f64,
    /// Total environment steps across all workers.
    pub budget: u64,
    pub arch: Architecture,
    pub seed: u64,
    /// Defaults to the task's episode cap.
    pub episode_cap: Option<usize>,
    /// Greedy evaluation cadence in global steps; 0 disables.
    pub eval_every: u64,
    pub eval_seeds: Vec<u64>,
    /// Run workers on OS threads. Otherwise workers take turns in a fixed order, which is
    /// exactly reproducible.
    pub threaded: bool,
}

impl Default for A3CConfig {
    fn default() -> Self {
        A3CConfig {
            task: Task::Full,
            workers: 8,
            t_max: 20,
            gamma: 0.99,
            entropy_beta: 0.01,
            optimizer: RmsPropConfig {
                lr: 1e-4,
                decay: 0.99,
                eps: 1e-8,
            },
            grad_clip: 40.0,
            budget: 1_000_000,
            arch: Architecture::desk(),
            seed: 0,
            episode_cap: None,
            eval_every: 0,
            eval_seeds: (1_000_000..1_000_020).collect(),
            threaded: false,
        }
    }
}

impl A3CConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.t_max == 0 {
            return Err(Error::Config("A3C needs at least one worker and t_max >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.entropy_beta < 0.0 {
            return Err(Error::Config("entropy coefficient must be non-negative".into()));
        }
        self.arch.validate()
    }

    pub fn cap(&self) -> usize {
        self.episode_cap.unwrap_or_else(|| self.task.episode_cap())
    }
}

#[derive(Clone, Debug)]
pub enum Init {
    Random,
    Params(NetworkParams),
}

/// Up to `t_max` consecutive steps of one worker.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub initial_state: RecurrentState,
    pub inputs: Vec<NetworkInput>,
    pub actions: Vec<usize>,
    /// Rewards the learner sees (shaped when shaping is on).
    pub rewards: Vec<f64>,
    /// V(s_n) for a cut-off rollout, 0 after a terminal step.
    pub bootstrap: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// n-step targets R_t = r_t + γR_{t+1}, starting from the bootstrap.
    pub fn targets(&self, gamma: f64) -> Vec<f64> {
        let mut r = self.bootstrap;
        let mut out = vec![0.0; self.len()];
        for t in (0..self.len()).rev() {
            r = self.rewards[t] + gamma * r;
            out[t] = r;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct A3CLoss {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub advantages: Vec<f64>,
}

pub fn entropy(policy: &[f64]) -> f64 {
    -policy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// −Σ log π(a_t)·A_t + ½Σ(R_t − V_t)² − βΣH(π_t), A_t = R_t − V_t held constant in the
/// policy term. `advantages` overrides A_t (used to check gradients at a fixed advantage).
pub fn a3c_loss(
    params: &NetworkParams,
    rollout: &Rollout,
    gamma: f64,
    beta: f64,
    advantages: Option<&[f64]>,
    grad: &mut [f64],
) -> Result<(A3CLoss, Vec<bool>)> {
    if rollout.is_empty() {
        return Err(Error::Precondition("empty rollout".into()));
    }
    let run = unroll(params, &rollout.inputs, &rollout.initial_state)?;
    let targets = rollout.targets(gamma);
    let mut out = A3CLoss {
        loss: 0.0,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        advantages: Vec::with_capacity(rollout.len()),
    };
    let mut grads = Vec::with_capacity(rollout.len());
    for (t, o) in run.outputs.iter().enumerate() {
        let adv = match advantages {
            Some(a) => a[t],
            None => targets[t] - o.value,
        };
        let lp = log_softmax(&o.logits);
        let pi: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let h = -pi.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
        let a = rollout.actions[t];
        out.policy_loss += -lp[a] * adv;
        out.value_loss += 0.5 * (targets[t] - o.value).powi(2);
        out.entropy += h;
        out.advantages.push(adv);
        let mut g = OutputGrad::zeros(o.logits.len());
        for k in 0..g.logits.len() {
            let onehot = if k == a { 1.0 } else { 0.0 };
            g.logits[k] = adv * (pi[k] - onehot) + beta * pi[k] * (lp[k] + h);
        }
        g.value = o.value - targets[t];
        grads.push(g);
    }
    out.loss = out.policy_loss + out.value_loss - beta * out.entropy;
    if !out.loss.is_finite() {
        return Err(Error::Numeric("non-finite A3C loss".into()));
    }
    backward(params, &run, &grads, None, grad)?;
    Ok((out, run.relu_pattern()))
}

/// [`a3c_loss`] at fixed advantages, packaged for the finite-difference checker.
pub fn a3c_loss_eval(
    params: &NetworkParams,
    rollout: &Rollout,
    gamma: f64,
    beta: f64,
    advantages: &[f64],
) -> Result<LossEval> {
    let mut grad = params.zeros_like();
    let (l, relu_pattern) = a3c_loss(params, rollout, gamma, beta, Some(advantages), &mut grad)?;
    Ok(LossEval {
        loss: l.loss,
        grad,
        relu_pattern,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinishedEpisode {
    pub worker: usize,
    pub seed: u64,
    pub task_return: f64,
    pub steps: usize,
    pub solved: bool,
}

/// A rollout worker: private simulator, recurrent state and random stream.
pub struct Worker<'a> {
    pub id: usize,
    maze: &'a Maze,
    renderer: &'a Renderer,
    task: Task,
    cap: usize,
    base_seed: u64,
    env: EpisodeEnv<'a>,
    episode_seed: u64,
    episode_index: u64,
    rstate: RecurrentState,
    shaping_cfg: Option<&'a ShapingConfig>,
    shaping: Option<PotentialTracker<'a>>,
    rng: ChaCha8Rng,
    pub steps: u64,
}

impl<'a> Worker<'a> {
    pub fn new(
        id: usize,
        maze: &'a Maze,
        renderer: &'a Renderer,
        cfg: &A3CConfig,
        shaping: Option<&'a ShapingConfig>,
    ) -> Result<Self> {
        let seed0 = mix_seed(cfg.seed, &[TAG_EPISODE, id as u64, 0]);
        let cap = cfg.cap();
        let env = EpisodeEnv::new(maze, cfg.task, renderer, seed0, cap);
        let mut w = Worker {
            id,
            maze,
            renderer,
            task: cfg.task,
            cap,
            base_seed: cfg.seed,
            env,
            episode_seed: seed0,
            episode_index: 0,
            rstate: RecurrentState::zeros(&cfg.arch),
            shaping: None,
            shaping_cfg: shaping,
            rng: rng_for(cfg.seed, &[TAG_WORKER, id as u64]),
            steps: 0,
        };
        w.start_shaping()?;
        Ok(w)
    }

    fn start_shaping(&mut self) -> Result<()> {
        if let Some(s) = self.shaping_cfg {
            self.shaping = Some(PotentialTracker::start(&s.vhat, &self.env.input())?);
        }
        Ok(())
    }

    fn next_episode(&mut self, arch: &Architecture) -> Result<()> {
        self.episode_index += 1;
        self.episode_seed = mix_seed(self.base_seed, &[TAG_EPISODE, self.id as u64, self.episode_index]);
        self.env = EpisodeEnv::new(self.maze, self.task, self.renderer, self.episode_seed, self.cap);
        self.rstate = RecurrentState::zeros(arch);
        self.start_shaping()
    }

    /// Collects up to `max_steps` steps with `params`, sampling from π.
    pub fn rollout(
        &mut self,
        params: &NetworkParams,
        max_steps: usize,
    ) -> Result<(Rollout, Option<FinishedEpisode>)> {
        let mut ro = Rollout {
            initial_state: self.rstate.clone(),
            inputs: Vec::with_capacity(max_steps),
            actions: Vec::with_capacity(max_steps),
            rewards: Vec::with_capacity(max_steps),
            bootstrap: 0.0,
        };
        let mut input = self.env.input();
        let mut finished = None;
        while ro.len() < max_steps {
            let out = forward(params, &input, &self.rstate)?;
            self.rstate = out.state;
            let a = sample_action(&out.policy, &mut self.rng)?;
            let step = self.env.step(a)?;
            self.steps += 1;
            let next = self.env.input();
            let r = match (&mut self.shaping, self.shaping_cfg) {
                (Some(tracker), Some(cfg)) => tracker.advance(step.reward, &next, step.terminal, cfg.gamma)?,
                _ => step.reward,
            };
            ro.inputs.push(input);
            ro.actions.push(a);
            ro.rewards.push(r);
            input = next;
            if step.done {
                if !step.terminal {
                    ro.bootstrap = forward(params, &input, &self.rstate)?.value;
                }
                finished = Some(FinishedEpisode {
                    worker: self.id,
                    seed: self.episode_seed,
                    task_return: self.env.episode_return,
                    steps: self.env.steps,
                    solved: self.env.terminal,
                });
                self.next_episode(params.arch())?;
                return Ok((ro, finished));
            }
        }
        ro.bootstrap = forward(params, &input, &self.rstate)?.value;
        Ok((ro, finished))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub summary: EvalSummary,
}

#[derive(Clone, Debug)]
pub struct A3CResult {
    pub params: NetworkParams,
    pub curve: LearningCurve,
    pub evals: Vec<EvalPoint>,
    pub total_steps: u64,
    pub worker_steps: Vec<u64>,
    pub episodes: Vec<FinishedEpisode>,
    pub updates: u64,
}

struct Shared {
    params: NetworkParams,
    opt: RmsPropState,
    steps: u64,
    updates: u64,
    curve: LearningCurve,
    episodes: Vec<FinishedEpisode>,
    evals: Vec<EvalPoint>,
    next_eval: u64,
}

fn initial_params(cfg: &A3CConfig, init: Init) -> Result<NetworkParams> {
    let mut p = match init {
        Init::Random => NetworkParams::init(cfg.arch, &mut rng_for(cfg.seed, &[TAG_INIT]))?,
        Init::Params(p) => {
            if *p.arch() != cfg.arch {
                return Err(Error::Config(format!(
                    "checkpoint architecture {:?} does not match configured {:?}",
                    p.arch(),
                    cfg.arch
                )));
            }
            p
        }
    };
    p.frozen = false;
    Ok(p)
}

struct Ctx<'a> {
    cfg: &'a A3CConfig,
    maze: &'a Maze,
    renderer: &'a Renderer,
    start: Instant,
}

impl Ctx<'_> {
    /// Applies one rollout's gradient to the shared parameters and logs finished episodes.
    fn apply(&self, sh: &mut Shared, mut grad: Vec<f64>, n: usize, fin: Option<FinishedEpisode>) -> Result<()> {
        clip_grad_norm(&mut grad, self.cfg.grad_clip);
        rmsprop_update(&mut sh.params, &grad, &mut sh.opt, &self.cfg.optimizer)?;
        sh.updates += 1;
        sh.steps += n as u64;
        if let Some(e) = fin {
            sh.curve.push(sh.steps, e.task_return, self.start.elapsed().as_secs_f64())?;
            sh.episodes.push(e);
        }
        if self.cfg.eval_every > 0 && sh.steps >= sh.next_eval {
            while sh.next_eval <= sh.steps {
                sh.next_eval += self.cfg.eval_every;
            }
            let summary = evaluate_policy(
                self.maze,
                self.cfg.task,
                &sh.params,
                self.renderer,
                &self.cfg.eval_seeds,
                self.cfg.cap(),
                PolicyMode::Greedy,
                mix_seed(self.cfg.seed, &[TAG_EVAL]),
            )?;
            sh.evals.push(EvalPoint {
                step: sh.steps,
                summary,
            });
        }
        Ok(())
    }
}

/// A3C training until the global step budget is spent.
pub fn train(maze: &Maze, cfg: &A3CConfig, init: Init, shaping: Option<&ShapingConfig>) -> Result<A3CResult> {
    cfg.validate()?;
    cfg.task.validate(maze.geometry().n_walls())?;
    if let Some(s) = shaping {
        s.check_gamma(cfg.gamma)?;
        if !s.vhat.frozen {
            return Err(Error::Config("shaping network must be frozen".into()));
        }
        if s.vhat.arch().input_size != cfg.arch.input_size {
            return Err(Error::Config("shaping network input size differs from the learner's".into()));
        }
    }
    let params = initial_params(cfg, init)?;
    let renderer = maze.renderer(cfg.arch.input_size);
    let ctx = Ctx {
        cfg,
        maze,
        renderer: &renderer,
        start: Instant::now(),
    };
    let n = params.len();
    let shared = Mutex::new(Shared {
        params,
        opt: RmsPropState::new(n),
        steps: 0,
        updates: 0,
        curve: LearningCurve::new(),
        episodes: Vec::new(),
        evals: Vec::new(),
        next_eval: cfg.eval_every,
    });
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|i| Worker::new(i, maze, &renderer, cfg, shaping))
        .collect::<Result<_>>()?;

    if cfg.threaded && cfg.workers > 1 {
        std::thread::scope(|s| -> Result<()> {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|w| {
                    let (shared, ctx) = (&shared, &ctx);
                    s.spawn(move || worker_loop(w, shared, ctx))
                })
                .collect();
            for h in handles {
                h.join().map_err(|_| Error::Numeric("worker thread panicked".into()))??;
            }
            Ok(())
        })?;
    } else {
        'outer: loop {
            for w in workers.iter_mut() {
                if !step_worker(w, &shared, &ctx)? {
                    break 'outer;
                }
            }
        }
    }

    let sh = shared.into_inner().map_err(|_| Error::Numeric("shared state poisoned".into()))?;
    Ok(A3CResult {
        params: sh.params,
        curve: sh.curve,
        evals: sh.evals,
        total_steps: sh.steps,
        worker_steps: workers.iter().map(|w| w.steps).collect(),
        episodes: sh.episodes,
        updates: sh.updates,
    })
}

fn worker_loop(w: &mut Worker, shared: &Mutex<Shared>, ctx: &Ctx) -> Result<()> {
    while step_worker(w, shared, ctx)? {}
    Ok(())
}

/// Snapshot → rollout → gradient → serialized apply. Returns false once the budget is spent.
fn step_worker(w: &mut Worker, shared: &Mutex<Shared>, ctx: &Ctx) -> Result<bool> {
    let lock = || shared.lock().map_err(|_| Error::Numeric("shared state poisoned".into()));
    let (snapshot, remaining) = {
        let sh = lock()?;
        if sh.steps >= ctx.cfg.budget {
            return Ok(false);
        }
        (sh.params.clone(), ctx.cfg.budget - sh.steps)
    };
    let max_steps = (ctx.cfg.t_max as u64).min(remaining) as usize;
    let (ro, fin) = w.rollout(&snapshot, max_steps)?;
    let mut grad = snapshot.zeros_like();
    a3c_loss(&snapshot, &ro, ctx.cfg.gamma, ctx.cfg.entropy_beta, None, &mut grad)?;
    let mut sh = lock()?;
    ctx.apply(&mut sh, grad, ro.len(), fin)?;
    Ok(true)
}
