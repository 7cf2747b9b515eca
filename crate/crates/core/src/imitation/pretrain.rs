use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::episode::Episode;
use crate::neural::{
    bptt_chunked, clip_grad_norm, forward, l2_penalty, log_softmax, rmsprop_update, unroll,
    Architecture, LossEval, NetworkParams, OutputGrad, RecurrentState, RmsPropConfig, RmsPropState,
};
use crate::sim::Renderer;
use crate::util::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub gamma: f64,
    pub l2_lambda: f64,
    /// Coefficient of the squared value error (½ by default).
    pub value_loss_weight: f64,
    pub epochs: usize,
    pub episodes_per_batch: usize,
    pub optimizer: RmsPropConfig,
    /// Gradient-norm clip per batch; 0 disables.
    pub grad_clip: f64,
    /// Evaluate on the test split every this many epochs (the last epoch always).
    pub eval_every: usize,
    /// Recompute window for BPTT; the gradient is always over the full episode.
    pub bptt_chunk: usize,
    pub arch: Architecture,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            gamma: 0.99,
            l2_lambda: 1e-4,
            value_loss_weight: 0.5,
            epochs: 20,
            episodes_per_batch: 1,
            optimizer: RmsPropConfig {
                lr: 3e-3,
                ..Default::default()
            },
            grad_clip: 40.0,
            eval_every: 1,
            bptt_chunk: 64,
            arch: Architecture::desk(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.l2_lambda < 0.0 || self.value_loss_weight < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.episodes_per_batch == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch size and eval cadence must be positive".into()));
        }
        self.arch.validate()
    }
}

/// Which parts of the imitation loss are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub policy: bool,
    pub value: bool,
}

impl LossTerms {
    pub const BOTH: LossTerms = LossTerms { policy: true, value: true };
    pub const VALUE_ONLY: LossTerms = LossTerms { policy: false, value: true };
    pub const POLICY_ONLY: LossTerms = LossTerms { policy: true, value: false };
}

/// Sums over the steps of one or more episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    pub cross_entropy: f64,
    pub value_sq_error: f64,
    pub steps: usize,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.loss += o.loss;
        self.cross_entropy += o.cross_entropy;
        self.value_sq_error += o.value_sq_error;
        self.steps += o.steps;
    }
}

/// Per-step loss CE(a*, π) + w·(V − G)² and its gradient w.r.t. logits and value.
fn step_loss(
    logits: &[f64],
    value: f64,
    label: usize,
    target: f64,
    weight: f64,
    terms: LossTerms,
) -> (f64, f64, f64, OutputGrad) {
    let mut g = OutputGrad::zeros(logits.len());
    let mut ce = 0.0;
    if terms.policy {
        let lp = log_softmax(logits);
        ce = -lp[label];
        for (c, gl) in g.logits.iter_mut().enumerate() {
            *gl = lp[c].exp() - if c == label { 1.0 } else { 0.0 };
        }
    }
    let err = value - target;
    let mut sq = 0.0;
    if terms.value {
        sq = err * err;
        g.value = 2.0 * weight * err;
    }
    (ce + weight * sq, ce, sq, g)
}

/// Loss of one episode (BPTT from its first step), gradient accumulated into `grad`.
pub fn episode_loss(
    params: &NetworkParams,
    ep: &Episode,
    renderer: &Renderer,
    cfg: &PretrainConfig,
    terms: LossTerms,
    grad: &mut [f64],
) -> Result<LossStats> {
    let mut stats = LossStats {
        steps: ep.len(),
        ..Default::default()
    };
    let mut ce_sum = 0.0;
    let mut sq_sum = 0.0;
    stats.loss = bptt_chunked(
        params,
        ep.len(),
        cfg.bptt_chunk,
        |t| ep.input_at(t, renderer),
        |t, out| {
            let (l, ce, sq, g) = step_loss(
                &out.logits,
                out.value,
                ep.labels[t].index(),
                ep.returns[t],
                cfg.value_loss_weight,
                terms,
            );
            ce_sum += ce;
            sq_sum += sq;
            (l, g)
        },
        grad,
    )?;
    stats.cross_entropy = ce_sum;
    stats.value_sq_error = sq_sum;
    Ok(stats)
}

/// Full imitation objective over `episodes`: Σ steps [CE + w(V − G)²] + λ‖weights‖².
pub fn pretrain_loss(
    params: &NetworkParams,
    episodes: &[&Episode],
    renderer: &Renderer,
    cfg: &PretrainConfig,
    terms: LossTerms,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = params.zeros_like();
    let mut total = LossStats::default();
    for ep in episodes {
        total.add(&episode_loss(params, ep, renderer, cfg, terms, &mut grad)?);
    }
    let l2 = l2_penalty(params, cfg.l2_lambda, Some(&mut grad));
    Ok((total.loss + l2, grad))
}

/// [`pretrain_loss`] packaged for [`crate::neural::finite_difference_check`].
pub fn pretrain_loss_eval(
    params: &NetworkParams,
    episodes: &[&Episode],
    renderer: &Renderer,
    cfg: &PretrainConfig,
    terms: LossTerms,
) -> Result<LossEval> {
    let (loss, grad) = pretrain_loss(params, episodes, renderer, cfg, terms)?;
    let mut relu_pattern = Vec::new();
    for ep in episodes {
        let inputs: Vec<_> = (0..ep.len()).map(|t| ep.input_at(t, renderer)).collect();
        let run = unroll(params, &inputs, &RecurrentState::zeros(params.arch()))?;
        relu_pattern.extend(run.relu_pattern());
    }
    Ok(LossEval {
        loss,
        grad,
        relu_pattern,
    })
}

/// Index of the largest entry; exact ties are broken uniformly at random.
pub fn argmax_random_tie(v: &[f64], rng: &mut impl Rng) -> usize {
    let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..v.len()).filter(|&i| v[i] == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalStats {
    pub accuracy: f64,
    pub value_mse: f64,
    pub mean_abs_value: f64,
    pub steps: usize,
}

/// Teacher-forced action accuracy (argmax vs. label) and value error over `episodes`.
pub fn evaluate(
    params: &NetworkParams,
    episodes: &[&Episode],
    renderer: &Renderer,
    rng: &mut impl Rng,
) -> Result<EvalStats> {
    let mut correct = 0usize;
    let mut sq = 0.0;
    let mut abs_v = 0.0;
    let mut n = 0usize;
    for ep in episodes {
        let mut state = RecurrentState::zeros(params.arch());
        for t in 0..ep.len() {
            let out = forward(params, &ep.input_at(t, renderer), &state)?;
            if argmax_random_tie(&out.policy, rng) == ep.labels[t].index() {
                correct += 1;
            }
            sq += (out.value - ep.returns[t]).powi(2);
            abs_v += out.value.abs();
            n += 1;
            state = out.state;
        }
    }
    if n == 0 {
        return Err(Error::Dataset("evaluation over zero steps".into()));
    }
    Ok(EvalStats {
        accuracy: correct as f64 / n as f64,
        value_mse: sq / n as f64,
        mean_abs_value: abs_v / n as f64,
        steps: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-step loss over the epoch (without the L2 term).
    pub train_loss: f64,
    pub train_value_mse: f64,
    pub test: Option<EvalStats>,
}

#[derive(Clone, Debug)]
pub struct PretrainResult {
    pub params: NetworkParams,
    pub curve: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_test: EvalStats,
}

impl PretrainResult {
    pub fn best_test_accuracy(&self) -> f64 {
        self.best_test.accuracy
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_accuracy,test_value_mse\n");
        for m in &self.curve {
            match m.test {
                Some(t) => out.push_str(&format!(
                    "{},{},{},{}\n",
                    m.epoch, m.train_loss, t.accuracy, t.value_mse
                )),
                None => out.push_str(&format!("{},{},,\n", m.epoch, m.train_loss)),
            }
        }
        out
    }
}

/// Minibatch RMSProp on the imitation loss. The returned parameters are those of the best
/// evaluated epoch: highest test accuracy, or lowest test value error when the policy term
/// is off. Epoch 0 is the untrained network.
pub fn train_episodes(
    train: &[&Episode],
    test: &[&Episode],
    renderer: &Renderer,
    cfg: &PretrainConfig,
    terms: LossTerms,
    init: Option<NetworkParams>,
) -> Result<PretrainResult> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Dataset("imitation needs non-empty train and test splits".into()));
    }
    if renderer.size() != cfg.arch.input_size {
        return Err(Error::Config(format!(
            "renderer size {} does not match network input {}",
            renderer.size(),
            cfg.arch.input_size
        )));
    }
    let mut params = match init {
        Some(p) => {
            if *p.arch() != cfg.arch {
                return Err(Error::Config("initial parameters do not match the architecture".into()));
            }
            p
        }
        None => NetworkParams::init(cfg.arch, &mut rng_for(cfg.seed, &[1]))?,
    };
    params.frozen = false;
    let mut opt = RmsPropState::new(params.len());
    let mut eval_rng = rng_for(cfg.seed, &[3]);
    let better = |a: &EvalStats, b: &EvalStats| {
        if terms.policy {
            a.accuracy > b.accuracy
        } else {
            a.value_mse < b.value_mse
        }
    };

    let first = evaluate(&params, test, renderer, &mut eval_rng)?;
    let mut curve = vec![EpochMetrics {
        epoch: 0,
        train_loss: f64::NAN,
        train_value_mse: f64::NAN,
        test: Some(first),
    }];
    let mut best = (params.clone(), 0, first);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &[2, epoch as u64]));
        let mut stats = LossStats::default();
        for batch in order.chunks(cfg.episodes_per_batch) {
            let mut grad = params.zeros_like();
            for &i in batch {
                stats.add(&episode_loss(&params, train[i], renderer, cfg, terms, &mut grad)?);
            }
            l2_penalty(&params, cfg.l2_lambda, Some(&mut grad));
            clip_grad_norm(&mut grad, cfg.grad_clip);
            rmsprop_update(&mut params, &grad, &mut opt, &cfg.optimizer)?;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let n = stats.steps.max(1) as f64;
        let test_stats = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let s = evaluate(&params, test, renderer, &mut eval_rng)?;
            if better(&s, &best.2) {
                best = (params.clone(), epoch, s);
            }
            Some(s)
        } else {
            None
        };
        curve.push(EpochMetrics {
            epoch,
            train_loss: stats.loss / n,
            train_value_mse: stats.value_sq_error / n,
            test: test_stats,
        });
    }
    let (params, best_epoch, best_test) = best;
    Ok(PretrainResult {
        params,
        curve,
        best_epoch,
        best_test,
    })
}
