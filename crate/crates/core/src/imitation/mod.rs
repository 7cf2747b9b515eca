//! Learning from the MPC expert: supervised policy/value pre-training, the value-only
//! network used for reward shaping, and the DAgger baseline.

mod dagger;
mod episode;
mod pretrain;

pub use dagger::{dagger, DaggerConfig, DaggerIteration, DaggerResult};
pub use episode::{compute_returns, Episode};
pub use pretrain::{
    argmax_random_tie, episode_loss, evaluate, pretrain_loss, pretrain_loss_eval, train_episodes,
    EpochMetrics, EvalStats, LossStats, LossTerms, PretrainConfig, PretrainResult,
};

use crate::expert::Dataset;
use crate::sim::{Maze, Renderer};
use crate::Result;

/// Train/test episodes of a dataset with return targets at `gamma`.
pub fn dataset_episodes(data: &Dataset, gamma: f64) -> Result<(Vec<Episode>, Vec<Episode>)> {
    let conv = |idx: &[usize]| -> Result<Vec<Episode>> {
        idx.iter()
            .map(|&i| Episode::from_trajectory(&data.trajectories[i], gamma))
            .collect()
    };
    Ok((conv(&data.train)?, conv(&data.test)?))
}

pub fn renderer_for(maze: &Maze, cfg: &PretrainConfig) -> Renderer {
    maze.renderer(cfg.arch.input_size)
}

/// Policy and value pre-training on the expert dataset (π^s).
pub fn pretrain(maze: &Maze, data: &Dataset, cfg: &PretrainConfig) -> Result<PretrainResult> {
    let (train, test) = dataset_episodes(data, cfg.gamma)?;
    let (tr, te): (Vec<&Episode>, Vec<&Episode>) = (train.iter().collect(), test.iter().collect());
    train_episodes(&tr, &te, &renderer_for(maze, cfg), cfg, LossTerms::BOTH, None)
}

/// Value-only training for the shaping potential V̂. The result is marked frozen.
pub fn train_value_only(maze: &Maze, data: &Dataset, cfg: &PretrainConfig) -> Result<PretrainResult> {
    let (train, test) = dataset_episodes(data, cfg.gamma)?;
    let (tr, te): (Vec<&Episode>, Vec<&Episode>) = (train.iter().collect(), test.iter().collect());
    let mut res = train_episodes(&tr, &te, &renderer_for(maze, cfg), cfg, LossTerms::VALUE_ONLY, None)?;
    res.params.frozen = true;
    Ok(res)
}
