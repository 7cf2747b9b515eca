//! A3C fine-tuning with optional pretrained initialisation and value-based reward shaping.

mod a3c;
mod agent;
pub mod chain;
mod curve;
mod shaping;

pub use a3c::{
    a3c_loss, a3c_loss_eval, entropy, train, A3CConfig, A3CLoss, A3CResult, EvalPoint, FinishedEpisode, Init,
    Rollout, Worker,
};
pub use agent::{
    choose, evaluate_policy, greedy_action, run_policy_episode, sample_action, EnvStep, EpisodeEnv,
    EpisodeSummary, EvalSummary, PolicyMode, PolicyRunner,
};
pub use curve::{CurvePoint, LearningCurve, MA_WINDOW};
pub use shaping::{
    discounted_sum, shaped_reward, shaped_rewards, telescoping_gap, PotentialTracker, ShapingConfig,
};
