//! Random-shooting MPC expert over the simulator and the trajectory dataset it produces.

mod dataset;
mod io;
mod shooting;

pub use dataset::{
    build_dataset, generate_trajectory, length_histogram, Dataset, DatasetOptions, LengthHistogram, Trajectory,
    Transition,
};
pub use io::{load_dataset, save_dataset, TRAJ_FORMAT_VERSION};
pub use shooting::{
    distance, plan, progress_reward, score_sequence, shooting_step, DistanceMode, ProgressSign, Sampling,
    ShootingConfig, ShootingDecision, MAX_EXHAUSTIVE_HORIZON,
};
