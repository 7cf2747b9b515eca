//! Ball-in-maze game toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: deterministic tilting-maze physics, tasks, rendering and distance fields.
//! - [`expert`]: random-shooting MPC over the simulator and the trajectory dataset.
//! - [`neural`]: Conv-Conv-FC-LSTM two-head network with exact BPTT and RMSProp.
//! - [`imitation`]: supervised policy/value pre-training and the DAgger baseline.
//! - [`rl`]: A3C fine-tuning with optional value-based reward shaping.
//! - [`harness`]: experiment plans, learning curves, plots and speed-up reports.

pub mod error;
pub mod expert;
pub mod harness;
pub mod imitation;
pub mod neural;
pub mod rl;
pub mod sim;
pub(crate) mod util;

pub use error::{Error, Result};
