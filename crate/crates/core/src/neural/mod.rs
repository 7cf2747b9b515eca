//! Conv-Conv-FC-LSTM network with a policy head and a value head.
//!
//! Everything is `f64` and hand-differentiated: [`unroll`] runs the network over a sequence
//! keeping activations, [`backward`] does exact BPTT and can be chained across chunks by
//! passing the returned recurrent-state gradient into the previous chunk.

mod gradcheck;
mod network;
mod optim;
mod params;

pub use gradcheck::{finite_difference_check, GradcheckReport, LossEval, FD_EPS, REL_FLOOR};
pub use network::{
    backward, bptt_chunked, forward, forward_cached, log_softmax, softmax, unroll, NetworkInput, NetworkOutput,
    OutputGrad, RecurrentGrad, RecurrentState, StepCache, Unroll,
};
pub use optim::{clip_grad_norm, rmsprop_update, RmsPropConfig, RmsPropState};
pub use params::{l2_penalty, Architecture, ConvSpec, Layout, NetworkParams, CKPT_FORMAT_VERSION};
