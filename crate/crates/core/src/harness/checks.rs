use rand::Rng;

use crate::imitation::{pretrain_loss_eval, Episode, LossTerms, PretrainConfig};
use crate::neural::{finite_difference_check, Architecture, GradcheckReport, NetworkParams, FD_EPS};
use crate::rl::{a3c_loss, a3c_loss_eval, A3CConfig, Worker};
use crate::sim::{Action, Maze, Task};
use crate::util::rng_for;
use crate::Result;

/// Finite-difference checks of the full tiny network under the imitation loss and the A3C
/// loss, on a short simulator episode and a short worker rollout drawn from `seed`.
pub fn gradcheck_suite(seed: u64) -> Result<(GradcheckReport, GradcheckReport)> {
    let maze = Maze::desk_three_ring();
    let arch = Architecture::tiny();
    let renderer = maze.renderer(arch.input_size);
    let mut rng = rng_for(seed, &[0x6C4E]);
    let params = NetworkParams::init(arch, &mut rng)?;

    let mut state = maze.reset(seed);
    let (mut states, mut acts, mut rewards, mut labels) = (vec![], vec![], vec![], vec![]);
    for _ in 0..3 {
        let a = Action::ALL[rng.gen_range(0..5)];
        let out = maze.step(&state, a, Task::Full)?;
        states.push(state);
        acts.push(a);
        labels.push(Action::ALL[rng.gen_range(0..5)]);
        // nonzero returns so the value head is exercised
        rewards.push(out.reward + rng.gen_range(-1.0..1.0));
        state = out.state;
    }
    let ep = Episode::new(states, acts, rewards, labels, 0.9)?;
    let cfg = PretrainConfig {
        arch,
        bptt_chunk: 2,
        l2_lambda: 1e-2,
        ..Default::default()
    };
    let pre = finite_difference_check(&params, FD_EPS, |q, _| {
        pretrain_loss_eval(q, &[&ep], &renderer, &cfg, LossTerms::BOTH)
    })?;

    let a3c_cfg = A3CConfig {
        arch,
        seed,
        ..Default::default()
    };
    let mut worker = Worker::new(0, &maze, &renderer, &a3c_cfg, None)?;
    let (mut ro, _) = worker.rollout(&params, 3)?;
    for r in ro.rewards.iter_mut() {
        *r += rng.gen_range(-1.0..1.0);
    }
    // advantages are held fixed, as the actor's gradient treats them
    let mut g = params.zeros_like();
    let (base, _) = a3c_loss(&params, &ro, a3c_cfg.gamma, a3c_cfg.entropy_beta, None, &mut g)?;
    let adv = base.advantages;
    let rl = finite_difference_check(&params, FD_EPS, |q, _| {
        a3c_loss_eval(q, &ro, a3c_cfg.gamma, a3c_cfg.entropy_beta, &adv)
    })?;
    Ok((pre, rl))
}
