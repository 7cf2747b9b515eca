//! A five-state deterministic chain where potential-based shaping can be checked against a
//! known optimal policy with a tabular actor-critic that uses the same n-step loss as A3C.

use rand::Rng;

use super::agent::{greedy_action, sample_action};
use super::shaping::shaped_reward;
use crate::neural::softmax;
use crate::util::rng_for;
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// States `0..n`; the last one is terminal. RIGHT moves one state right, LEFT one state left
/// (staying put at 0, where it pays `loop_reward`). Entering the last state pays `goal_reward`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainMdp {
    pub n_states: usize,
    pub gamma: f64,
    pub loop_reward: f64,
    pub goal_reward: f64,
}

impl Default for ChainMdp {
    fn default() -> Self {
        ChainMdp {
            n_states: 5,
            gamma: 0.9,
            loop_reward: 0.05,
            goal_reward: 1.0,
        }
    }
}

impl ChainMdp {
    pub fn terminal(&self) -> usize {
        self.n_states - 1
    }

    /// (next state, reward, terminal).
    pub fn step(&self, s: usize, a: usize) -> (usize, f64, bool) {
        match a {
            RIGHT => {
                let next = s + 1;
                let done = next == self.terminal();
                (next, if done { self.goal_reward } else { 0.0 }, done)
            }
            _ => {
                if s == 0 {
                    (0, self.loop_reward, false)
                } else {
                    (s - 1, 0.0, false)
                }
            }
        }
    }

    /// Greedy optimal policy for the non-terminal states by value iteration.
    pub fn optimal_policy(&self) -> Vec<usize> {
        let nt = self.terminal();
        let mut v = vec![0.0; self.n_states];
        let q = |v: &[f64], s: usize, a: usize| {
            let (n, r, done) = self.step(s, a);
            r + if done { 0.0 } else { self.gamma * v[n] }
        };
        for _ in 0..10_000 {
            let mut delta: f64 = 0.0;
            for s in 0..nt {
                let best = q(&v, s, LEFT).max(q(&v, s, RIGHT));
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < 1e-14 {
                break;
            }
        }
        (0..nt)
            .map(|s| if q(&v, s, RIGHT) >= q(&v, s, LEFT) { RIGHT } else { LEFT })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TabularConfig {
    pub episodes: usize,
    pub t_max: usize,
    pub episode_cap: usize,
    pub lr: f64,
    pub entropy_beta: f64,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            episodes: 3000,
            t_max: 5,
            episode_cap: 50,
            lr: 0.1,
            entropy_beta: 0.001,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularResult {
    pub logits: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub greedy: Vec<usize>,
}

/// Tabular softmax actor-critic with n-step targets, optionally on shaped rewards
/// r + γΦ(s') − Φ(s) (Φ of the terminal state taken as 0).
pub fn train_tabular(mdp: &ChainMdp, potential: Option<&[f64]>, cfg: &TabularConfig) -> Result<TabularResult> {
    if let Some(p) = potential {
        if p.len() != mdp.n_states {
            return Err(Error::Shape {
                what: "chain potential",
                expected: mdp.n_states.to_string(),
                actual: p.len().to_string(),
            });
        }
    }
    let nt = mdp.terminal();
    let mut logits = vec![[0.0f64; 2]; nt];
    let mut values = vec![0.0f64; nt];
    let mut rng = rng_for(cfg.seed, &[0xC4A1]);
    for _ in 0..cfg.episodes {
        let mut s = 0;
        let mut steps = 0;
        let mut done = false;
        while !done && steps < cfg.episode_cap {
            let mut seg: Vec<(usize, usize, f64)> = Vec::new();
            let mut terminal = false;
            while seg.len() < cfg.t_max && steps < cfg.episode_cap {
                let pi = softmax(&logits[s]);
                let a = sample_action(&pi, &mut rng)?;
                let (n, r, term) = mdp.step(s, a);
                let r = match potential {
                    Some(phi) => shaped_reward(r, phi[s], phi[n], mdp.gamma, term),
                    None => r,
                };
                seg.push((s, a, r));
                steps += 1;
                s = n;
                if term {
                    terminal = true;
                    break;
                }
            }
            let mut ret = if terminal { 0.0 } else { values[s] };
            for &(st, a, r) in seg.iter().rev() {
                ret = r + mdp.gamma * ret;
                let adv = ret - values[st];
                let pi = softmax(&logits[st]);
                let h = -pi.iter().map(|p| p * p.ln()).sum::<f64>();
                for k in 0..2 {
                    let onehot = if k == a { 1.0 } else { 0.0 };
                    let g = adv * (pi[k] - onehot) + cfg.entropy_beta * pi[k] * (pi[k].ln() + h);
                    logits[st][k] -= cfg.lr * g;
                }
                values[st] += cfg.lr * adv;
            }
            done = terminal;
        }
    }
    let greedy = logits.iter().map(|l| greedy_action(l)).collect();
    Ok(TabularResult {
        logits,
        values,
        greedy,
    })
}

/// A random potential in [−scale, scale] for each state.
pub fn random_potential(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_policy_goes_right() {
        assert_eq!(ChainMdp::default().optimal_policy(), vec![RIGHT; 4]);
        // a generous loop reward makes looping at the start optimal
        let m = ChainMdp { loop_reward: 0.5, ..Default::default() };
        assert_eq!(m.optimal_policy()[0], LEFT);
    }

    #[test]
    fn unshaped_training_finds_optimum() {
        let m = ChainMdp::default();
        let r = train_tabular(&m, None, &TabularConfig::default()).unwrap();
        assert_eq!(r.greedy, m.optimal_policy());
    }
}
