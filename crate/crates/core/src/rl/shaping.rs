use crate::neural::{forward, NetworkInput, NetworkParams, RecurrentState};
use crate::{Error, Result};

/// r̄ = r + γ·V̂(s') − V̂(s), with V̂(s') = 0 when s' is terminal.
pub fn shaped_reward(r: f64, v_prev: f64, v_next: f64, gamma: f64, next_terminal: bool) -> f64 {
    let next = if next_terminal { 0.0 } else { v_next };
    r + gamma * next - v_prev
}

/// Shaped rewards for a whole episode given the potentials Φ(s_0..s_T) (length T+1).
pub fn shaped_rewards(rewards: &[f64], potentials: &[f64], gamma: f64, terminal: bool) -> Result<Vec<f64>> {
    if potentials.len() != rewards.len() + 1 {
        return Err(Error::Shape {
            what: "potentials",
            expected: (rewards.len() + 1).to_string(),
            actual: potentials.len().to_string(),
        });
    }
    let n = rewards.len();
    Ok((0..n)
        .map(|t| shaped_reward(rewards[t], potentials[t], potentials[t + 1], gamma, terminal && t + 1 == n))
        .collect())
}

/// Σ_t γ^t x_t.
pub fn discounted_sum(xs: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    for &x in xs.iter().rev() {
        acc = x + gamma * acc;
    }
    acc
}

/// |Σγ^t r̄_t − (Σγ^t r_t + γ^T Φ(s_T)·[non-terminal] − Φ(s_0))|.
pub fn telescoping_gap(rewards: &[f64], potentials: &[f64], gamma: f64, terminal: bool) -> Result<f64> {
    let shaped = shaped_rewards(rewards, potentials, gamma, terminal)?;
    let t = rewards.len();
    let end = if terminal { 0.0 } else { gamma.powi(t as i32) * potentials[t] };
    let rhs = discounted_sum(rewards, gamma) + end - potentials[0];
    Ok((discounted_sum(&shaped, gamma) - rhs).abs())
}

/// The frozen value network V̂ used as the shaping potential.
#[derive(Clone, Debug)]
pub struct ShapingConfig {
    pub vhat: NetworkParams,
    pub gamma: f64,
}

impl ShapingConfig {
    pub fn new(vhat: NetworkParams, gamma: f64) -> Result<Self> {
        if !vhat.frozen {
            return Err(Error::Config("shaping network must be frozen".into()));
        }
        Ok(ShapingConfig { vhat, gamma })
    }

    pub fn check_gamma(&self, gamma: f64) -> Result<()> {
        if self.gamma != gamma {
            return Err(Error::Config(format!(
                "shaping gamma {} differs from learner gamma {gamma}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Runs V̂ alongside an episode with its own recurrent state. Each potential is computed
/// exactly once per visited state.
#[derive(Clone, Debug)]
pub struct PotentialTracker<'a> {
    vhat: &'a NetworkParams,
    state: RecurrentState,
    current: f64,
}

impl<'a> PotentialTracker<'a> {
    /// Starts an episode at the input of its first state.
    pub fn start(vhat: &'a NetworkParams, first: &NetworkInput) -> Result<Self> {
        let out = forward(vhat, first, &RecurrentState::zeros(vhat.arch()))?;
        Ok(PotentialTracker {
            vhat,
            state: out.state,
            current: out.value,
        })
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Advances to the next state and returns the shaped reward of the transition.
    /// On a terminal transition V̂ is not evaluated.
    pub fn advance(&mut self, reward: f64, next: &NetworkInput, terminal: bool, gamma: f64) -> Result<f64> {
        let prev = self.current;
        if terminal {
            self.current = 0.0;
            return Ok(shaped_reward(reward, prev, 0.0, gamma, true));
        }
        let out = forward(self.vhat, next, &self.state)?;
        self.state = out.state;
        self.current = out.value;
        Ok(shaped_reward(reward, prev, self.current, gamma, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_potential_is_identity() {
        let r = [0.0, 1.0, -1.0, 1.0];
        assert_eq!(shaped_rewards(&r, &[0.0; 5], 0.99, true).unwrap(), r.to_vec());
    }

    #[test]
    fn constant_potential_shifts_by_gamma_minus_one() {
        let c = 2.5;
        let g = 0.9;
        let s = shaped_rewards(&[1.0, 0.0, 0.0], &[c; 4], g, false).unwrap();
        for (x, r) in s.iter().zip([1.0, 0.0, 0.0]) {
            assert!((x - (r + (g - 1.0) * c)).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_potential_is_dropped() {
        let s = shaped_rewards(&[1.0], &[0.5, 100.0], 0.9, true).unwrap();
        assert_eq!(s, vec![0.5]);
    }

    proptest! {
        #[test]
        fn telescoping_holds(
            rewards in proptest::collection::vec(-1.0f64..1.0, 1..200),
            seed_pot in proptest::collection::vec(-5.0f64..5.0, 201),
            gamma in 0.0f64..0.999,
            terminal: bool,
        ) {
            let pots = &seed_pot[..rewards.len() + 1];
            prop_assert!(telescoping_gap(&rewards, pots, gamma, terminal).unwrap() <= 1e-10);
        }
    }
}
