use crate::expert::Trajectory;
use crate::neural::NetworkInput;
use crate::sim::{Action, BoardState, Renderer};
use crate::{Error, Result};

/// Discounted return-to-go G_t = Σ_{t'≥t} γ^{t'−t} r_{t'}, with a zero bootstrap after the
/// last step.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Precondition("returns of an empty trajectory".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma {gamma} outside [0, 1)")));
    }
    let mut g = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        g[t] = acc;
    }
    Ok(g)
}

/// A training sequence: the states visited, the actions actually executed (fed back as the
/// previous action), the task rewards received and the expert labels to imitate.
/// For plain expert data `executed == labels`; DAgger rollouts differ.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub states: Vec<BoardState>,
    pub executed: Vec<Action>,
    pub rewards: Vec<f64>,
    pub labels: Vec<Action>,
    pub returns: Vec<f64>,
}

impl Episode {
    pub fn from_trajectory(t: &Trajectory, gamma: f64) -> Result<Self> {
        let rewards = t.rewards();
        let returns = compute_returns(&rewards, gamma)?;
        let actions: Vec<Action> = t.steps.iter().map(|s| s.action).collect();
        Ok(Episode {
            states: t.steps.iter().map(|s| s.state).collect(),
            executed: actions.clone(),
            rewards,
            labels: actions,
            returns,
        })
    }

    pub fn new(
        states: Vec<BoardState>,
        executed: Vec<Action>,
        rewards: Vec<f64>,
        labels: Vec<Action>,
        gamma: f64,
    ) -> Result<Self> {
        let n = states.len();
        if executed.len() != n || rewards.len() != n || labels.len() != n {
            return Err(Error::Dataset("episode columns differ in length".into()));
        }
        let returns = compute_returns(&rewards, gamma)?;
        Ok(Episode {
            states,
            executed,
            rewards,
            labels,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Network input at step `t`, teacher-forced with the executed previous action and the
    /// reward it earned.
    pub fn input_at(&self, t: usize, renderer: &Renderer) -> NetworkInput {
        let obs = renderer.render(&self.states[t]);
        if t == 0 {
            NetworkInput::first(obs.image)
        } else {
            NetworkInput {
                image: obs.image,
                prev_action: Some(self.executed[t - 1].index()),
                prev_reward: self.rewards[t - 1],
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_returns() {
        let g = compute_returns(&[0.0, 0.0, 1.0], 0.9).unwrap();
        let want = [0.81, 0.9, 1.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(compute_returns(&[1.0, -1.0, 2.0], 0.0).unwrap(), vec![1.0, -1.0, 2.0]);
        assert_eq!(compute_returns(&[0.0; 4], 0.99).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn recursive_and_direct_agree() {
        let r: Vec<f64> = (0..50).map(|i| ((i * 7) % 3) as f64 - 1.0).collect();
        let gamma = 0.97;
        let g = compute_returns(&r, gamma).unwrap();
        for t in 0..r.len() {
            let direct: f64 = (t..r.len()).map(|k| gamma.powi((k - t) as i32) * r[k]).sum();
            assert!((g[t] - direct).abs() < 1e-12);
        }
        for t in 0..r.len() - 1 {
            assert!((g[t] - gamma * g[t + 1] - r[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_bad_gamma_rejected() {
        assert!(compute_returns(&[], 0.9).is_err());
        assert!(compute_returns(&[1.0], 1.0).is_err());
    }
}
