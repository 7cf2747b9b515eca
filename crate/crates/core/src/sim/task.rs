use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reward and termination rules.
///
/// `Full` pays +1/−1 for every gate crossed toward/away from the center and ends when the
/// ball reaches the central goal disc. `StepsToGo(k)` pays a single +1 when the ball crosses
/// wall `k` inward (wall 1 is the outermost) and ends there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Full,
    StepsToGo(usize),
}

impl Task {
    pub const STG1: Task = Task::StepsToGo(1);
    pub const STG2: Task = Task::StepsToGo(2);

    pub fn validate(&self, n_walls: usize) -> Result<()> {
        match *self {
            Task::Full => Ok(()),
            Task::StepsToGo(k) if k >= 1 && k <= n_walls => Ok(()),
            Task::StepsToGo(k) => Err(Error::Config(format!(
                "STG{k} needs a wall {k}, board has {n_walls}"
            ))),
        }
    }

    pub fn reward(&self, events: &StepEvents) -> f64 {
        match self {
            Task::Full => events
                .gate_crossings
                .iter()
                .map(|c| match c.direction {
                    Direction::Inward => 1.0,
                    Direction::Outward => -1.0,
                })
                .sum(),
            Task::StepsToGo(_) => {
                if events.terminal {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Default episode step cap for learning runs.
    pub fn episode_cap(&self) -> usize {
        match self {
            Task::Full => 2000,
            Task::StepsToGo(_) => 1000,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Full => write!(f, "FULL"),
            Task::StepsToGo(k) => write!(f, "STG{k}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        if up == "FULL" {
            return Ok(Task::Full);
        }
        if let Some(k) = up.strip_prefix("STG") {
            if let Ok(k) = k.parse::<usize>() {
                if k >= 1 {
                    return Ok(Task::StepsToGo(k));
                }
            }
        }
        Err(Error::Config(format!("unknown task '{s}' (expected FULL or STGk)")))
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Inward,
    Outward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCrossing {
    /// 1-based, outermost wall first.
    pub wall: usize,
    pub direction: Direction,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub gate_crossings: Vec<GateCrossing>,
    pub wall_contacts: u32,
    pub terminal: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for name in ["FULL", "STG1", "STG2", "stg3"] {
            let t: Task = name.parse().unwrap();
            assert_eq!(t.to_string(), name.to_ascii_uppercase());
        }
        assert!("STG0".parse::<Task>().is_err());
        assert!("nope".parse::<Task>().is_err());
    }

    #[test]
    fn stg_needs_wall() {
        assert!(Task::STG2.validate(3).is_ok());
        assert!(Task::StepsToGo(4).validate(3).is_err());
    }

    #[test]
    fn full_reward_counts_directions() {
        let ev = StepEvents {
            gate_crossings: vec![
                GateCrossing { wall: 1, direction: Direction::Inward },
                GateCrossing { wall: 2, direction: Direction::Inward },
                GateCrossing { wall: 2, direction: Direction::Outward },
            ],
            wall_contacts: 0,
            terminal: false,
        };
        assert_eq!(Task::Full.reward(&ev), 1.0);
        assert_eq!(Task::STG1.reward(&ev), 0.0);
    }
}
