use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::expert::{DatasetOptions, ShootingConfig};
use crate::imitation::{DaggerConfig, PretrainConfig};
use crate::rl::A3CConfig;
use crate::sim::{Maze, MazeConfig, Task};
use crate::{Error, Result};

/// One learning algorithm in the comparison grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    /// A3C from random initialisation.
    A3C,
    /// Supervised pre-training, then A3C fine-tuning.
    PreA3C,
    /// A3C on value-shaped rewards.
    A3CShape,
    /// Pre-training, then A3C on value-shaped rewards.
    PreA3CShape,
    Dagger,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::A3C,
        Variant::PreA3C,
        Variant::A3CShape,
        Variant::PreA3CShape,
        Variant::Dagger,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::A3C => "a3c",
            Variant::PreA3C => "pre_a3c",
            Variant::A3CShape => "a3c_shape",
            Variant::PreA3CShape => "pre_a3c_shape",
            Variant::Dagger => "dagger",
        }
    }

    pub fn pretrained(&self) -> bool {
        matches!(self, Variant::PreA3C | Variant::PreA3CShape)
    }

    pub fn shaped(&self) -> bool {
        matches!(self, Variant::A3CShape | Variant::PreA3CShape)
    }

    pub fn is_a3c(&self) -> bool {
        *self != Variant::Dagger
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MazePreset {
    /// The 5-ring board.
    Default,
    /// The reduced 3-ring board.
    Desk,
}

/// Tasks × variants × seeds, with every stage's configuration.
///
/// Per-run seeds: A3C and DAgger runs use each entry of `seeds`; the expert, dataset split and
/// pre-training use the seeds inside their own sections. All of them end up in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub tasks: Vec<Task>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Relative paths resolve against the plan file's directory.
    pub out_dir: PathBuf,
    pub preset: Option<MazePreset>,
    /// Explicit board; mutually exclusive with `preset`.
    pub maze: Option<MazeConfig>,
    pub expert: ShootingConfig,
    pub dataset: DatasetOptions,
    /// Bin width of the solved-length histogram.
    pub histogram_bin: usize,
    pub pretrain: PretrainConfig,
    /// Value-only training for the shaping potential; defaults to the pre-training settings.
    pub value: Option<PretrainConfig>,
    /// A3C settings; `task` and `seed` are filled in per run.
    pub rl: A3CConfig,
    /// DAgger settings; `task` and `seed` are filled in per run.
    pub dagger: DaggerConfig,
    /// Speed-up threshold as a fraction of the expert's mean dataset return.
    pub threshold_fraction: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: "experiment".into(),
            tasks: vec![Task::Full],
            variants: Variant::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("run"),
            preset: Some(MazePreset::Desk),
            maze: None,
            expert: ShootingConfig::default(),
            dataset: DatasetOptions {
                n_trajectories: 200,
                max_steps: 3000,
                ..Default::default()
            },
            histogram_bin: 50,
            pretrain: PretrainConfig::default(),
            value: None,
            rl: A3CConfig {
                budget: 2_000_000,
                ..Default::default()
            },
            dagger: DaggerConfig::default(),
            threshold_fraction: 0.8,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Loads a plan; a relative `out_dir` is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut plan = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if plan.out_dir.is_relative() {
            if let Some(dir) = path.parent() {
                plan.out_dir = dir.join(&plan.out_dir);
            }
        }
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn maze_config(&self) -> Result<MazeConfig> {
        match (&self.maze, self.preset) {
            (Some(_), Some(_)) => Err(Error::Config("give either `preset` or `[maze]`, not both".into())),
            (Some(m), None) => Ok(m.clone()),
            (None, Some(MazePreset::Desk)) => Ok(Maze::desk_three_ring().config()),
            (None, Some(MazePreset::Default)) | (None, None) => Ok(MazeConfig::default()),
        }
    }

    pub fn value_config(&self) -> PretrainConfig {
        self.value.unwrap_or(self.pretrain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.variants.is_empty() {
            return Err(Error::Config("plan needs at least one task and one variant".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("plan needs at least one seed".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds in plan".into()));
        }
        if self.histogram_bin == 0 {
            return Err(Error::Config("histogram_bin must be positive".into()));
        }
        if !(self.threshold_fraction > 0.0) {
            return Err(Error::Config("threshold_fraction must be positive".into()));
        }
        let maze = Maze::from_config(&self.maze_config()?)?;
        for t in &self.tasks {
            t.validate(maze.geometry().n_walls())?;
        }
        self.expert.validate()?;
        self.pretrain.validate()?;
        self.value_config().validate()?;
        self.rl.validate()?;
        for p in [self.pretrain.arch, self.value_config().arch, self.dagger.train.arch] {
            if p != self.rl.arch {
                return Err(Error::Config("all networks in a plan must share one architecture".into()));
            }
        }
        if self.value_config().gamma != self.rl.gamma {
            return Err(Error::Config("value network gamma must equal the A3C gamma".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("pre+a3c".parse::<Variant>().unwrap(), Variant::PreA3C);
        assert!("ppo".parse::<Variant>().is_err());
    }

    #[test]
    fn default_plan_roundtrips_through_toml() {
        let plan = ExperimentPlan::default();
        plan.validate().unwrap();
        let back = ExperimentPlan::from_toml_str(&plan.to_toml_string()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn sparse_plan_file_uses_defaults() {
        let plan = ExperimentPlan::from_toml_str(
            r#"
            name = "small"
            tasks = ["FULL", "STG1"]
            variants = ["a3c", "pre_a3c"]
            seeds = [4]
            [rl]
            budget = 1000
            "#,
        )
        .unwrap();
        assert_eq!(plan.tasks, vec![Task::Full, Task::STG1]);
        assert_eq!(plan.rl.budget, 1000);
        assert_eq!(plan.rl.workers, A3CConfig::default().workers);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        assert!(ExperimentPlan::from_toml_str("tasks = [\"STG4\"]").is_err());
        assert!(ExperimentPlan::from_toml_str("seeds = [1, 1]").is_err());
        assert!(ExperimentPlan::from_toml_str("bogus = 3").is_err());
        assert!(ExperimentPlan::from_toml_str("[value]\ngamma = 0.9").is_err());
    }
}
