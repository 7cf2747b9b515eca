use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::manifest::{Manifest, StageRecord};
use super::plan::{ExperimentPlan, Variant};
use super::plot::{bar_chart, legend_csv, line_chart, save_png, series_from_csv, Series};
use super::report::{median, speedup_report, Speedup};
use crate::expert::{build_dataset, length_histogram, load_dataset, save_dataset, Dataset};
use crate::imitation::{dagger, pretrain, train_value_only, DaggerConfig};
use crate::neural::NetworkParams;
use crate::rl::{train, A3CConfig, A3CResult, Init, LearningCurve, ShapingConfig};
use crate::sim::{Maze, Task};
use crate::util::sha256_hex;
use crate::{Error, Result};

pub const SCHEMA: &str = "\
# Run directory layout

- `manifest.txt`: one `stage <name> <hash> seeds=<list>` line per completed stage followed by
  `artifact <path> <stage> <hash>` lines for each file it produced.
- `plan.toml`: the plan this directory was last run with.
- `data/<task>.traj`: expert trajectories (binary).
- `ckpt/*.net`: network checkpoints (binary).

# CSV columns

- `curves/<task>_lengths.csv`: `bin_start,bin_end,count`, solved expert trajectory lengths.
- `curves/<task>_pretrain.csv`, `curves/<task>_vhat.csv`: `epoch,train_loss,test_accuracy,test_value_mse`;
  epoch 0 is the untrained network, empty fields mean no evaluation that epoch.
- `curves/<task>_<variant>_s<seed>.csv`: `step,episode_return,ma100,wallclock_s`, one row per
  training episode; `step` is the global environment step count when it ended, `ma100` the mean
  of the last 100 episode returns (task reward, even when training on shaped rewards).
- `curves/<task>_<variant>_s<seed>_eval.csv`: `step,mean_return,solved_fraction,mean_steps`,
  greedy evaluation on held-out seeds.
- `curves/<task>_dagger_s<seed>.csv`: `iteration,beta,episodes,steps,expert_queries,eval_return,eval_solved`.
- `plots/<task>_curves.png`: `ma100` against `step` for each A3C variant (first plan seed) and
  `eval_return` against `expert_queries` for DAgger; colours in `plots/<task>_curves_legend.csv`.
- `plots/<task>_lengths.png`: the length histogram.
- `reports/<task>.txt`: speed-up ratios and the DAgger comparison, `key = value` lines.
";

/// What happened to each stage during `run_plan`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub reports: Vec<TaskReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskReport {
    pub task: Task,
    pub expert_mean_return: f64,
    pub threshold: f64,
    /// (seed, random-init vs pretrained-init A3C).
    pub pretrain_speedups: Vec<(u64, Speedup)>,
    /// Median ratio over seeds where the baseline never reached the threshold counts with
    /// its budget-censored lower bound. `None` if some seed has neither.
    pub median_speedup: Option<f64>,
    /// (seed, shaped vs unshaped pretrained A3C).
    pub shaping_speedups: Vec<(u64, Speedup)>,
    /// Expert labels behind the pre-training dataset (train split steps).
    pub pretrain_queries: usize,
    /// Per seed: DAgger evaluation return at the last iteration within `pretrain_queries`.
    pub dagger_matched_return: Vec<(u64, f64)>,
    /// Per seed: final greedy evaluation return of pretrained A3C.
    pub pre_a3c_return: Vec<(u64, f64)>,
}

impl TaskReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "task = {}\nexpert_mean_return = {}\nthreshold = {}\npretrain_queries = {}\n",
            self.task, self.expert_mean_return, self.threshold, self.pretrain_queries
        );
        for (s, r) in &self.pretrain_speedups {
            out.push_str(&format!("speedup_pre_vs_random_s{s} = {r}\n"));
        }
        if let Some(m) = self.median_speedup {
            out.push_str(&format!("speedup_pre_vs_random_median = {m}\n"));
        }
        for (s, r) in &self.shaping_speedups {
            out.push_str(&format!("speedup_shaped_vs_unshaped_pre_s{s} = {r}\n"));
        }
        for (s, r) in &self.dagger_matched_return {
            out.push_str(&format!("dagger_return_at_matched_queries_s{s} = {r}\n"));
        }
        for (s, r) in &self.pre_a3c_return {
            out.push_str(&format!("pre_a3c_eval_return_s{s} = {r}\n"));
        }
        out
    }
}

/// Exclusive writer lock on a run directory, released on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<RunLock> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Precondition(format!(
                "{} is locked by another run (remove {} if that run is dead)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn hash_of(parts: &[&str]) -> String {
    sha256_hex(parts.join("\n\u{1f}\n").as_bytes())[..16].to_string()
}

fn toml_of<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("config serializes")
}

fn tag(task: Task) -> String {
    task.to_string().to_ascii_lowercase()
}

struct Runner<'a> {
    plan: &'a ExperimentPlan,
    dir: PathBuf,
    maze: Maze,
    manifest: Manifest,
    summary: RunSummary,
}

impl Runner<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn write(&self, rel: &str, contents: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d)?;
        }
        fs::write(p, contents)?;
        Ok(())
    }

    /// Runs `body` unless the stage already completed with the same hash and its artifacts
    /// are all present.
    fn stage(
        &mut self,
        name: &str,
        hash: &str,
        seeds: &[u64],
        artifacts: &[String],
        body: impl FnOnce(&Self) -> Result<()>,
    ) -> Result<()> {
        let present = |r: &Self| artifacts.iter().all(|a| r.path(a).exists());
        match self.manifest.get(name) {
            Some(rec) if rec.hash != hash => {
                return Err(Error::Stale(format!(
                    "stage {name} was produced with config {} but the plan now gives {hash}; \
                     delete its artifacts and manifest entry or use a fresh directory",
                    rec.hash
                )));
            }
            Some(_) if present(self) => {
                self.summary.skipped.push(name.to_string());
                return Ok(());
            }
            Some(_) => {}
            None => {
                if let Some(a) = artifacts.iter().find(|a| self.path(a).exists()) {
                    return Err(Error::Stale(format!(
                        "{a} exists but the manifest has no record of stage {name}"
                    )));
                }
            }
        }
        body(self)?;
        if let Some(a) = artifacts.iter().find(|a| !self.path(a).exists()) {
            return Err(Error::Integration(format!("stage {name} did not produce {a}")));
        }
        self.manifest.insert(StageRecord {
            name: name.to_string(),
            hash: hash.to_string(),
            seeds: seeds.to_vec(),
            artifacts: artifacts.to_vec(),
        });
        self.manifest.save(&self.path("manifest.txt"))?;
        self.summary.executed.push(name.to_string());
        Ok(())
    }

    fn rl_config(&self, task: Task, seed: u64) -> A3CConfig {
        A3CConfig {
            task,
            seed,
            ..self.plan.rl.clone()
        }
    }

    fn dagger_config(&self, task: Task, seed: u64) -> DaggerConfig {
        DaggerConfig {
            task,
            seed,
            ..self.plan.dagger.clone()
        }
    }

    fn run_task(&mut self, task: Task) -> Result<()> {
        let plan = self.plan;
        let t = tag(task);
        let maze_toml = toml_of(&self.maze.config());

        let data_hash = hash_of(&["data", &maze_toml, &task.to_string(), &toml_of(&plan.expert), &toml_of(&plan.dataset)]);
        let traj = format!("data/{t}.traj");
        let lengths = format!("curves/{t}_lengths.csv");
        let lengths_png = format!("plots/{t}_lengths.png");
        self.stage(
            &format!("data_{t}"),
            &data_hash,
            &[plan.expert.rng_seed, plan.dataset.first_seed],
            &[traj.clone(), lengths.clone(), lengths_png.clone()],
            |r| {
                let data = build_dataset(&r.maze, task, &plan.expert, &plan.dataset)?;
                fs::create_dir_all(r.path("data"))?;
                save_dataset(r.path(&traj), &r.maze, &data)?;
                let csv = length_histogram(&data.trajectories, plan.histogram_bin)?.to_csv();
                r.write(&lengths, &csv)?;
                let bins = series_from_csv("lengths", &csv, "bin_start", "count")?;
                let bars: Vec<(f64, f64, f64)> = bins
                    .points
                    .iter()
                    .map(|&(a, c)| (a, a + plan.histogram_bin as f64, c))
                    .collect();
                fs::create_dir_all(r.path("plots"))?;
                save_png(&bar_chart(&bars), r.path(&lengths_png))
            },
        )?;
        let mut deps = vec![data_hash.clone()];
        let load_data = |r: &Self| -> Result<Dataset> {
            let (m, d) = load_dataset(r.path(&traj))?;
            if m.hash() != r.maze.hash() {
                return Err(Error::Stale(format!("{traj} was generated on a different board")));
            }
            Ok(d)
        };

        let needs_pre = plan.variants.iter().any(Variant::pretrained);
        let needs_value = plan.variants.iter().any(Variant::shaped);
        let pre_hash = hash_of(&["pretrain", &data_hash, &toml_of(&plan.pretrain)]);
        let pre_ckpt = format!("ckpt/{t}_pretrain.net");
        if needs_pre {
            deps.push(pre_hash.clone());
            let csv = format!("curves/{t}_pretrain.csv");
            self.stage(
                &format!("pretrain_{t}"),
                &pre_hash,
                &[plan.pretrain.seed],
                &[pre_ckpt.clone(), csv.clone()],
                |r| {
                    let res = pretrain(&r.maze, &load_data(r)?, &plan.pretrain)?;
                    res.params.save(r.path(&pre_ckpt))?;
                    r.write(&csv, &res.curve_csv())
                },
            )?;
        }
        let vcfg = plan.value_config();
        let value_hash = hash_of(&["value", &data_hash, &toml_of(&vcfg)]);
        let value_ckpt = format!("ckpt/{t}_vhat.net");
        if needs_value {
            deps.push(value_hash.clone());
            let csv = format!("curves/{t}_vhat.csv");
            self.stage(
                &format!("value_{t}"),
                &value_hash,
                &[vcfg.seed],
                &[value_ckpt.clone(), csv.clone()],
                |r| {
                    let res = train_value_only(&r.maze, &load_data(r)?, &vcfg)?;
                    res.params.save(r.path(&value_ckpt))?;
                    r.write(&csv, &res.curve_csv())
                },
            )?;
        }

        for &v in plan.variants.iter().filter(|v| v.is_a3c()) {
            for &seed in &plan.seeds {
                let cfg = self.rl_config(task, seed);
                let upstream = format!(
                    "{}|{}",
                    if v.pretrained() { pre_hash.as_str() } else { "random" },
                    if v.shaped() { value_hash.as_str() } else { "unshaped" }
                );
                let hash = hash_of(&["rl", &maze_toml, v.name(), &upstream, &toml_of(&cfg)]);
                deps.push(hash.clone());
                let base = format!("{t}_{v}_s{seed}");
                let (ckpt, curve, evals) = (
                    format!("ckpt/{base}.net"),
                    format!("curves/{base}.csv"),
                    format!("curves/{base}_eval.csv"),
                );
                self.stage(
                    &format!("rl_{base}"),
                    &hash,
                    &[seed],
                    &[ckpt.clone(), curve.clone(), evals.clone()],
                    |r| {
                        let init = if v.pretrained() {
                            Init::Params(NetworkParams::load(r.path(&pre_ckpt))?)
                        } else {
                            Init::Random
                        };
                        let shaping = if v.shaped() {
                            Some(ShapingConfig::new(NetworkParams::load(r.path(&value_ckpt))?, vcfg.gamma)?)
                        } else {
                            None
                        };
                        let res = train(&r.maze, &cfg, init, shaping.as_ref())?;
                        res.params.save(r.path(&ckpt))?;
                        r.write(&curve, &res.curve.to_csv())?;
                        r.write(&evals, &eval_csv(&res))
                    },
                )?;
            }
        }

        if plan.variants.contains(&Variant::Dagger) {
            for &seed in &plan.seeds {
                let cfg = self.dagger_config(task, seed);
                let hash = hash_of(&["dagger", &maze_toml, &toml_of(&plan.expert), &toml_of(&cfg)]);
                deps.push(hash.clone());
                let base = format!("{t}_dagger_s{seed}");
                let (ckpt, csv) = (format!("ckpt/{base}.net"), format!("curves/{base}.csv"));
                self.stage(&format!("dagger_{t}_s{seed}"), &hash, &[seed], &[ckpt.clone(), csv.clone()], |r| {
                    let res = dagger(&r.maze, &plan.expert, &cfg)?;
                    res.params.save(r.path(&ckpt))?;
                    r.write(&csv, &res.metrics_csv())
                })?;
            }
        }

        // summary: plot and report, rebuilt from the CSVs on disk
        let sum_hash = hash_of(&["summary", &deps.join(","), &plan.threshold_fraction.to_string()]);
        let (png, legend, report_path) = (
            format!("plots/{t}_curves.png"),
            format!("plots/{t}_curves_legend.csv"),
            format!("reports/{t}.txt"),
        );
        self.stage(
            &format!("summary_{t}"),
            &sum_hash,
            &plan.seeds,
            &[png.clone(), legend.clone(), report_path.clone()],
            |r| {
                let series = r.curve_series(task)?;
                fs::create_dir_all(r.path("plots"))?;
                save_png(&line_chart(&series), r.path(&png))?;
                r.write(&legend, &legend_csv(&series))?;
                let rep = r.task_report(task, &load_data(r)?)?;
                r.write(&report_path, &rep.to_text())
            },
        )?;
        let rep = self.task_report(task, &load_data(self)?)?;
        self.summary.reports.push(rep);
        Ok(())
    }

    fn curve_series(&self, task: Task) -> Result<Vec<Series>> {
        let t = tag(task);
        let seed = self.plan.seeds[0];
        let mut out = Vec::new();
        for &v in &self.plan.variants {
            let base = format!("{t}_{v}_s{seed}");
            let text = fs::read_to_string(self.path(&format!("curves/{base}.csv")))?;
            out.push(if v.is_a3c() {
                series_from_csv(v.name(), &text, "step", "ma100")?
            } else {
                series_from_csv(v.name(), &text, "expert_queries", "eval_return")?
            });
        }
        Ok(out)
    }

    fn load_curve(&self, task: Task, v: Variant, seed: u64) -> Result<Option<LearningCurve>> {
        if !self.plan.variants.contains(&v) {
            return Ok(None);
        }
        let p = self.path(&format!("curves/{}_{v}_s{seed}.csv", tag(task)));
        Ok(Some(LearningCurve::from_csv(&fs::read_to_string(p)?)?))
    }

    fn task_report(&self, task: Task, data: &Dataset) -> Result<TaskReport> {
        let plan = self.plan;
        let expert_mean_return = data.mean_return();
        let threshold = plan.threshold_fraction * expert_mean_return;
        let pretrain_queries = data.n_steps(&data.train);
        let mut rep = TaskReport {
            task,
            expert_mean_return,
            threshold,
            pretrain_speedups: vec![],
            median_speedup: None,
            shaping_speedups: vec![],
            pretrain_queries,
            dagger_matched_return: vec![],
            pre_a3c_return: vec![],
        };
        let mut bounds = Vec::new();
        for &seed in &plan.seeds {
            let curves = |v| self.load_curve(task, v, seed);
            if let (Some(b), Some(p)) = (curves(Variant::A3C)?, curves(Variant::PreA3C)?) {
                let s = speedup_report(&b, &p, threshold);
                bounds.push(s.censored_lower_bound(plan.rl.budget));
                rep.pretrain_speedups.push((seed, s));
            }
            if let (Some(b), Some(p)) = (curves(Variant::PreA3C)?, curves(Variant::PreA3CShape)?) {
                rep.shaping_speedups.push((seed, speedup_report(&b, &p, threshold)));
            }
            if plan.variants.contains(&Variant::PreA3C) {
                let text = fs::read_to_string(self.path(&format!("curves/{}_pre_a3c_s{seed}_eval.csv", tag(task))))?;
                let evals = series_from_csv("eval", &text, "step", "mean_return")?;
                if let Some(&(_, r)) = evals.points.last() {
                    rep.pre_a3c_return.push((seed, r));
                }
            }
            if plan.variants.contains(&Variant::Dagger) {
                let text = fs::read_to_string(self.path(&format!("curves/{}_dagger_s{seed}.csv", tag(task))))?;
                let q = series_from_csv("dagger", &text, "expert_queries", "eval_return")?;
                let matched = q
                    .points
                    .iter()
                    .take_while(|p| p.0 <= pretrain_queries as f64)
                    .last()
                    .or(q.points.first());
                if let Some(&(_, r)) = matched {
                    rep.dagger_matched_return.push((seed, r));
                }
            }
        }
        if !bounds.is_empty() && bounds.iter().all(Option::is_some) {
            let v: Vec<f64> = bounds.into_iter().flatten().collect();
            rep.median_speedup = median(&v);
        }
        Ok(rep)
    }
}

fn eval_csv(res: &A3CResult) -> String {
    let mut out = String::from("step,mean_return,solved_fraction,mean_steps\n");
    for e in &res.evals {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.step, e.summary.mean_return, e.summary.solved_fraction, e.summary.mean_steps
        ));
    }
    out
}

/// Runs every stage of `plan` in dependency order inside `plan.out_dir`, skipping stages that
/// already completed with the same configuration hash.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunSummary> {
    plan.validate()?;
    let dir = plan.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let _lock = RunLock::acquire(&dir)?;
    let maze = Maze::from_config(&plan.maze_config()?)?;
    let manifest = Manifest::load_or_empty(&dir.join("manifest.txt"))?;
    let mut runner = Runner {
        plan,
        dir,
        maze,
        manifest,
        summary: RunSummary::default(),
    };
    runner.write("plan.toml", &plan.to_toml_string())?;
    runner.write("SCHEMA.md", SCHEMA)?;
    let plan_hash = hash_of(&["plan", &plan.to_toml_string()]);
    runner.manifest.insert(StageRecord {
        name: "plan".into(),
        hash: plan_hash,
        seeds: plan.seeds.clone(),
        artifacts: vec!["plan.toml".into(), "SCHEMA.md".into()],
    });
    for &task in &plan.tasks {
        runner.run_task(task)?;
    }
    runner.manifest.save(&runner.path("manifest.txt"))?;
    Ok(runner.summary)
}
