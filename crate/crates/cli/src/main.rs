use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bimgame::expert::{build_dataset, length_histogram, load_dataset, save_dataset, DatasetOptions, ShootingConfig};
use bimgame::harness::{gradcheck_suite, run_plan, ExperimentPlan};
use bimgame::imitation::{dagger, pretrain, train_value_only, DaggerConfig, PretrainConfig};
use bimgame::neural::NetworkParams;
use bimgame::rl::{train, A3CConfig, Init, ShapingConfig};
use bimgame::sim::{Action, Maze, MazeConfig, Task};

#[derive(Parser)]
#[command(name = "bimgame", version, about = "Ball-in-maze simulator, MPC expert, imitation and A3C")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print board geometry, a reset state and a short rollout; optionally save a frame.
    SimInspect {
        #[command(flatten)]
        board: Board,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rollout length with a repeating action cycle.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Write the final observation as a PNG.
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Write the wall and gate table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    #[command(subcommand)]
    Expert(ExpertCmd),
    #[command(subcommand)]
    Nn(NnCmd),
    #[command(subcommand)]
    Imitate(ImitateCmd),
    #[command(subcommand)]
    Rl(RlCmd),
    #[command(subcommand)]
    Plan(PlanCmd),
}

#[derive(Args)]
struct Board {
    /// `default` (5 rings), `desk` (3 rings) or a TOML board file.
    #[arg(long, default_value = "default")]
    geometry: String,
}

impl Board {
    fn maze(&self) -> Result<Maze> {
        Ok(match self.geometry.as_str() {
            "default" => Maze::default_five_ring(),
            "desk" => Maze::desk_three_ring(),
            path => Maze::from_config(&MazeConfig::load(path).with_context(|| format!("reading {path}"))?)?,
        })
    }
}

#[derive(Subcommand)]
enum ExpertCmd {
    /// Generate solved expert trajectories by random-shooting MPC.
    Generate {
        #[command(flatten)]
        board: Board,
        #[arg(long, default_value = "FULL")]
        task: Task,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(short = 'K', long = "K", default_value_t = 10)]
        k: usize,
        #[arg(short = 'H', long = "H", default_value_t = 20)]
        h: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        max_steps: usize,
        #[arg(long)]
        keep_unsolved: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solved-length histogram of a trajectory file as CSV.
    Histogram {
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        bin: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NnCmd {
    /// Finite-difference check of the imitation and A3C gradients on the tiny network.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML file with pre-training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

impl PretrainArgs {
    fn config(&self) -> Result<PretrainConfig> {
        let mut cfg: PretrainConfig = match &self.config {
            Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
            None => PretrainConfig::default(),
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum ImitateCmd {
    /// Policy and value pre-training on expert trajectories.
    Pretrain(PretrainArgs),
    /// Value-only training; writes a frozen checkpoint for reward shaping.
    Value(PretrainArgs),
    /// DAgger baseline.
    Dagger {
        #[command(flatten)]
        board: Board,
        #[arg(long, default_value = "STG1")]
        task: Task,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RlCmd {
    /// A3C training, optionally from a pretrained checkpoint and with value shaping.
    Train {
        #[command(flatten)]
        board: Board,
        #[arg(long, default_value = "FULL")]
        task: Task,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        shaping: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        workers: usize,
        /// Total environment steps, e.g. 2e6.
        #[arg(long, default_value = "1e6")]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threaded: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PlanCmd {
    /// Run (or resume) every stage of an experiment plan.
    Run {
        plan: PathBuf,
        /// Override the plan's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::SimInspect {
            board,
            seed,
            steps,
            png,
            size,
            csv,
        } => {
            let maze = board.maze()?;
            let g = maze.geometry();
            if let Some(p) = csv {
                write_file(&p, &g.to_csv())?;
                println!("wrote {}", p.display());
            }
            println!("board hash {}", maze.hash());
            println!("board radius {} ball radius {}", g.board_radius, g.ball_radius);
            for (i, w) in g.walls.iter().enumerate() {
                let gates: Vec<String> = w.gates.iter().map(|gt| format!("{:.1}°", gt.center.to_degrees())).collect();
                println!("wall {} radius {} gates at [{}]", i + 1, w.radius, gates.join(", "));
            }
            let mut s = maze.reset(seed);
            println!("reset: {s:?} ring {}", maze.ring_index(s.ball_pos));
            for t in 0..steps {
                let a = Action::ALL[t % Action::ALL.len()];
                let out = maze.step(&s, a, Task::Full)?;
                s = out.state;
                if out.reward != 0.0 || out.events.terminal {
                    println!("step {} reward {} terminal {}", t + 1, out.reward, out.events.terminal);
                }
            }
            println!("after {steps} steps: {s:?} ring {}", maze.ring_index(s.ball_pos));
            if let Some(p) = png {
                maze.render(&s, size).save_png(&p)?;
                println!("wrote {}", p.display());
            }
        }
        Cmd::Expert(ExpertCmd::Generate {
            board,
            task,
            n,
            k,
            h,
            seed,
            max_steps,
            keep_unsolved,
            out,
        }) => {
            let maze = board.maze()?;
            let cfg = ShootingConfig {
                candidates: k,
                horizon: h,
                rng_seed: seed,
                ..Default::default()
            };
            let opts = DatasetOptions {
                n_trajectories: n,
                max_steps,
                keep_unsolved,
                first_seed: seed,
                ..Default::default()
            };
            let data = build_dataset(&maze, task, &cfg, &opts)?;
            if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(d)?;
            }
            save_dataset(&out, &maze, &data)?;
            let solved = data.trajectories.iter().filter(|t| t.solved).count();
            println!(
                "{} trajectories ({solved} solved of {n} episodes), mean return {:.3}, wrote {}",
                data.trajectories.len(),
                data.mean_return(),
                out.display()
            );
        }
        Cmd::Expert(ExpertCmd::Histogram { data, bin, out }) => {
            let (_, d) = load_dataset(&data)?;
            let csv = length_histogram(&d.trajectories, bin)?.to_csv();
            match out {
                Some(p) => write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Cmd::Nn(NnCmd::Gradcheck { seed }) => {
            let (pre, rl) = gradcheck_suite(seed)?;
            for (name, r) in [("pretrain", &pre), ("a3c", &rl)] {
                println!(
                    "{name}: {} params, {} checked, {} kinked, max rel error {:.3e}",
                    r.n_params, r.checked, r.kinked, r.max_rel_error
                );
            }
            if pre.max_rel_error > 1e-4 || rl.max_rel_error > 1e-4 {
                bail!("gradient check failed");
            }
        }
        Cmd::Imitate(ImitateCmd::Pretrain(args)) => {
            let cfg = args.config()?;
            let (maze, data) = load_dataset(&args.data)?;
            let res = pretrain(&maze, &data, &cfg)?;
            res.params.save(&args.out)?;
            if let Some(c) = &args.curve {
                write_file(c, &res.curve_csv())?;
            }
            println!(
                "best test accuracy {:.4} at epoch {}, wrote {}",
                res.best_test.accuracy,
                res.best_epoch,
                args.out.display()
            );
        }
        Cmd::Imitate(ImitateCmd::Value(args)) => {
            let cfg = args.config()?;
            let (maze, data) = load_dataset(&args.data)?;
            let res = train_value_only(&maze, &data, &cfg)?;
            res.params.save(&args.out)?;
            if let Some(c) = &args.curve {
                write_file(c, &res.curve_csv())?;
            }
            println!(
                "best test value MSE {:.4} at epoch {}, wrote {}",
                res.best_test.value_mse,
                res.best_epoch,
                args.out.display()
            );
        }
        Cmd::Imitate(ImitateCmd::Dagger {
            board,
            task,
            iterations,
            episodes,
            seed,
            out,
        }) => {
            let maze = board.maze()?;
            let cfg = DaggerConfig {
                task,
                iterations,
                episodes_per_iteration: episodes,
                seed,
                ..Default::default()
            };
            let expert = ShootingConfig {
                rng_seed: seed,
                ..Default::default()
            };
            let res = dagger(&maze, &expert, &cfg)?;
            fs::create_dir_all(&out)?;
            write_file(&out.join("dagger.csv"), &res.metrics_csv())?;
            res.params.save(out.join("dagger.net"))?;
            for it in &res.iterations {
                println!(
                    "iteration {} queries {} eval return {:.3} solved {:.2}",
                    it.iteration, it.expert_queries, it.eval.mean_return, it.eval.solved_fraction
                );
            }
        }
        Cmd::Rl(RlCmd::Train {
            board,
            task,
            init,
            shaping,
            workers,
            budget,
            seed,
            threaded,
            out,
        }) => {
            if !(budget >= 0.0) {
                bail!("budget must be non-negative");
            }
            let maze = board.maze()?;
            let cfg = A3CConfig {
                task,
                workers,
                budget: budget as u64,
                seed,
                threaded,
                ..Default::default()
            };
            let show = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
            let (init_name, shaping_name) = (show(&init), show(&shaping));
            let init = match &init {
                Some(p) => Init::Params(NetworkParams::load(p).with_context(|| format!("loading {}", p.display()))?),
                None => Init::Random,
            };
            let shaping = match &shaping {
                Some(p) => Some(ShapingConfig::new(NetworkParams::load(p)?, cfg.gamma)?),
                None => None,
            };
            let res = train(&maze, &cfg, init, shaping.as_ref())?;
            fs::create_dir_all(&out)?;
            write_file(&out.join("curve.csv"), &res.curve.to_csv())?;
            res.params.save(out.join("final.net"))?;
            let manifest = format!(
                "task = {task}\nseed = {seed}\nworkers = {workers}\nbudget = {}\ninit = {init_name}\nshaping = {shaping_name}\ntotal_steps = {}\nepisodes = {}\n",
                cfg.budget,
                res.total_steps,
                res.episodes.len()
            );
            write_file(&out.join("manifest.txt"), &manifest)?;
            let last = res.curve.points.last().map_or(f64::NAN, |p| p.ma100);
            println!("{} steps, {} episodes, final ma100 {last:.3}", res.total_steps, res.episodes.len());
        }
        Cmd::Plan(PlanCmd::Run { plan, out }) => {
            let mut p = ExperimentPlan::load(&plan)?;
            if let Some(o) = out {
                p.out_dir = o;
            }
            let summary = run_plan(&p)?;
            println!("executed: {}", summary.executed.join(", "));
            println!("skipped: {}", summary.skipped.join(", "));
            for r in &summary.reports {
                print!("{}", r.to_text());
            }
        }
    }
    Ok(())
}
