//! Binary trajectory files.
//!
//! Layout (little endian): magic `BIMTRAJ\0`, u32 version, maze config TOML (u64 length +
//! UTF-8) and its SHA-256 hex, task name, shooting config TOML, then u64 trajectory count,
//! u64 train count + indices, u64 test count + indices, and per trajectory: u64 episode seed,
//! u8 terminal, u8 solved, u64 step count, per step (u64 step_count, 6×f64 state, u8 action,
//! f64 reward), then the final state (u64 step_count, 6×f64). Observations are not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dataset::{Dataset, Trajectory, Transition};
use super::shooting::ShootingConfig;
use crate::sim::{Action, BoardState, Maze, MazeConfig, Task};
use crate::util::*;
use crate::{Error, Result};

pub const TRAJ_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8] = b"BIMTRAJ\0";
const MAX_TEXT: u64 = 1 << 20;

fn write_state(w: &mut impl Write, s: &BoardState) -> Result<()> {
    write_u64(w, s.step_count)?;
    for v in s.to_array() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_state(r: &mut impl Read) -> Result<BoardState> {
    let step = read_u64(r)?;
    let mut a = [0.0; 6];
    for v in &mut a {
        *v = read_f64(r)?;
    }
    Ok(BoardState::from_array(a, step))
}

fn write_indices(w: &mut impl Write, idx: &[usize]) -> Result<()> {
    write_u64(w, idx.len() as u64)?;
    for &i in idx {
        write_u64(w, i as u64)?;
    }
    Ok(())
}

fn read_indices(r: &mut impl Read, n: usize) -> Result<Vec<usize>> {
    let len = read_u64(r)? as usize;
    if len > n {
        return Err(Error::Format("split larger than dataset".into()));
    }
    (0..len)
        .map(|_| {
            let i = read_u64(r)? as usize;
            if i >= n {
                return Err(Error::Format(format!("split index {i} out of range")));
            }
            Ok(i)
        })
        .collect()
}

pub fn save_dataset(path: impl AsRef<Path>, maze: &Maze, dataset: &Dataset) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, TRAJ_FORMAT_VERSION)?;
    write_str(&mut w, &maze.config().to_toml_string())?;
    write_str(&mut w, &maze.hash())?;
    write_str(&mut w, &dataset.task.to_string())?;
    write_str(
        &mut w,
        &toml::to_string(&dataset.shooting).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    write_u64(&mut w, dataset.trajectories.len() as u64)?;
    write_indices(&mut w, &dataset.train)?;
    write_indices(&mut w, &dataset.test)?;
    for t in &dataset.trajectories {
        write_u64(&mut w, t.episode_seed)?;
        write_u8(&mut w, t.terminal as u8)?;
        write_u8(&mut w, t.solved as u8)?;
        write_u64(&mut w, t.steps.len() as u64)?;
        for s in &t.steps {
            write_state(&mut w, &s.state)?;
            write_u8(&mut w, s.action.index() as u8)?;
            write_f64(&mut w, s.reward)?;
        }
        write_state(&mut w, &t.final_state)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a dataset and rebuilds the maze it was generated on; the stored geometry hash
/// must match the rebuilt maze.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Maze, Dataset)> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC)?;
    let version = read_u32(&mut r)?;
    if version != TRAJ_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported trajectory format version {version}")));
    }
    let maze = Maze::from_config(&MazeConfig::from_toml_str(&read_str(&mut r, MAX_TEXT)?)?)?;
    let hash = read_str(&mut r, 128)?;
    if hash != maze.hash() {
        return Err(Error::Format("geometry hash mismatch".into()));
    }
    let task: Task = read_str(&mut r, 64)?.parse()?;
    let shooting: ShootingConfig =
        toml::from_str(&read_str(&mut r, MAX_TEXT)?).map_err(|e| Error::Format(e.to_string()))?;
    let n = read_u64(&mut r)? as usize;
    let train = read_indices(&mut r, n)?;
    let test = read_indices(&mut r, n)?;
    let mut trajectories = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let episode_seed = read_u64(&mut r)?;
        let terminal = read_u8(&mut r)? != 0;
        let solved = read_u8(&mut r)? != 0;
        let len = read_u64(&mut r)? as usize;
        let mut steps = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            let state = read_state(&mut r)?;
            let code = read_u8(&mut r)? as usize;
            let action = Action::from_index(code)
                .ok_or_else(|| Error::Format(format!("bad action id {code}")))?;
            let reward = read_f64(&mut r)?;
            steps.push(Transition { state, action, reward });
        }
        let final_state = read_state(&mut r)?;
        trajectories.push(Trajectory {
            episode_seed,
            steps,
            final_state,
            terminal,
            solved,
        });
    }
    Ok((
        maze,
        Dataset {
            task,
            shooting,
            trajectories,
            train,
            test,
        },
    ))
}
