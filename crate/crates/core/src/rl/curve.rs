use std::collections::VecDeque;

use crate::{Error, Result};

pub const MA_WINDOW: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    /// Global environment steps when the episode ended.
    pub step: u64,
    pub episode_return: f64,
    /// Mean of the last (up to) 100 episode returns, this one included.
    pub ma100: f64,
    pub wallclock_s: f64,
}

/// Per-episode training returns against global environment steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    window: VecDeque<f64>,
    window_sum: f64,
}

impl LearningCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: u64, episode_return: f64, wallclock_s: f64) -> Result<()> {
        if let Some(last) = self.points.last() {
            if step <= last.step {
                return Err(Error::Precondition(format!(
                    "curve steps must increase ({} after {})",
                    step, last.step
                )));
            }
        }
        self.window.push_back(episode_return);
        self.window_sum += episode_return;
        if self.window.len() > MA_WINDOW {
            self.window_sum -= self.window.pop_front().unwrap_or(0.0);
        }
        // recompute occasionally to keep the running sum from drifting
        if self.points.len() % 1000 == 999 {
            self.window_sum = self.window.iter().sum();
        }
        self.points.push(CurvePoint {
            step,
            episode_return,
            ma100: self.window_sum / self.window.len() as f64,
            wallclock_s,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// First global step at which a full 100-episode moving average reaches `threshold`.
    pub fn steps_to_threshold(&self, threshold: f64) -> Option<u64> {
        self.points
            .iter()
            .skip(MA_WINDOW - 1)
            .find(|p| p.ma100 >= threshold)
            .map(|p| p.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,episode_return,ma100,wallclock_s\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                p.step, p.episode_return, p.ma100, p.wallclock_s
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut curve = LearningCurve::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse = |k: usize| -> Result<f64> {
                f.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("curve line {}: bad field {k}", i + 1)))
            };
            curve.push(parse(0)? as u64, parse(1)?, parse(3)?)?;
        }
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_and_threshold() {
        let mut c = LearningCurve::new();
        for i in 0..250u64 {
            let r = if i < 150 { 0.0 } else { 1.0 };
            c.push(10 * (i + 1), r, 0.0).unwrap();
        }
        assert_eq!(c.points[0].ma100, 0.0);
        // the 100-window first reaches 0.5 after 50 ones
        assert_eq!(c.steps_to_threshold(0.5), Some(10 * 200));
        assert_eq!(c.steps_to_threshold(1.1), None);
    }

    #[test]
    fn partial_window_never_counts() {
        let mut c = LearningCurve::new();
        for i in 0..50u64 {
            c.push(i + 1, 5.0, 0.0).unwrap();
        }
        assert_eq!(c.points[49].ma100, 5.0);
        assert_eq!(c.steps_to_threshold(1.0), None);
    }

    #[test]
    fn steps_must_increase() {
        let mut c = LearningCurve::new();
        c.push(5, 0.0, 0.0).unwrap();
        assert!(c.push(5, 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let mut c = LearningCurve::new();
        c.push(3, 1.0, 0.5).unwrap();
        c.push(9, -1.0, 1.25).unwrap();
        let back = LearningCurve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back.points, c.points);
    }
}
