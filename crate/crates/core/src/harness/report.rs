use std::fmt;

use crate::rl::LearningCurve;

/// Outcome of comparing how fast two learning curves reach a return threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Speedup {
    /// Baseline steps over treatment steps.
    Ratio(f64),
    /// At least one curve never reached the threshold; the first-crossing steps are given for
    /// whichever did.
    NotReached {
        baseline: Option<u64>,
        treatment: Option<u64>,
    },
}

impl Speedup {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            Speedup::Ratio(r) => Some(*r),
            Speedup::NotReached { .. } => None,
        }
    }

    /// Lower bound on the ratio when the baseline ran `baseline_budget` steps without
    /// reaching the threshold while the treatment did.
    pub fn censored_lower_bound(&self, baseline_budget: u64) -> Option<f64> {
        match *self {
            Speedup::Ratio(r) => Some(r),
            Speedup::NotReached {
                baseline: None,
                treatment: Some(t),
            } => Some(baseline_budget as f64 / t as f64),
            Speedup::NotReached { .. } => None,
        }
    }
}

impl fmt::Display for Speedup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |o: Option<u64>| o.map_or("never".to_string(), |s| s.to_string());
        match self {
            Speedup::Ratio(r) => write!(f, "{r:.3}"),
            Speedup::NotReached { baseline, treatment } => write!(
                f,
                "not reached (baseline {}, treatment {})",
                opt(*baseline),
                opt(*treatment)
            ),
        }
    }
}

/// Steps-to-threshold ratio, using the first step at which the full 100-episode moving
/// average reaches `threshold`.
pub fn speedup_report(baseline: &LearningCurve, treatment: &LearningCurve, threshold: f64) -> Speedup {
    match (baseline.steps_to_threshold(threshold), treatment.steps_to_threshold(threshold)) {
        (Some(b), Some(t)) if t > 0 => Speedup::Ratio(b as f64 / t as f64),
        (b, t) => Speedup::NotReached {
            baseline: b,
            treatment: t,
        },
    }
}

/// Median of a non-empty slice (mean of the middle two for even lengths). NaN-free input.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A curve whose 100-episode average first reaches 1.0 at `cross` (a multiple of 1000).
    fn curve_crossing_at(cross: u64) -> LearningCurve {
        let mut c = LearningCurve::new();
        let first_one = cross / 1000 - 99;
        for i in 1..=cross / 1000 + 10 {
            c.push(i * 1000, if i >= first_one { 1.0 } else { 0.0 }, 0.0).unwrap();
        }
        c
    }

    #[test]
    fn identical_curves_give_one() {
        let c = curve_crossing_at(300_000);
        assert_eq!(speedup_report(&c, &c, 1.0), Speedup::Ratio(1.0));
    }

    #[test]
    fn crossing_ratio_arithmetic() {
        let b = curve_crossing_at(1_000_000);
        let t = curve_crossing_at(400_000);
        assert_eq!(b.steps_to_threshold(1.0), Some(1_000_000));
        assert_eq!(speedup_report(&b, &t, 1.0), Speedup::Ratio(2.5));
    }

    #[test]
    fn not_reached_is_reported_with_bound() {
        let b = curve_crossing_at(500_000);
        let t = curve_crossing_at(200_000);
        let r = speedup_report(&b, &t, 2.0);
        assert_eq!(r, Speedup::NotReached { baseline: None, treatment: None });
        assert_eq!(r.ratio(), None);
        let flat = LearningCurve::new();
        let r = speedup_report(&flat, &t, 1.0);
        assert_eq!(r.censored_lower_bound(1_000_000), Some(5.0));
        assert!(r.to_string().starts_with("not reached"));
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
