use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{IpInstance, Sense};

/// Relative objective loss of the early-fixed run against the baseline.
/// Negative values always mean the early-fixed run found a better objective.
pub fn objective_gap(obj1: f64, obj2: f64, sense: Sense) -> Result<f64> {
    if obj1 == 0.0 {
        return Err(Error::invalid("obj1", "gap is undefined for a zero baseline objective"));
    }
    Ok(match sense {
        Sense::Maximize => (obj1 - obj2) / obj1,
        Sense::Minimize => (obj2 - obj1) / obj1,
    })
}

/// `(n - sol_diff) / n * 100`. `sol_diff` may be a mean over instances.
pub fn accuracy(n: usize, sol_diff: f64) -> f64 {
    100.0 * (n as f64 - sol_diff) / n as f64
}

/// `time1 / time2`.
pub fn speedup(time1: f64, time2: f64) -> Result<f64> {
    if !(time2 > 0.0) {
        return Err(Error::invalid("time2", "speedup needs a positive denominator"));
    }
    Ok(time1 / time2)
}

/// Display form of a speedup, truncated (not rounded) to one decimal.
pub fn format_speedup(ratio: f64) -> String {
    // the small nudge keeps exact tenths such as 2.0 from printing as 1.9
    let tenths = (ratio * 10.0 + 1e-9).floor();
    format!("{:.1}x", tenths / 10.0)
}

/// Number of constraint rows violated by `x`.
pub fn count_infeasible(inst: &IpInstance, x: &[u8]) -> usize {
    inst.count_violations(x)
}

/// Number of positions where two binary vectors differ.
pub fn solution_difference(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Baseline versus early-fixed comparison on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub obj1: f64,
    pub obj2: f64,
    pub gap: f64,
    /// Wall-clock seconds; absent when timing is suppressed.
    pub time1: Option<f64>,
    pub time2: Option<f64>,
    pub speedup: Option<f64>,
    pub iters1: usize,
    pub iters2: usize,
    pub iter_speedup: f64,
    pub sol_diff: usize,
    pub accuracy: f64,
    pub infeasible: usize,
}

impl Metrics {
    #[allow(clippy::too_many_arguments)]
    pub fn compare(
        inst: &IpInstance,
        x1: &[u8],
        obj1: f64,
        iters1: usize,
        x2: &[u8],
        obj2: f64,
        iters2: usize,
        times: Option<(f64, f64)>,
    ) -> Result<Metrics> {
        let sol_diff = solution_difference(x1, x2);
        Ok(Metrics {
            obj1,
            obj2,
            gap: objective_gap(obj1, obj2, inst.sense)?,
            time1: times.map(|t| t.0),
            time2: times.map(|t| t.1),
            speedup: times.map(|(t1, t2)| speedup(t1, t2)).transpose()?,
            iters1,
            iters2,
            iter_speedup: speedup(iters1 as f64, iters2.max(1) as f64)?,
            sol_diff,
            accuracy: accuracy(inst.n(), sol_diff as f64),
            infeasible: count_infeasible(inst, x2),
        })
    }
}
