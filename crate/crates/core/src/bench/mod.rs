//! Evaluation metrics, flip diagnostics and the experiment harness.
//!
//! Every early-fixing mode is compared with a plain solve of the same
//! instance under the same solver parameters and seed.

mod flips;
mod metrics;

pub use flips::{flip_count, flip_histogram, FlipHistogram, FLIP_BIN_WIDTH};
pub use metrics::{
    accuracy, count_infeasible, format_speedup, objective_gap, solution_difference, speedup, Metrics,
};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{solve, AdmmParams};
use crate::earlyfix::{run, Policy, RunConfig, Termination};
use crate::error::Result;
use crate::instances::IpInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub run: RunConfig,
    pub admm: AdmmParams,
    /// Record wall-clock columns. Off gives byte-reproducible output.
    pub with_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub mode: String,
    pub n: usize,
    pub m: usize,
    pub metrics: Metrics,
    /// Variables fixed by the policy.
    pub fixed: usize,
    pub termination: Option<Termination>,
}

/// Column means of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub instances: usize,
    pub n: f64,
    pub m: f64,
    pub obj1: f64,
    pub obj2: f64,
    pub gap: f64,
    pub time1: Option<f64>,
    pub time2: Option<f64>,
    pub speedup: Option<f64>,
    pub iters1: f64,
    pub iters2: f64,
    pub iter_speedup: f64,
    pub sol_diff: f64,
    pub accuracy: f64,
    pub infeasible: f64,
    pub fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub modes: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
    /// Flip histogram of the plain runs, merged over instances.
    pub flips: Option<FlipHistogram>,
}

pub const CSV_HEADER: [&str; 17] = [
    "instance",
    "mode",
    "n",
    "m",
    "obj1",
    "obj2",
    "gap",
    "time1",
    "time2",
    "speedup",
    "iters1",
    "iters2",
    "iter_speedup",
    "sol_diff",
    "accuracy",
    "infeasible",
    "fixed",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl BenchReport {
    pub fn summary_for(&self, mode: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.mode == mode)
    }

    /// One row per instance and mode, then one `mean` row per mode.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_io = |e: csv::Error| crate::error::Error::Io {
            path: "metrics csv".into(),
            source: std::io::Error::other(e),
        };
        w.write_record(CSV_HEADER).map_err(to_io)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                r.instance.clone(),
                r.mode.clone(),
                r.n.to_string(),
                r.m.to_string(),
                m.obj1.to_string(),
                m.obj2.to_string(),
                m.gap.to_string(),
                opt(m.time1),
                opt(m.time2),
                opt(m.speedup),
                m.iters1.to_string(),
                m.iters2.to_string(),
                m.iter_speedup.to_string(),
                m.sol_diff.to_string(),
                m.accuracy.to_string(),
                m.infeasible.to_string(),
                r.fixed.to_string(),
            ])
            .map_err(to_io)?;
        }
        for s in &self.summary {
            w.write_record([
                "mean".to_string(),
                s.mode.clone(),
                s.n.to_string(),
                s.m.to_string(),
                s.obj1.to_string(),
                s.obj2.to_string(),
                s.gap.to_string(),
                opt(s.time1),
                opt(s.time2),
                opt(s.speedup),
                s.iters1.to_string(),
                s.iters2.to_string(),
                s.iter_speedup.to_string(),
                s.sol_diff.to_string(),
                s.accuracy.to_string(),
                s.infeasible.to_string(),
                s.fixed.to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush().map_err(|e| crate::error::Error::Io {
            path: "metrics csv".into(),
            source: e,
        })
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn summarise(mode: &str, rows: &[&BenchRow]) -> SummaryRow {
    let col = |f: &dyn Fn(&BenchRow) -> f64| mean(rows.iter().map(|r| f(r)));
    let timed = |f: &dyn Fn(&Metrics) -> Option<f64>| {
        let vals: Option<Vec<f64>> = rows.iter().map(|r| f(&r.metrics)).collect();
        vals.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
    };
    SummaryRow {
        mode: mode.to_string(),
        instances: rows.len(),
        n: col(&|r| r.n as f64),
        m: col(&|r| r.m as f64),
        obj1: col(&|r| r.metrics.obj1),
        obj2: col(&|r| r.metrics.obj2),
        gap: col(&|r| r.metrics.gap),
        time1: timed(&|m| m.time1),
        time2: timed(&|m| m.time2),
        speedup: timed(&|m| m.speedup),
        iters1: col(&|r| r.metrics.iters1 as f64),
        iters2: col(&|r| r.metrics.iters2 as f64),
        iter_speedup: col(&|r| r.metrics.iter_speedup),
        sol_diff: col(&|r| r.metrics.sol_diff as f64),
        accuracy: col(&|r| r.metrics.accuracy),
        infeasible: col(&|r| r.metrics.infeasible as f64),
        fixed: col(&|r| r.fixed as f64),
    }
}

/// Runs every policy on every instance against a shared plain baseline.
/// `Policy::None` yields the baseline row itself.
pub fn bench_run(
    instances: &[(String, IpInstance)],
    policies: &[Policy],
    cfg: &BenchConfig,
    with_flips: bool,
) -> Result<BenchReport> {
    cfg.run.validate()?;
    cfg.admm.validate()?;
    let per_instance: Vec<Result<(Vec<BenchRow>, FlipHistogram)>> = instances
        .par_iter()
        .map(|(name, inst)| bench_instance(name, inst, policies, cfg))
        .collect();
    let mut rows = Vec::new();
    let mut flips = FlipHistogram::from_counts::<u32>(&[], FLIP_BIN_WIDTH);
    for part in per_instance {
        let (r, h) = part?;
        rows.extend(r);
        flips.merge(&h);
    }
    // instance-major order from the workers; regroup by mode for the table
    let modes: Vec<String> = policies.iter().map(|p| p.name().to_string()).collect();
    let mut ordered = Vec::with_capacity(rows.len());
    for mode in &modes {
        ordered.extend(rows.iter().filter(|r| &r.mode == mode).cloned());
    }
    let summary = modes
        .iter()
        .map(|mode| {
            let group: Vec<&BenchRow> = ordered.iter().filter(|r| &r.mode == mode).collect();
            summarise(mode, &group)
        })
        .collect();
    Ok(BenchReport {
        config: cfg.clone(),
        modes,
        rows: ordered,
        summary,
        flips: with_flips.then_some(flips),
    })
}

fn bench_instance(
    name: &str,
    inst: &IpInstance,
    policies: &[Policy],
    cfg: &BenchConfig,
) -> Result<(Vec<BenchRow>, FlipHistogram)> {
    let params = AdmmParams {
        max_iters: cfg.run.max_iters,
        ..cfg.admm.clone()
    };
    let plain = solve(inst, &params, |_, _| {})?;
    let t1 = plain.wall_time.as_secs_f64();
    let flips = FlipHistogram::from_counts(plain.trace.flips(), FLIP_BIN_WIDTH);
    let mut rows = Vec::with_capacity(policies.len());
    for policy in policies {
        let (x2, obj2, iters2, t2, fixed, termination) = match policy {
            Policy::None => (plain.x.clone(), plain.objective, plain.iterations, t1, 0, None),
            _ => {
                let (sol, log) = run(inst, &cfg.run, policy, &params)?;
                let fixed = log.total_fixed();
                (sol.x, sol.objective, sol.iterations, sol.wall_time.as_secs_f64(), fixed, Some(log.termination))
            }
        };
        let times = cfg.with_timing.then_some((t1, t2));
        let metrics = Metrics::compare(inst, &plain.x, plain.objective, plain.iterations, &x2, obj2, iters2, times)?;
        rows.push(BenchRow {
            instance: name.to_string(),
            mode: policy.name().to_string(),
            n: inst.n(),
            m: inst.m(),
            metrics,
            fixed,
            termination,
        });
    }
    Ok((rows, flips))
}

/// Mean outcome of one fixing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub infeasible: f64,
    pub gap: f64,
    pub iter_speedup: f64,
    pub fixed: f64,
    /// Instances on which no variable survived the first block.
    pub all_fixed_first_block: usize,
}

/// Runs `policy` at every threshold in `deltas` on every instance.
pub fn delta_sweep(
    instances: &[IpInstance],
    policy: &Policy,
    deltas: &[f64],
    cfg: &BenchConfig,
) -> Result<Vec<SweepRow>> {
    let params = AdmmParams {
        max_iters: cfg.run.max_iters,
        ..cfg.admm.clone()
    };
    let baselines: Vec<_> = instances
        .par_iter()
        .map(|inst| solve(inst, &params, |_, _| {}))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let run_cfg = RunConfig { delta, ..cfg.run.clone() };
        run_cfg.validate()?;
        let results: Vec<_> = instances
            .par_iter()
            .map(|inst| run(inst, &run_cfg, policy, &params))
            .collect::<Result<_>>()?;
        let mut metrics = Vec::with_capacity(instances.len());
        let mut fixed = Vec::with_capacity(instances.len());
        let mut first_block = 0;
        for ((inst, base), (sol, log)) in instances.iter().zip(&baselines).zip(&results) {
            metrics.push(Metrics::compare(
                inst,
                &base.x,
                base.objective,
                base.iterations,
                &sol.x,
                sol.objective,
                sol.iterations,
                None,
            )?);
            fixed.push(log.total_fixed() as f64);
            if log.rounds.first().is_some_and(|r| r.remaining == 0) {
                first_block += 1;
            }
        }
        out.push(SweepRow {
            delta,
            infeasible: mean(metrics.iter().map(|m| m.infeasible as f64)),
            gap: mean(metrics.iter().map(|m| m.gap)),
            iter_speedup: mean(metrics.iter().map(|m| m.iter_speedup)),
            fixed: mean(fixed.into_iter()),
            all_fixed_first_block: first_block,
        });
    }
    Ok(out)
}

/// Whether mean infeasibility never rises as `delta` grows (reported, not
/// enforced).
pub fn infeasible_trend_non_increasing(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| w[1].delta < w[0].delta || w[1].infeasible <= w[0].infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_auction, GeneratorConfig};

    fn small_set(k: u64) -> Vec<(String, IpInstance)> {
        (0..k)
            .map(|s| {
                let cfg = GeneratorConfig { n: 40, items: 12, density: 0.15, seed: s, ..Default::default() };
                (format!("auction-{s}"), generate_auction(&cfg).unwrap())
            })
            .collect()
    }

    fn config() -> BenchConfig {
        BenchConfig {
            run: RunConfig { beta: 20, delta: 0.9, max_iters: 3000 },
            admm: AdmmParams::default(),
            with_timing: false,
        }
    }

    #[test]
    fn rows_and_summaries() {
        let report = bench_run(&small_set(3), &[Policy::None, Policy::Heuristic], &config(), true).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert_eq!(report.summary.len(), 2);
        let csv = report.csv_string();
        assert_eq!(csv.lines().count(), 1 + 6 + 2);
        let plain = report.summary_for("plain").unwrap();
        assert_eq!(plain.gap, 0.0);
        assert_eq!(plain.iter_speedup, 1.0);
        assert_eq!(plain.accuracy, 100.0);
        assert!(plain.time1.is_none());
        assert_eq!(report.flips.as_ref().unwrap().total, 120);
        assert_eq!(csv, bench_run(&small_set(3), &[Policy::None, Policy::Heuristic], &config(), true).unwrap().csv_string());
    }

    #[test]
    fn sweep_reports_every_delta() {
        let insts: Vec<IpInstance> = small_set(2).into_iter().map(|(_, i)| i).collect();
        let rows = delta_sweep(&insts, &Policy::Heuristic, &[0.5, 0.9, 1.0], &config()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].fixed, 0.0);
        assert_eq!(rows[2].gap, 0.0);
    }
}
