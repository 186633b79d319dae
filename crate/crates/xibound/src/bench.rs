//! Benchmark orchestration: run the staircase task for a set of estimators
//! and seeds, write one trace CSV per run plus a bias/variance/MSE summary,
//! and re-summarize existing trace directories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mi_estimators::{train_step, Estimator};
use crate::neural_net::{AdamState, DiscriminatorNet};
use crate::synth_data::{
    derive_rng, derive_stream_seed, rho_for_mi, GaussianSampler, GaussianTaskSpec,
    StaircaseSchedule, Transform,
};

pub const TRACE_HEADER: &str = "iteration,estimator,objective,mi_estimate,true_mi,seed,diverged";

/// Stops glibc from handing the training loop's large activation buffers
/// back to the kernel on every iteration (page-fault churn costs ~25% of a
/// run). No-op off Linux. Applied once, automatically, before training.
fn tune_allocator_for_training() {
    #[cfg(target_os = "linux")]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        ONCE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(-1 /* M_TRIM_THRESHOLD */, 1 << 30);
        });
    }
}
pub const SUMMARY_HEADER: &str = "estimator,target_mi,bias,variance,mse,n_seeds";
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.2;

/// A full benchmark configuration; the flat TOML file uses exactly these
/// keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    #[serde(default)]
    pub transform: Transform,
    /// `(target_mi_nats, iterations)` pairs, run in order.
    pub schedule: Vec<(f64, usize)>,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
    pub batch_size: usize,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be non-empty".into()));
        }
        StaircaseSchedule::new(self.schedule.clone())?;
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> StaircaseSchedule {
        StaircaseSchedule::new(self.schedule.clone()).expect("validated")
    }
}

/// One trace line; field order matches [`TRACE_HEADER`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub estimator: Estimator,
    pub objective: f64,
    pub mi_estimate: f64,
    pub true_mi: f64,
    pub seed: u64,
    pub diverged: bool,
}

impl TraceRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.estimator,
            self.objective,
            self.mi_estimate,
            self.true_mi,
            self.seed,
            self.diverged
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad trace row: {line}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        Ok(TraceRow {
            iteration: f[0].parse().map_err(|_| bad())?,
            estimator: f[1].parse()?,
            objective: f[2].parse().map_err(|_| bad())?,
            mi_estimate: f[3].parse().map_err(|_| bad())?,
            true_mi: f[4].parse().map_err(|_| bad())?,
            seed: f[5].parse().map_err(|_| bad())?,
            diverged: f[6].parse().map_err(|_| bad())?,
        })
    }
}

/// One summary line; field order matches [`SUMMARY_HEADER`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub target_mi: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub n_seeds: usize,
}

impl SummaryRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.estimator, self.target_mi, self.bias, self.variance, self.mse, self.n_seeds
        )
    }
}

/// Bias/variance/MSE per (estimator, staircase step), canonical order.
#[derive(Debug, Clone, Default)]
pub struct MetricsSummary {
    pub rows: Vec<SummaryRow>,
}

impl MetricsSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.to_csv());
        }
        out
    }
}

/// Runs one (estimator, seed) training loop over the schedule and returns its
/// trace. The sampler and net seeds are derived from `(seed, estimator)` so
/// no two runs share a random stream.
pub fn run_single(
    config: &RunConfig,
    estimator: Estimator,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    tune_allocator_for_training();
    let est_idx = Estimator::ALL
        .iter()
        .position(|&e| e == estimator)
        .expect("known estimator") as u64;
    let spec = GaussianTaskSpec::new(config.d, 0.0, config.transform)?;
    let mut sampler = GaussianSampler::new(spec, derive_stream_seed(seed, 2 * est_idx));
    let mut net = DiscriminatorNet::init(config.d, &mut derive_rng(seed, 2 * est_idx + 1))?;
    let mut opt = AdamState::new(&net);

    let schedule = config.schedule();
    let mut rows = Vec::with_capacity(schedule.total_iterations());
    let mut iteration = 0usize;
    for &(target_mi, iters) in &schedule.steps {
        sampler.set_rho(rho_for_mi(target_mi, config.d)?)?;
        for _ in 0..iters {
            let batch = sampler.sample_batch(config.batch_size);
            let step = train_step(estimator, &mut net, &mut opt, &batch)?;
            rows.push(TraceRow {
                iteration,
                estimator,
                objective: step.objective,
                mi_estimate: step.mi_estimate,
                true_mi: target_mi,
                seed,
                diverged: step.diverged,
            });
            iteration += 1;
        }
    }
    Ok(rows)
}

fn trace_file_name(estimator: Estimator, seed: u64) -> String {
    format!("trace_{estimator}_seed{seed}.csv")
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs the whole benchmark: every (estimator, seed) pair in parallel, one
/// trace CSV each, the effective config echoed to `config.toml`, and
/// `summary.csv` computed over the default evaluation window. Returns the
/// summary.
pub fn run_staircase(config: &RunConfig) -> Result<MetricsSummary> {
    config.validate()?;
    fs::create_dir_all(&config.output)?;
    fs::write(config.output.join("config.toml"), config.to_toml())?;

    let mut jobs: Vec<(Estimator, u64)> = Vec::new();
    for &e in &config.estimators {
        for &s in &config.seeds {
            jobs.push((e, s));
        }
    }
    let traces: Vec<Vec<TraceRow>> = jobs
        .par_iter()
        .map(|&(estimator, seed)| {
            let start = Instant::now();
            let rows = run_single(config, estimator, seed)?;
            write_trace(&config.output.join(trace_file_name(estimator, seed)), &rows)?;
            eprintln!(
                "run {estimator} seed {seed}: {:.1} s",
                start.elapsed().as_secs_f64()
            );
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let all: Vec<TraceRow> = traces.into_iter().flatten().collect();
    let summary = summarize(&all, DEFAULT_WINDOW_FRACTION)?;
    fs::write(config.output.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}

/// Reads every `trace_*.csv` under `dir` back into memory.
pub fn read_traces(dir: &Path) -> Result<Vec<TraceRow>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("trace_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no trace_*.csv files under {dir:?}")));
    }
    let mut rows = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == TRACE_HEADER => {}
            _ => return Err(Error::Config(format!("{f:?} has a bad header"))),
        }
        for line in lines {
            if !line.is_empty() {
                rows.push(TraceRow::parse(line)?);
            }
        }
    }
    Ok(rows)
}

/// The windowed per-seed estimate of one step of one run: the mean
/// `mi_estimate` over the final `window_fraction` of the step, or `+∞` if
/// any in-window row diverged or is non-finite.
fn windowed_estimate(step_rows: &[&TraceRow], window_fraction: f64) -> f64 {
    let n = step_rows.len();
    let w = ((n as f64 * window_fraction).ceil() as usize).clamp(1, n);
    let window = &step_rows[n - w..];
    if window.iter().any(|r| r.diverged || !r.mi_estimate.is_finite()) {
        return f64::INFINITY;
    }
    window.iter().map(|r| r.mi_estimate).sum::<f64>() / w as f64
}

/// Per-(estimator, step) bias, population variance across seeds, and
/// `mse = bias² + variance`. Any seed whose evaluation window contains a
/// diverged row makes the whole cell infinite.
pub fn summarize(traces: &[TraceRow], window_fraction: f64) -> Result<MetricsSummary> {
    if traces.is_empty() {
        return Err(Error::Config("no trace rows to summarize".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }

    // Group rows by (estimator, seed) preserving iteration order; within a
    // run, a step is a maximal run of equal true_mi.
    let mut runs: Vec<((Estimator, u64), Vec<&TraceRow>)> = Vec::new();
    for row in traces {
        let key = (row.estimator, row.seed);
        match runs.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => runs.push((key, vec![row])),
        }
    }
    for (_, rows) in &mut runs {
        rows.sort_by_key(|r| r.iteration);
    }

    // estimates[(estimator, target_mi_bits)] -> per-seed windowed values
    let mut cells: Vec<(Estimator, f64, Vec<f64>)> = Vec::new();
    for ((estimator, _seed), rows) in &runs {
        let mut start = 0;
        while start < rows.len() {
            let target = rows[start].true_mi;
            let mut end = start;
            while end < rows.len() && rows[end].true_mi == target {
                end += 1;
            }
            let est = windowed_estimate(&rows[start..end], window_fraction);
            match cells
                .iter_mut()
                .find(|(e, t, _)| *e == *estimator && *t == target)
            {
                Some((_, _, v)) => v.push(est),
                None => cells.push((*estimator, target, vec![est])),
            }
            start = end;
        }
    }

    let mut rows = Vec::with_capacity(cells.len());
    for (estimator, target_mi, ests) in cells {
        let n = ests.len();
        let (bias, variance, mse) = if ests.iter().any(|e| !e.is_finite()) {
            (f64::INFINITY, f64::INFINITY, f64::INFINITY)
        } else {
            let mean = ests.iter().sum::<f64>() / n as f64;
            let bias = mean - target_mi;
            let variance = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
            (bias, variance, bias * bias + variance)
        };
        rows.push(SummaryRow {
            estimator,
            target_mi,
            bias,
            variance,
            mse,
            n_seeds: n,
        });
    }
    rows.sort_by(|a, b| {
        let ka = Estimator::ALL.iter().position(|&e| e == a.estimator);
        let kb = Estimator::ALL.iter().position(|&e| e == b.estimator);
        ka.cmp(&kb).then(a.target_mi.total_cmp(&b.target_mi))
    });
    Ok(MetricsSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(est: Estimator, it: usize, mi: f64, true_mi: f64, seed: u64) -> TraceRow {
        TraceRow {
            iteration: it,
            estimator: est,
            objective: mi,
            mi_estimate: mi,
            true_mi,
            seed,
            diverged: false,
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = RunConfig {
            d: 5,
            transform: Transform::Cubic,
            schedule: vec![(2.0, 4000), (4.0, 4000)],
            seeds: vec![0, 1],
            estimators: vec![Estimator::JsdLb, Estimator::Cpc],
            batch_size: 64,
            output: PathBuf::from("runs/demo"),
        };
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.d, 5);
        assert_eq!(back.transform, Transform::Cubic);
        assert_eq!(back.schedule, cfg.schedule);
        assert_eq!(back.estimators, cfg.estimators);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig {
            d: 5,
            transform: Transform::Identity,
            schedule: vec![(2.0, 10)],
            seeds: vec![0],
            estimators: vec![Estimator::Mine],
            batch_size: 2,
            output: PathBuf::from("x"),
        };
        assert!(cfg.validate().is_ok());
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 2;
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn summarize_constant_traces() {
        let mut traces = Vec::new();
        for seed in 0..3 {
            for it in 0..10 {
                traces.push(row(Estimator::Mine, it, 2.0, 2.0, seed));
            }
        }
        let s = summarize(&traces, 0.2).unwrap();
        assert_eq!(s.rows.len(), 1);
        let r = &s.rows[0];
        assert_eq!((r.bias, r.variance, r.mse), (0.0, 0.0, 0.0));
        assert_eq!(r.n_seeds, 3);
    }

    #[test]
    fn summarize_two_point_variance() {
        let mut traces = Vec::new();
        for (seed, v) in [(0u64, 2.5), (1, 1.5)] {
            for it in 0..10 {
                traces.push(row(Estimator::Nwj, it, v, 2.0, seed));
            }
        }
        let s = summarize(&traces, 0.5).unwrap();
        let r = &s.rows[0];
        assert!((r.bias - 0.0).abs() < 1e-12);
        assert!((r.variance - 0.25).abs() < 1e-12);
        assert!((r.mse - 0.25).abs() < 1e-12);
    }

    #[test]
    fn summarize_window_only_sees_tail() {
        // first 8 iterations junk, last 2 exact
        let mut traces = Vec::new();
        for it in 0..10 {
            let v = if it < 8 { 100.0 } else { 4.0 };
            traces.push(row(Estimator::Cpc, it, v, 4.0, 0));
        }
        let s = summarize(&traces, 0.2).unwrap();
        assert!((s.rows[0].bias).abs() < 1e-12);
    }

    #[test]
    fn summarize_segments_steps_by_true_mi() {
        let mut traces = Vec::new();
        for it in 0..10 {
            traces.push(row(Estimator::Mine, it, 1.9, 2.0, 0));
        }
        for it in 10..20 {
            traces.push(row(Estimator::Mine, it, 4.2, 4.0, 0));
        }
        let s = summarize(&traces, 1.0).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!((s.rows[0].bias + 0.1).abs() < 1e-12);
        assert!((s.rows[1].bias - 0.2).abs() < 1e-12);
    }

    #[test]
    fn summarize_marks_diverged_cells_infinite() {
        let mut traces = Vec::new();
        for seed in 0..2 {
            for it in 0..10 {
                let mut r = row(Estimator::Mine, it, 2.0, 2.0, seed);
                if seed == 1 && it == 9 {
                    r.diverged = true;
                }
                traces.push(r);
            }
        }
        let s = summarize(&traces, 0.2).unwrap();
        assert!(s.rows[0].bias.is_infinite());
        assert!(s.rows[0].mse.is_infinite());
        assert!(s.to_csv().contains(",inf,"));
    }

    #[test]
    fn summarize_mse_identity_holds() {
        let mut traces = Vec::new();
        for seed in 0..5 {
            for it in 0..20 {
                traces.push(row(
                    Estimator::TwoStep,
                    it,
                    2.0 + 0.1 * seed as f64,
                    2.0,
                    seed as u64,
                ));
            }
        }
        let s = summarize(&traces, 0.2).unwrap();
        let r = &s.rows[0];
        assert!((r.mse - r.bias * r.bias - r.variance).abs() < 1e-9);
    }

    #[test]
    fn trace_rows_round_trip_csv() {
        let r = TraceRow {
            iteration: 17,
            estimator: Estimator::JsdLb,
            objective: 1.25,
            mi_estimate: f64::INFINITY,
            true_mi: 2.0,
            seed: 3,
            diverged: true,
        };
        let line = r.to_csv();
        assert!(line.contains(",inf,"));
        assert_eq!(TraceRow::parse(&line).unwrap(), r);
    }

    #[test]
    fn tiny_end_to_end_run_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            d: 1,
            transform: Transform::Identity,
            schedule: vec![(1.0, 3), (2.0, 3)],
            seeds: vec![0],
            estimators: vec![Estimator::Nwj],
            batch_size: 4,
            output: dir.path().join("out"),
        };
        let s1 = run_staircase(&cfg).unwrap();
        let bytes1 = fs::read(cfg.output.join("trace_nwj_seed0.csv")).unwrap();
        assert_eq!(s1.rows.len(), 2);

        let rows = read_traces(&cfg.output).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].iteration, 0);
        assert_eq!(rows[5].true_mi, 2.0);

        // same config, fresh directory: byte-identical traces
        let cfg2 = RunConfig {
            output: dir.path().join("out2"),
            ..cfg.clone()
        };
        run_staircase(&cfg2).unwrap();
        let bytes2 = fs::read(cfg2.output.join("trace_nwj_seed0.csv")).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn single_iteration_schedule_yields_five_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            d: 1,
            transform: Transform::Identity,
            schedule: vec![(2.0, 1), (4.0, 1), (6.0, 1), (8.0, 1), (10.0, 1)],
            seeds: vec![7],
            estimators: vec![Estimator::TwoStep],
            batch_size: 4,
            output: dir.path().join("out"),
        };
        run_staircase(&cfg).unwrap();
        let rows = read_traces(&cfg.output).unwrap();
        assert_eq!(rows.len(), 5);
        let targets: Vec<f64> = rows.iter().map(|r| r.true_mi).collect();
        assert_eq!(targets, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    }
}
