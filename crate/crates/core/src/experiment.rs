//! Experiment drivers behind the command-line subcommands: multi-seed
//! training, parameter sweeps, reward-mode comparison and frozen evaluation,
//! together with their CSV and checkpoint outputs.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qlearn::{feature_dim, DqnAgent, Mlp};
use crate::reward::RewardMode;
use crate::rng::{stream, Stream};
use crate::trainer::{evaluate_records, run_training, window_metrics, EpisodeRecord, MetricsRow};

/// One seed's finished training run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub run_id: String,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub agents: Vec<DqnAgent>,
    /// Frozen-weight evaluation; `None` when no evaluation episodes were asked for.
    pub eval: Option<MetricsRow>,
}

#[derive(Debug, Serialize)]
struct MetricsCsvRow<'a> {
    run_id: &'a str,
    seed: u64,
    episode: usize,
    epsilon: f64,
    success: u8,
    steps: u32,
    min_final_battery: f64,
    sum_rewards: f64,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    run_id: &'a str,
    seed: u64,
    episodes: usize,
    epsilon: f64,
    success_rate: f64,
    mean_steps: f64,
}

#[derive(Debug, Serialize)]
struct ComparisonRow<'a> {
    run_id: &'a str,
    axis: &'a str,
    value: &'a str,
    seed: u64,
    success_rate: f64,
    mean_steps: f64,
}

/// Trains one seed and, if configured, evaluates the frozen agents.
pub fn train_seed(config: &RunConfig, run_id: &str, seed: u64) -> Result<SeedRun> {
    let train = config.train_config(seed)?;
    let (mut agents, records) = run_training(train.clone())?;
    for agent in &mut agents {
        agent.release_replay();
    }
    let eval = if config.run.eval_episodes == 0 {
        None
    } else {
        let evaluated = evaluate_records(
            &agents,
            &train,
            config.run.eval_episodes,
            config.run.eval_epsilon,
        )?;
        window_metrics(&evaluated, evaluated.len())
            .into_iter()
            .next()
    };
    Ok(SeedRun {
        run_id: run_id.to_string(),
        seed,
        records,
        agents,
        eval,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("--workers: {e}")))
}

/// Trains every `(config, run_id, seed)` job on a pool of `workers` threads.
/// Results come back in job order whatever the scheduling.
pub fn run_jobs(jobs: &[(RunConfig, String, u64)], workers: usize) -> Result<Vec<SeedRun>> {
    pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|(config, run_id, seed)| train_seed(config, run_id, *seed))
            .collect()
    })
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

const METRICS_HEADER: [&str; 8] = [
    "run_id",
    "seed",
    "episode",
    "epsilon",
    "success",
    "steps",
    "min_final_battery",
    "sum_rewards",
];
const CURVE_HEADER: [&str; 3] = ["window_center_epsilon", "success_rate", "mean_steps"];
const SUMMARY_HEADER: [&str; 6] = [
    "run_id",
    "seed",
    "episodes",
    "epsilon",
    "success_rate",
    "mean_steps",
];
const COMPARISON_HEADER: [&str; 6] = [
    "run_id",
    "axis",
    "value",
    "seed",
    "success_rate",
    "mean_steps",
];

pub fn write_metrics_csv(path: &Path, runs: &[SeedRun]) -> Result<()> {
    let mut w = csv_writer(path, &METRICS_HEADER)?;
    for run in runs {
        for r in &run.records {
            w.serialize(MetricsCsvRow {
                run_id: &run.run_id,
                seed: run.seed,
                episode: r.episode,
                epsilon: r.epsilon_at_start,
                success: u8::from(r.success),
                steps: r.steps_used,
                min_final_battery: r.min_final_battery(),
                sum_rewards: r.sum_rewards(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, records: &[EpisodeRecord], window: usize) -> Result<()> {
    let mut w = csv_writer(path, &CURVE_HEADER)?;
    for row in window_metrics(records, window) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(path: &Path, runs: &[SeedRun], episodes: usize, epsilon: f64) -> Result<()> {
    let mut w = csv_writer(path, &SUMMARY_HEADER)?;
    for run in runs {
        if let Some(m) = run.eval {
            w.serialize(SummaryRow {
                run_id: &run.run_id,
                seed: run.seed,
                episodes,
                epsilon,
                success_rate: m.success_rate,
                mean_steps: m.mean_steps,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_path(dir: &Path, drone: usize) -> PathBuf {
    dir.join(format!("drone_{drone}.ckpt"))
}

pub fn save_checkpoints(dir: &Path, agents: &[DqnAgent]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, agent) in agents.iter().enumerate() {
        agent.policy().save(&checkpoint_path(dir, k))?;
    }
    Ok(())
}

/// Loads one policy network per drone of `config`'s fleet and checks that
/// each matches the configured layer widths.
pub fn load_checkpoints(dir: &Path, config: &RunConfig) -> Result<Vec<DqnAgent>> {
    let train = config.train_config(config.run.seeds[0])?;
    let k = train.mission.drone_count();
    let dims = train.agent.layer_dims(feature_dim(k));
    (0..k)
        .map(|i| {
            let path = checkpoint_path(dir, i);
            let net = Mlp::load(&path)?;
            if net.dims() != dims.as_slice() {
                return Err(Error::Checkpoint {
                    path,
                    reason: format!(
                        "layer dims {:?} do not match the config's {:?}",
                        net.dims(),
                        dims
                    ),
                });
            }
            DqnAgent::from_network(
                net,
                train.agent.clone(),
                stream(train.master_seed, Stream::Exploration(i)),
                stream(train.master_seed, Stream::Replay(i)),
            )
        })
        .collect()
}

/// The resolved configuration, preceded by a timestamp comment so that the
/// file still parses back to the same configuration.
pub fn manifest_text(config: &RunConfig) -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# written at unix time {secs}\n{}", config.to_toml_string())
}

/// Writes a training run's files under `out`: `manifest.toml`,
/// `metrics.csv`, `eval.csv`, and per seed `curve_seed<S>.csv` and
/// `checkpoints/seed_<S>/drone_<k>.ckpt`.
pub fn write_run(out: &Path, config: &RunConfig, runs: &[SeedRun]) -> Result<()> {
    fs::create_dir_all(out)?;
    File::create(out.join("manifest.toml"))?.write_all(manifest_text(config).as_bytes())?;
    write_metrics_csv(&out.join("metrics.csv"), runs)?;
    write_summary_csv(
        &out.join("eval.csv"),
        runs,
        config.run.eval_episodes,
        config.run.eval_epsilon,
    )?;
    for run in runs {
        write_curve_csv(
            &out.join(format!("curve_seed{}.csv", run.seed)),
            &run.records,
            config.run.window,
        )?;
        save_checkpoints(
            &out.join("checkpoints").join(format!("seed_{}", run.seed)),
            &run.agents,
        )?;
    }
    Ok(())
}

fn with_seeds(config: &RunConfig, seeds: Option<&[u64]>) -> RunConfig {
    let mut c = config.clone();
    if let Some(s) = seeds {
        c.run.seeds = s.to_vec();
    }
    c
}

pub fn cmd_train(
    config: &RunConfig,
    out: &Path,
    seeds: Option<&[u64]>,
    workers: usize,
) -> Result<Vec<SeedRun>> {
    let config = with_seeds(config, seeds);
    let jobs: Vec<_> = config
        .run
        .seeds
        .iter()
        .map(|&s| (config.clone(), "train".to_string(), s))
        .collect();
    let runs = run_jobs(&jobs, workers)?;
    write_run(out, &config, &runs)?;
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Psi,
    SyncF,
    Density,
    Grid,
    RewardMode,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "psi" => Self::Psi,
            "f" => Self::SyncF,
            "density" => Self::Density,
            "grid" => Self::Grid,
            "reward_mode" => Self::RewardMode,
            other => {
                return Err(Error::Config(format!(
                    "--axis: unknown axis {other:?}; expected psi, f, density, grid or reward_mode"
                )))
            }
        })
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Psi => "psi",
            Self::SyncF => "f",
            Self::Density => "density",
            Self::Grid => "grid",
            Self::RewardMode => "reward_mode",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let bad = || {
            Error::Config(format!(
                "--values: {value:?} is not valid for axis {}",
                self.name()
            ))
        };
        let mut c = base.clone();
        match self {
            Self::Psi => c.agent.psi = value.parse().map_err(|_| bad())?,
            Self::SyncF => c.agent.sync_f = value.parse().map_err(|_| bad())?,
            Self::Density => c.tasks.count = value.parse().map_err(|_| bad())?,
            Self::Grid => {
                let w: usize = value.parse().map_err(|_| bad())?;
                c.grid.width = w;
                c.grid.height = w;
                c.tasks.count = density_matched_tasks(w);
            }
            Self::RewardMode => {
                c.reward.mode = match value {
                    "individual" => RewardMode::Individual,
                    "shared" => RewardMode::Shared,
                    _ => return Err(bad()),
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Task count for a `width`×`width` grid at the density of ten tasks on 5×5:
/// 10, 15, 20 and 26 for widths 5 to 8.
pub fn density_matched_tasks(width: usize) -> usize {
    (2 * width * width + 4) / 5
}

pub fn parse_values(arg: &str) -> Result<Vec<String>> {
    let values: Vec<String> = arg
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        return Err(Error::Config("--values: need at least one value".into()));
    }
    Ok(values)
}

/// One sub-run per value under `out/<axis>-<value>/`, plus `comparison.csv`
/// with one evaluation row per value and seed.
pub fn cmd_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    out: &Path,
    seeds: Option<&[u64]>,
    workers: usize,
) -> Result<Vec<(String, Vec<SeedRun>)>> {
    if values.is_empty() {
        return Err(Error::Config("--values: need at least one value".into()));
    }
    let base = with_seeds(base, seeds);
    let configs = values
        .iter()
        .map(|v| axis.apply(&base, v))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (v, c) in values.iter().zip(&configs) {
        for &s in &c.run.seeds {
            jobs.push((c.clone(), format!("{}-{v}", axis.name()), s));
        }
    }
    let mut runs = run_jobs(&jobs, workers)?.into_iter();

    let mut grouped = Vec::new();
    for (v, c) in values.iter().zip(&configs) {
        let group: Vec<SeedRun> = runs.by_ref().take(c.run.seeds.len()).collect();
        write_run(&out.join(format!("{}-{v}", axis.name())), c, &group)?;
        grouped.push((v.clone(), group));
    }

    let mut w = csv_writer(&out.join("comparison.csv"), &COMPARISON_HEADER)?;
    for (v, group) in &grouped {
        for run in group {
            if let Some(m) = run.eval {
                w.serialize(ComparisonRow {
                    run_id: &run.run_id,
                    axis: axis.name(),
                    value: v,
                    seed: run.seed,
                    success_rate: m.success_rate,
                    mean_steps: m.mean_steps,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(grouped)
}

fn mode_name(mode: RewardMode) -> &'static str {
    match mode {
        RewardMode::Individual => "individual",
        RewardMode::Shared => "shared",
    }
}

/// Trains both configurations and writes `out/a/`, `out/b/` and a
/// side-by-side `comparison.csv`. Returns the two groups of runs.
pub fn cmd_compare(
    first: &RunConfig,
    second: &RunConfig,
    out: &Path,
    seeds: Option<&[u64]>,
    workers: usize,
) -> Result<[Vec<SeedRun>; 2]> {
    let configs = [with_seeds(first, seeds), with_seeds(second, seeds)];
    let labels = ["a", "b"];
    let mut jobs = Vec::new();
    for (label, c) in labels.iter().zip(&configs) {
        for &s in &c.run.seeds {
            jobs.push((c.clone(), (*label).to_string(), s));
        }
    }
    let mut runs = run_jobs(&jobs, workers)?.into_iter();
    let a: Vec<SeedRun> = runs.by_ref().take(configs[0].run.seeds.len()).collect();
    let b: Vec<SeedRun> = runs.collect();
    write_run(&out.join("a"), &configs[0], &a)?;
    write_run(&out.join("b"), &configs[1], &b)?;

    let mut w = csv_writer(&out.join("comparison.csv"), &COMPARISON_HEADER)?;
    for (group, c) in [(&a, &configs[0]), (&b, &configs[1])] {
        for run in group {
            if let Some(m) = run.eval {
                w.serialize(ComparisonRow {
                    run_id: &run.run_id,
                    axis: "reward_mode",
                    value: mode_name(c.reward.mode),
                    seed: run.seed,
                    success_rate: m.success_rate,
                    mean_steps: m.mean_steps,
                })?;
            }
        }
    }
    w.flush()?;
    Ok([a, b])
}

/// Frozen evaluation of saved checkpoints. Writes one metrics row per
/// episode to `out/eval_metrics.csv` and returns the aggregate.
pub fn cmd_eval(
    checkpoint_dir: &Path,
    config: &RunConfig,
    episodes: usize,
    epsilon: f64,
    out: &Path,
) -> Result<Option<MetricsRow>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!(
            "--epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let agents = load_checkpoints(checkpoint_dir, config)?;
    let train = config.train_config(config.run.seeds[0])?;
    let records = evaluate_records(&agents, &train, episodes, epsilon)?;
    fs::create_dir_all(out)?;
    let run = SeedRun {
        run_id: "eval".into(),
        seed: train.master_seed,
        eval: window_metrics(&records, records.len().max(1))
            .into_iter()
            .next(),
        records,
        agents: Vec::new(),
    };
    write_metrics_csv(&out.join("eval_metrics.csv"), std::slice::from_ref(&run))?;
    Ok(run.eval)
}

/// Median of `values`; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Median evaluation success rate and mean steps over seeds.
pub fn median_eval(runs: &[SeedRun]) -> Option<MetricsRow> {
    let evals: Vec<MetricsRow> = runs.iter().filter_map(|r| r.eval).collect();
    if evals.is_empty() {
        return None;
    }
    let succ: Vec<f64> = evals.iter().map(|m| m.success_rate).collect();
    let steps: Vec<f64> = evals.iter().map(|m| m.mean_steps).collect();
    Some(MetricsRow {
        window_center_epsilon: evals[0].window_center_epsilon,
        success_rate: median(&succ),
        mean_steps: median(&steps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_matching() {
        let k: Vec<usize> = (5..=8).map(density_matched_tasks).collect();
        assert_eq!(k, vec![10, 15, 20, 26]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn axis_application() {
        let base = RunConfig::default();
        assert_eq!(SweepAxis::Grid.apply(&base, "6").unwrap().tasks.count, 15);
        assert_eq!(SweepAxis::Psi.apply(&base, "2").unwrap().agent.psi, 2);
        assert_eq!(
            SweepAxis::RewardMode
                .apply(&base, "shared")
                .unwrap()
                .reward
                .mode,
            RewardMode::Shared
        );
        assert!(SweepAxis::Psi.apply(&base, "x").is_err());
        assert!("speed".parse::<SweepAxis>().is_err());
        assert!(parse_values(" , ").is_err());
    }
}
